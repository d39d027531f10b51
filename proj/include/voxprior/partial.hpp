/* Copyright 2026 The voxprior Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxprior/latent.hpp"
#include "voxprior/pvqvae.hpp"
#include "voxprior/tsdf.hpp"

// Observed patch sets for partial-shape inputs.
namespace voxprior::cli {

enum class PartialMode { bottom_half, octant, patch_list };
std::string partial_mode_name(PartialMode m);
// Throws UsageError on an unknown name.
PartialMode partial_mode_from_name(const std::string& name);

struct PartialSpec {
  PartialMode mode = PartialMode::bottom_half;
  // Octant mode: observe the intersection of the three halves instead of
  // their union.
  bool intersection = false;
  // Flat lattice indices for patch_list mode.
  std::vector<int64_t> patches;
};

// Patches observed under `spec` on a D^3 grid of P^3 patches, in lattice
// order (patch_list keeps the given order). A patch belongs to a half only
// when all of its cells do: bottom is low y, front low x, left low z.
// Throws IndexError for patch indices outside [0, d^3) and InputError on
// duplicates.
std::vector<Location> observed_locations(const PartialSpec& spec, int D, int P);

// Copy of `grid` with every patch outside `observed` set to +tau (empty).
TsdfGrid mask_grid(const TsdfGrid& grid, const std::vector<Location>& observed, int P);

struct PartialObservation {
  TsdfGrid partial;
  std::vector<Location> locations;
  ObservationSet observed;
};

PartialObservation partial_to_observation(const TsdfGrid& grid, const PartialSpec& spec, const pvqvae::PVqvae& model);

}  // namespace voxprior::cli
