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
#include "voxprior/partial.hpp"

#include <set>

#include "voxprior/errors.hpp"

namespace voxprior::cli {

std::string partial_mode_name(PartialMode m) {
  switch (m) {
    case PartialMode::bottom_half: return "bottom_half";
    case PartialMode::octant: return "octant";
    case PartialMode::patch_list: return "patch_list";
  }
  return "bottom_half";
}

PartialMode partial_mode_from_name(const std::string& name) {
  if (name == "bottom_half") return PartialMode::bottom_half;
  if (name == "octant") return PartialMode::octant;
  if (name == "patch_list") return PartialMode::patch_list;
  throw UsageError("--mode: expected bottom_half, octant or patch_list, got '" + name + "'");
}

std::vector<Location> observed_locations(const PartialSpec& spec, int D, int P) {
  if (P < 1 || D % P != 0) throw ConfigError("partial: D must be a multiple of P");
  const int d = D / P;
  const int64_t cells = static_cast<int64_t>(d) * d * d;
  std::vector<Location> out;
  if (spec.mode == PartialMode::patch_list) {
    std::set<int64_t> seen;
    for (int64_t i : spec.patches) {
      if (i < 0 || i >= cells) throw IndexError("patch " + std::to_string(i) + " outside [0, " + std::to_string(cells) + ")");
      if (!seen.insert(i).second) throw InputError("patch " + std::to_string(i) + " listed twice");
      out.push_back(location_of(i, d));
    }
    return out;
  }
  // Patch a covers cells [a P, (a + 1) P); it is in the low half when
  // 2 (a + 1) P <= D.
  auto low = [&](int a) { return 2 * (a + 1) * P <= D; };
  for (int64_t i = 0; i < cells; ++i) {
    const Location l = location_of(i, d);
    bool keep = false;
    if (spec.mode == PartialMode::bottom_half) {
      keep = low(l.y);
    } else if (spec.intersection) {
      keep = low(l.x) && low(l.y) && low(l.z);
    } else {
      keep = low(l.x) || low(l.y) || low(l.z);
    }
    if (keep) out.push_back(l);
  }
  return out;
}

TsdfGrid mask_grid(const TsdfGrid& grid, const std::vector<Location>& observed, int P) {
  const int D = grid.D, d = D / P;
  std::vector<uint8_t> keep(static_cast<size_t>(d) * d * d, 0);
  for (const Location& l : observed) keep[static_cast<size_t>(location_index(l, d))] = 1;
  TsdfGrid out = grid;
  for (int i = 0; i < D; ++i) {
    for (int j = 0; j < D; ++j) {
      for (int k = 0; k < D; ++k) {
        if (!keep[static_cast<size_t>(location_index({i / P, j / P, k / P}, d))]) out.at(i, j, k) = grid.tau;
      }
    }
  }
  return out;
}

PartialObservation partial_to_observation(const TsdfGrid& grid, const PartialSpec& spec, const pvqvae::PVqvae& model) {
  const int P = model.config().P;
  if (grid.D != model.config().D) {
    throw DimensionError("grid resolution " + std::to_string(grid.D) + " != model resolution " +
                         std::to_string(model.config().D));
  }
  PartialObservation out;
  out.locations = observed_locations(spec, grid.D, P);
  out.partial = mask_grid(grid, out.locations, P);
  out.observed = model.encode_subset(grid, out.locations);
  return out;
}

}  // namespace voxprior::cli
