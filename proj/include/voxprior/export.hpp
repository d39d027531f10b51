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
#include <filesystem>
#include <string>
#include <vector>

#include "voxprior/tsdf.hpp"

// Inspectable renderings of a single TSDF grid.
namespace voxprior::cli {

enum class ExportFormat { obj_voxels, pgm_slices, raw };
std::string export_format_name(ExportFormat f);
// Throws UsageError on an unknown name.
ExportFormat export_format_from_name(const std::string& name);

// One cube per negative voxel; cube corners on the voxel lattice are shared
// between neighbours. Always starts with a "#" header line.
void export_obj_voxels(const TsdfGrid& grid, const std::filesystem::path& path);

// [-tau, tau] -> [0, 255], rounding half up and clamping.
uint8_t slice_level(float value, float tau);

// D images <dir>/<stem>_<i>.pgm, one per x index i; row r shows y = D - 1 - r
// (up is up), column c shows z = c.
std::vector<std::filesystem::path> export_pgm_slices(const TsdfGrid& grid, const std::filesystem::path& dir,
                                                     const std::string& stem);

// Dataset block file holding this one grid.
void export_raw(const TsdfGrid& grid, const std::filesystem::path& path);

// Writes `grid` in `format` under `dir`; returns the files written.
std::vector<std::filesystem::path> export_grid(const TsdfGrid& grid, ExportFormat format,
                                               const std::filesystem::path& dir, const std::string& stem);

}  // namespace voxprior::cli
