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
#include <span>
#include <string>
#include <vector>

namespace voxprior {

// D^3 truncated signed distances over [-1, 1]^3, sampled at cell centers.
// Flat index (i * D + j) * D + k with i along x, j along y (up), k along z.
struct TsdfGrid {
  int D = 0;
  float tau = 0.0f;
  std::vector<float> values;

  TsdfGrid() = default;
  TsdfGrid(int resolution, float truncation, float fill);

  int64_t size() const { return static_cast<int64_t>(values.size()); }
  int64_t index(int i, int j, int k) const { return (static_cast<int64_t>(i) * D + j) * D + k; }
  float& at(int i, int j, int k) { return values[static_cast<size_t>(index(i, j, k))]; }
  float at(int i, int j, int k) const { return values[static_cast<size_t>(index(i, j, k))]; }
  bool operator==(const TsdfGrid&) const = default;
};

// Coordinate of the center of cell i along one axis.
inline double cell_center(int i, int D) { return -1.0 + (2.0 * i + 1.0) / D; }

enum class Axis { x = 0, y = 1, z = 2 };
Axis axis_from_name(const std::string& name);
const char* axis_name(Axis axis);

// Orthographic occupancy along `axis`. Pixel (a, b) indexes the remaining two
// axes in x, y, z order; pixels[a * D + b].
struct Silhouette {
  Axis axis = Axis::z;
  int D = 0;
  std::vector<uint8_t> pixels;

  bool at(int a, int b) const { return pixels[static_cast<size_t>(a * D + b)] != 0; }
  bool operator==(const Silhouette&) const = default;
};

Silhouette silhouette_project(const TsdfGrid& grid, Axis axis);

// Dataset block file: "TSDF", u32 version, u32 D, f32 tau, u32 count, then
// count D^3 blocks of f32.
inline constexpr uint32_t kTsdfVersion = 1;
void write_tsdf_file(const std::filesystem::path& path, std::span<const TsdfGrid> grids);
std::vector<TsdfGrid> read_tsdf_file(const std::filesystem::path& path);

// Binary greymap (P5, maxval 255).
void write_pgm(const std::filesystem::path& path, int width, int height, std::span<const uint8_t> pixels);
std::vector<uint8_t> read_pgm(const std::filesystem::path& path, int& width, int& height);

}  // namespace voxprior
