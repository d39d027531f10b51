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
#include "voxprior/export.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "voxprior/errors.hpp"

namespace voxprior::cli {

namespace {

// Cube faces as corner offsets, counter-clockwise seen from outside.
constexpr std::array<std::array<std::array<int, 3>, 4>, 6> kFaces{{
    {{{0, 0, 0}, {0, 0, 1}, {0, 1, 1}, {0, 1, 0}}},
    {{{1, 0, 0}, {1, 1, 0}, {1, 1, 1}, {1, 0, 1}}},
    {{{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1}}},
    {{{0, 1, 0}, {0, 1, 1}, {1, 1, 1}, {1, 1, 0}}},
    {{{0, 0, 0}, {0, 1, 0}, {1, 1, 0}, {1, 0, 0}}},
    {{{0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}},
}};

}  // namespace

std::string export_format_name(ExportFormat f) {
  switch (f) {
    case ExportFormat::obj_voxels: return "obj_voxels";
    case ExportFormat::pgm_slices: return "pgm_slices";
    case ExportFormat::raw: return "raw";
  }
  return "raw";
}

ExportFormat export_format_from_name(const std::string& name) {
  if (name == "obj_voxels") return ExportFormat::obj_voxels;
  if (name == "pgm_slices") return ExportFormat::pgm_slices;
  if (name == "raw") return ExportFormat::raw;
  throw UsageError("--format: expected obj_voxels, pgm_slices or raw, got '" + name + "'");
}

void export_obj_voxels(const TsdfGrid& grid, const std::filesystem::path& path) {
  const int D = grid.D;
  const int64_t side = D + 1;
  std::map<int64_t, int64_t> vertex_of;
  std::vector<std::array<int, 3>> vertices;
  std::vector<std::array<int64_t, 3>> triangles;
  auto vertex = [&](int i, int j, int k) {
    const int64_t key = (i * side + j) * side + k;
    auto [it, fresh] = vertex_of.emplace(key, static_cast<int64_t>(vertices.size()) + 1);
    if (fresh) vertices.push_back({i, j, k});
    return it->second;
  };
  for (int i = 0; i < D; ++i) {
    for (int j = 0; j < D; ++j) {
      for (int k = 0; k < D; ++k) {
        if (!(grid.at(i, j, k) < 0.0f)) continue;
        for (const auto& face : kFaces) {
          std::array<int64_t, 4> q{};
          for (int c = 0; c < 4; ++c) q[static_cast<size_t>(c)] = vertex(i + face[c][0], j + face[c][1], k + face[c][2]);
          triangles.push_back({q[0], q[1], q[2]});
          triangles.push_back({q[0], q[2], q[3]});
        }
      }
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# voxprior voxel mesh: " << vertices.size() << " vertices, " << triangles.size() << " triangles\n";
  char buf[96];
  for (const auto& v : vertices) {
    std::snprintf(buf, sizeof buf, "v %.6f %.6f %.6f\n", -1.0 + 2.0 * v[0] / D, -1.0 + 2.0 * v[1] / D,
                  -1.0 + 2.0 * v[2] / D);
    out << buf;
  }
  for (const auto& t : triangles) out << "f " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

uint8_t slice_level(float value, float tau) {
  const double scaled = (static_cast<double>(value) + tau) / (2.0 * tau) * 255.0;
  return static_cast<uint8_t>(std::clamp(std::floor(scaled + 0.5), 0.0, 255.0));
}

std::vector<std::filesystem::path> export_pgm_slices(const TsdfGrid& grid, const std::filesystem::path& dir,
                                                     const std::string& stem) {
  const int D = grid.D;
  std::vector<std::filesystem::path> files;
  std::vector<uint8_t> pixels(static_cast<size_t>(D) * D);
  for (int i = 0; i < D; ++i) {
    for (int r = 0; r < D; ++r) {
      for (int c = 0; c < D; ++c) pixels[static_cast<size_t>(r * D + c)] = slice_level(grid.at(i, D - 1 - r, c), grid.tau);
    }
    char name[32];
    std::snprintf(name, sizeof name, "_%03d.pgm", i);
    files.push_back(dir / (stem + name));
    write_pgm(files.back(), D, D, pixels);
  }
  return files;
}

void export_raw(const TsdfGrid& grid, const std::filesystem::path& path) { write_tsdf_file(path, {&grid, 1}); }

std::vector<std::filesystem::path> export_grid(const TsdfGrid& grid, ExportFormat format,
                                               const std::filesystem::path& dir, const std::string& stem) {
  switch (format) {
    case ExportFormat::obj_voxels:
      export_obj_voxels(grid, dir / (stem + ".obj"));
      return {dir / (stem + ".obj")};
    case ExportFormat::pgm_slices: return export_pgm_slices(grid, dir, stem);
    case ExportFormat::raw:
      export_raw(grid, dir / (stem + ".tsdf"));
      return {dir / (stem + ".tsdf")};
  }
  return {};
}

}  // namespace voxprior::cli
