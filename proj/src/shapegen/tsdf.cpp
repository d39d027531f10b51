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
#include "voxprior/tsdf.hpp"

#include <fstream>

#include "voxprior/binary_io.hpp"
#include "voxprior/errors.hpp"

namespace voxprior {

TsdfGrid::TsdfGrid(int resolution, float truncation, float fill) : D(resolution), tau(truncation) {
  if (resolution <= 0) throw ParameterError("grid resolution must be positive, got " + std::to_string(resolution));
  if (!(truncation > 0.0f)) throw ParameterError("truncation must be positive");
  values.assign(static_cast<size_t>(resolution) * resolution * resolution, fill);
}

Axis axis_from_name(const std::string& name) {
  if (name == "x") return Axis::x;
  if (name == "y") return Axis::y;
  if (name == "z") return Axis::z;
  throw ParameterError("unknown axis '" + name + "'");
}

const char* axis_name(Axis axis) {
  switch (axis) {
    case Axis::x:
      return "x";
    case Axis::y:
      return "y";
    case Axis::z:
      return "z";
  }
  return "?";
}

Silhouette silhouette_project(const TsdfGrid& grid, Axis axis) {
  const int D = grid.D;
  Silhouette s;
  s.axis = axis;
  s.D = D;
  s.pixels.assign(static_cast<size_t>(D) * D, 0);
  for (int i = 0; i < D; ++i) {
    for (int j = 0; j < D; ++j) {
      for (int k = 0; k < D; ++k) {
        if (!(grid.at(i, j, k) < 0.0f)) continue;
        int a = 0, b = 0;
        switch (axis) {
          case Axis::x:
            a = j, b = k;
            break;
          case Axis::y:
            a = i, b = k;
            break;
          case Axis::z:
            a = i, b = j;
            break;
        }
        s.pixels[static_cast<size_t>(a * D + b)] = 1;
      }
    }
  }
  return s;
}

void write_tsdf_file(const std::filesystem::path& path, std::span<const TsdfGrid> grids) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(path.string() + ": cannot open for writing");
  const int D = grids.empty() ? 0 : grids.front().D;
  const float tau = grids.empty() ? 0.0f : grids.front().tau;
  io::write_magic(os, "TSDF");
  io::write_u32(os, kTsdfVersion);
  io::write_u32(os, static_cast<uint32_t>(D));
  io::write_f32(os, tau);
  io::write_u32(os, static_cast<uint32_t>(grids.size()));
  for (const TsdfGrid& g : grids) {
    if (g.D != D || g.tau != tau) throw DimensionError("all grids in one file must share D and tau");
    io::write_f32s(os, g.values);
  }
  if (!os) throw IoError(path.string() + ": write failed");
}

std::vector<TsdfGrid> read_tsdf_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string() + ": cannot open for reading");
  io::expect_magic(is, "TSDF", path);
  const std::string what = path.string() + " header";
  const uint32_t version = io::read_u32(is, what);
  if (version != kTsdfVersion) throw IoError(path.string() + ": unsupported version " + std::to_string(version));
  const uint32_t D = io::read_u32(is, what);
  const float tau = io::read_f32(is, what);
  const uint32_t count = io::read_u32(is, what);
  std::vector<TsdfGrid> grids;
  grids.reserve(count);
  for (uint32_t n = 0; n < count; ++n) {
    TsdfGrid g(static_cast<int>(D), tau, 0.0f);
    io::read_f32s(is, g.values, path.string() + " grid " + std::to_string(n));
    grids.push_back(std::move(g));
  }
  return grids;
}

void write_pgm(const std::filesystem::path& path, int width, int height, std::span<const uint8_t> pixels) {
  if (static_cast<int64_t>(pixels.size()) != static_cast<int64_t>(width) * height) {
    throw DimensionError("pgm pixel count does not match " + std::to_string(width) + "x" + std::to_string(height));
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(path.string() + ": cannot open for writing");
  os << "P5\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!os) throw IoError(path.string() + ": write failed");
}

std::vector<uint8_t> read_pgm(const std::filesystem::path& path, int& width, int& height) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string() + ": cannot open for reading");
  std::string magic;
  int maxval = 0;
  is >> magic >> width >> height >> maxval;
  if (magic != "P5" || width <= 0 || height <= 0 || maxval != 255) throw IoError(path.string() + ": not a P5 image");
  is.get();
  std::vector<uint8_t> pixels(static_cast<size_t>(width) * height);
  if (!is.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()))) {
    throw IoError(path.string() + ": truncated image");
  }
  return pixels;
}

}  // namespace voxprior
