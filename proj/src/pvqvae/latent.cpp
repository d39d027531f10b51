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
#include "voxprior/latent.hpp"

#include <fstream>
#include <set>
#include <string>

#include "voxprior/binary_io.hpp"
#include "voxprior/errors.hpp"

namespace voxprior {

bool location_valid(const Location& l, int d) {
  return l.x >= 0 && l.y >= 0 && l.z >= 0 && l.x < d && l.y < d && l.z < d;
}

LatentGrid::LatentGrid(int resolution, int32_t fill) : d(resolution) {
  if (resolution <= 0) throw ParameterError("latent resolution must be positive");
  tokens.assign(static_cast<size_t>(resolution) * resolution * resolution, fill);
}

void validate_observations(const ObservationSet& obs, int d, int K) {
  std::set<Location> seen;
  for (const Observation& o : obs) {
    if (!location_valid(o.loc, d)) {
      throw InputError("observed location (" + std::to_string(o.loc.x) + ", " + std::to_string(o.loc.y) + ", " +
                       std::to_string(o.loc.z) + ") outside the " + std::to_string(d) + "^3 lattice");
    }
    if (!seen.insert(o.loc).second) {
      throw InputError("duplicate observed location (" + std::to_string(o.loc.x) + ", " + std::to_string(o.loc.y) +
                       ", " + std::to_string(o.loc.z) + ")");
    }
    if (o.token < 0 || o.token >= K) {
      throw IndexError("observed token " + std::to_string(o.token) + " outside [0, " + std::to_string(K) + ")");
    }
  }
}

ObservationSet observe_all(const LatentGrid& grid) {
  ObservationSet obs;
  obs.reserve(grid.tokens.size());
  for (int64_t i = 0; i < grid.size(); ++i) obs.push_back({location_of(i, grid.d), grid.tokens[static_cast<size_t>(i)]});
  return obs;
}

void write_tokens_file(const std::filesystem::path& path, int d, int K, std::span<const LatentGrid> grids) {
  if (K > 65536) throw ConfigError("token cache stores u16 tokens; K=" + std::to_string(K) + " is too large");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(path.string() + ": cannot open for writing");
  io::write_magic(os, "TOKS");
  io::write_u32(os, kTokensVersion);
  io::write_u32(os, static_cast<uint32_t>(d));
  io::write_u32(os, static_cast<uint32_t>(K));
  io::write_u32(os, static_cast<uint32_t>(grids.size()));
  std::vector<uint16_t> buf;
  for (const LatentGrid& g : grids) {
    if (g.d != d) throw DimensionError("latent grid resolution " + std::to_string(g.d) + " != " + std::to_string(d));
    buf.assign(g.tokens.begin(), g.tokens.end());
    io::write_u16s(os, buf);
  }
  if (!os) throw IoError(path.string() + ": write failed");
}

std::vector<LatentGrid> read_tokens_file(const std::filesystem::path& path, int& d, int& K) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string() + ": cannot open for reading");
  io::expect_magic(is, "TOKS", path);
  const std::string what = path.string() + " header";
  const uint32_t version = io::read_u32(is, what);
  if (version != kTokensVersion) throw IoError(path.string() + ": unsupported version " + std::to_string(version));
  d = static_cast<int>(io::read_u32(is, what));
  K = static_cast<int>(io::read_u32(is, what));
  const uint32_t count = io::read_u32(is, what);
  std::vector<LatentGrid> grids;
  std::vector<uint16_t> buf(static_cast<size_t>(d) * d * d);
  for (uint32_t n = 0; n < count; ++n) {
    io::read_u16s(is, buf, path.string() + " grid " + std::to_string(n));
    LatentGrid g(d, 0);
    for (size_t i = 0; i < buf.size(); ++i) {
      if (buf[i] >= K) throw DataError(path.string() + ": token " + std::to_string(buf[i]) + " >= K");
      g.tokens[i] = buf[i];
    }
    grids.push_back(std::move(g));
  }
  return grids;
}

}  // namespace voxprior
