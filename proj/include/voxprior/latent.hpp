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

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

// Token grids over the d^3 patch lattice and observed subsets of them.
namespace voxprior {

// Patch-lattice cell; lexicographic flat index (x * d + y) * d + z.
struct Location {
  int x = 0;
  int y = 0;
  int z = 0;
  auto operator<=>(const Location&) const = default;
};

inline int64_t location_index(const Location& l, int d) { return (static_cast<int64_t>(l.x) * d + l.y) * d + l.z; }
inline Location location_of(int64_t index, int d) {
  return {static_cast<int>(index / (d * d)), static_cast<int>((index / d) % d), static_cast<int>(index % d)};
}
bool location_valid(const Location& l, int d);

struct LatentGrid {
  int d = 0;
  std::vector<int32_t> tokens;

  LatentGrid() = default;
  LatentGrid(int resolution, int32_t fill);
  int64_t size() const { return static_cast<int64_t>(tokens.size()); }
  int32_t at(const Location& l) const { return tokens[static_cast<size_t>(location_index(l, d))]; }
  int32_t& at(const Location& l) { return tokens[static_cast<size_t>(location_index(l, d))]; }
  bool operator==(const LatentGrid&) const = default;
};

struct Observation {
  Location loc;
  int32_t token = 0;
  bool operator==(const Observation&) const = default;
};
using ObservationSet = std::vector<Observation>;

// Throws InputError on duplicate or out-of-range locations and IndexError
// on tokens outside [0, K).
void validate_observations(const ObservationSet& obs, int d, int K);

// Every cell of `grid` as an observation, in lexicographic order.
ObservationSet observe_all(const LatentGrid& grid);

// Token cache: "TOKS", u32 version, u32 d, u32 K, u32 count, then
// count * d^3 u16 tokens.
inline constexpr uint32_t kTokensVersion = 1;
void write_tokens_file(const std::filesystem::path& path, int d, int K, std::span<const LatentGrid> grids);
std::vector<LatentGrid> read_tokens_file(const std::filesystem::path& path, int& d, int& K);

}  // namespace voxprior
