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
#include <optional>
#include <string>

#include "json.hpp"
#include "voxprior/conditional.hpp"
#include "voxprior/prior.hpp"
#include "voxprior/pvqvae.hpp"

namespace voxprior::cli {

struct DataConfig {
  int D = 32;
  float tau = 0.2f;
  int64_t count = 200;
  uint64_t seed = 0;
};

struct SampleConfig {
  int k = 10;
  float temperature = 1.0f;
  uint64_t seed = 0;
};

// One JSON document with sections data, vqvae, prior, cond and sample.
// Section seeds that are not given are derived from the top-level "seed".
struct RunConfig {
  uint64_t seed = 0;
  DataConfig data;
  pvqvae::VqvaeConfig vqvae;
  prior::PriorConfig prior;
  conditional::CondConfig cond;
  SampleConfig sample;

  // Defaults with every section seed derived from `master`.
  static RunConfig defaults(uint64_t master = 0);
  // `master_override` replaces the top-level seed and re-derives every
  // section seed from it. Throws UsageError naming the offending key.
  static RunConfig from_json(const nlohmann::json& j, std::optional<uint64_t> master_override = {});
  static RunConfig load(const std::filesystem::path& path, std::optional<uint64_t> master_override = {});
  nlohmann::json to_json() const;
  // FNV-1a 64 of the compact JSON dump, as 16 hex digits.
  std::string hash() const;
};

}  // namespace voxprior::cli
