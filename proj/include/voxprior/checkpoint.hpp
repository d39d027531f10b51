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

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "voxprior/ndarray.hpp"
#include "voxprior/tape.hpp"

namespace voxprior {

// "VXPR" container shared by every model kind:
//   magic "VXPR" | u32 version=1 | u32 metadata byte length |
//   UTF-8 JSON {model_kind, config, tensors: name -> {shape, offset}} |
//   little-endian f32 payloads (offsets are bytes from payload start).
struct Checkpoint {
  std::string model_kind;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, NdArray> tensors;

  void store(const diff::ParameterSet& params, const std::string& prefix = "");
  // Copies tensors named prefix + parameter name into `params`; every
  // parameter must be present with a matching shape.
  void restore(diff::ParameterSet& params, const std::string& prefix = "") const;
  const NdArray& tensor(const std::string& name) const;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace voxprior
