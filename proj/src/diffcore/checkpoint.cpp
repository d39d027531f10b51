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
#include "voxprior/checkpoint.hpp"

#include <fstream>

#include "voxprior/binary_io.hpp"
#include "voxprior/errors.hpp"

namespace voxprior {

void Checkpoint::store(const diff::ParameterSet& params, const std::string& prefix) {
  for (const diff::Parameter* p : params.all()) tensors[prefix + p->name] = p->value;
}

void Checkpoint::restore(diff::ParameterSet& params, const std::string& prefix) const {
  for (diff::Parameter* p : params.all()) {
    const NdArray& t = tensor(prefix + p->name);
    if (t.shape() != p->value.shape()) {
      throw DimensionError("checkpoint tensor '" + prefix + p->name + "' has shape " + shape_str(t.shape()) +
                           ", model expects " + shape_str(p->value.shape()));
    }
    p->value = t;
    p->zero_grad();
  }
}

const NdArray& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw DataError("checkpoint has no tensor '" + name + "'");
  return it->second;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json meta;
  meta["model_kind"] = ckpt.model_kind;
  meta["config"] = ckpt.config;
  nlohmann::json table = nlohmann::json::object();
  uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    table[name] = {{"shape", t.shape()}, {"offset", offset}};
    offset += static_cast<uint64_t>(t.size()) * sizeof(float);
  }
  meta["tensors"] = table;
  const std::string text = meta.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  io::write_magic(os, "VXPR");
  io::write_u32(os, kCheckpointVersion);
  io::write_u32(os, static_cast<uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : ckpt.tensors) io::write_f32s(os, t.data());
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path.string() + "'");
  io::expect_magic(is, "VXPR", path);
  const uint32_t version = io::read_u32(is, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const uint32_t len = io::read_u32(is, "metadata length");
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw IoError(path.string() + ": truncated metadata");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed metadata: " + e.what());
  }
  Checkpoint ckpt;
  ckpt.model_kind = meta.at("model_kind").get<std::string>();
  ckpt.config = meta.at("config");
  const std::streampos payload = is.tellg();
  for (const auto& [name, entry] : meta.at("tensors").items()) {
    Shape shape = entry.at("shape").get<Shape>();
    const uint64_t offset = entry.at("offset").get<uint64_t>();
    NdArray t(shape);
    is.seekg(payload + static_cast<std::streamoff>(offset));
    io::read_f32s(is, t.data(), "tensor " + name);
    ckpt.tensors.emplace(name, std::move(t));
  }
  return ckpt;
}

}  // namespace voxprior
