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

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "voxprior/errors.hpp"

// Little-endian primitives for the project's binary file formats.
namespace voxprior::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_f32(std::ostream& os, float v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_f32s(std::ostream& os, std::span<const float> v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}
inline void write_u16s(std::ostream& os, std::span<const uint16_t> v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(uint16_t)));
}
inline void write_magic(std::ostream& os, const char (&magic)[5]) { os.write(magic, 4); }

inline uint32_t read_u32(std::istream& is, const std::string& what) {
  uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw IoError("truncated file while reading " + what);
  return v;
}
inline float read_f32(std::istream& is, const std::string& what) {
  float v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw IoError("truncated file while reading " + what);
  return v;
}
inline void read_f32s(std::istream& is, std::span<float> out, const std::string& what) {
  if (!is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size() * sizeof(float)))) {
    throw IoError("truncated file while reading " + what);
  }
}
inline void read_u16s(std::istream& is, std::span<uint16_t> out, const std::string& what) {
  if (!is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size() * sizeof(uint16_t)))) {
    throw IoError("truncated file while reading " + what);
  }
}
inline void expect_magic(std::istream& is, const char (&magic)[5], const std::filesystem::path& path) {
  char buf[4] = {};
  if (!is.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
    throw IoError(path.string() + ": bad magic, expected '" + std::string(magic) + "'");
  }
}

}  // namespace voxprior::io
