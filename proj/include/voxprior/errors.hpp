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

#include <stdexcept>
#include <string>

namespace voxprior {

// Base of every error thrown by the library. kind() is a stable short tag
// used by the CLI for machine-parsable error lines.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

#define VOXPRIOR_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& message) : Error(tag, message) {}     \
  };

VOXPRIOR_DEFINE_ERROR(DimensionError, "dimension")
VOXPRIOR_DEFINE_ERROR(ConfigError, "config")
VOXPRIOR_DEFINE_ERROR(IndexError, "index")
VOXPRIOR_DEFINE_ERROR(NumericError, "numeric")
VOXPRIOR_DEFINE_ERROR(TrainingError, "training")
VOXPRIOR_DEFINE_ERROR(CheckError, "check")
VOXPRIOR_DEFINE_ERROR(ParameterError, "parameter")
VOXPRIOR_DEFINE_ERROR(IoError, "io")
VOXPRIOR_DEFINE_ERROR(StateError, "state")
VOXPRIOR_DEFINE_ERROR(DataError, "data")
VOXPRIOR_DEFINE_ERROR(InputError, "input")
VOXPRIOR_DEFINE_ERROR(UsageError, "usage")
VOXPRIOR_DEFINE_ERROR(EmptySurfaceError, "empty_surface")

#undef VOXPRIOR_DEFINE_ERROR

}  // namespace voxprior
