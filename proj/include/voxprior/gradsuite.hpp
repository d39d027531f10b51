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
#include <string>
#include <vector>

namespace voxprior::cli {

struct GradSuiteRow {
  std::string block;
  double max_rel_error = 0.0;
  int64_t checked = 0;
  std::string worst_param;
};

inline constexpr double kGradSuiteTolerance = 1e-3;

// Central-difference checks of every differentiable block, from single ops
// up to the encoder, decoder, prior and conditional heads.
std::vector<GradSuiteRow> run_gradient_suite();

}  // namespace voxprior::cli
