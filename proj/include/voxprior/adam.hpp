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

#include <map>
#include <span>
#include <string>

#include "voxprior/tape.hpp"

namespace voxprior::diff {

struct AdamConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Moment accumulators keyed by parameter name.
struct AdamState {
  AdamConfig config;
  int64_t step = 0;
  std::map<std::string, NdArray> first_moment;
  std::map<std::string, NdArray> second_moment;
};

// One bias-corrected Adam update from the populated gradients. Throws
// TrainingError naming the parameter on a non-finite gradient; in that case
// no parameter is modified.
void adam_step(AdamState& state, std::span<Parameter* const> params);

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

}  // namespace voxprior::diff
