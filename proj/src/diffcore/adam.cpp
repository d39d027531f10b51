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
#include "voxprior/adam.hpp"

#include <cmath>

#include "voxprior/errors.hpp"

namespace voxprior::diff {

void adam_step(AdamState& state, std::span<Parameter* const> params) {
  for (const Parameter* p : params) {
    if (p->grad.shape() != p->value.shape()) {
      throw TrainingError("parameter '" + p->name + "' has no gradient of matching shape");
    }
    if (!p->grad.all_finite()) throw TrainingError("non-finite gradient in parameter '" + p->name + "'");
  }
  ++state.step;
  const AdamConfig& c = state.config;
  const double bc1 = 1.0 - std::pow(static_cast<double>(c.beta1), static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(static_cast<double>(c.beta2), static_cast<double>(state.step));
  for (Parameter* p : params) {
    NdArray& m = state.first_moment[p->name];
    NdArray& v = state.second_moment[p->name];
    if (m.shape() != p->value.shape()) m = NdArray(p->value.shape());
    if (v.shape() != p->value.shape()) v = NdArray(p->value.shape());
    for (int64_t i = 0; i < p->value.size(); ++i) {
      const float g = p->grad[i];
      m[i] = c.beta1 * m[i] + (1.0f - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0f - c.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p->value[i] -= static_cast<float>(c.lr * mhat / (std::sqrt(vhat) + c.eps));
    }
  }
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (float g : p->grad.data()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const float f = static_cast<float>(max_norm / norm);
    for (Parameter* p : params) {
      for (float& g : p->grad.data()) g *= f;
    }
  }
  return norm;
}

}  // namespace voxprior::diff
