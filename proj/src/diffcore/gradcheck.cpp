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
#include "voxprior/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "voxprior/errors.hpp"
#include "voxprior/rng.hpp"

namespace voxprior::diff {

GradCheckResult grad_check(const Objective& objective, std::span<Parameter* const> params, double epsilon,
                           const GradCheckOptions& options) {
  for (Parameter* p : params) p->zero_grad();
  const double base = objective(true);
  if (objective(false) != base) throw CheckError("objective is not deterministic");

  double sq = 0.0;
  int64_t count = 0;
  for (const Parameter* p : params) {
    for (float g : p->grad.data()) sq += static_cast<double>(g) * g;
    count += p->grad.size();
  }
  const double floor =
      std::max(options.abs_floor, count > 0 ? options.rms_floor * std::sqrt(sq / static_cast<double>(count)) : 0.0);

  GradCheckResult result;
  Rng rng(derive_seed(options.seed, "grad_check"));
  for (Parameter* p : params) {
    const NdArray analytic = p->grad;
    std::vector<int64_t> coords(static_cast<size_t>(p->value.size()));
    std::iota(coords.begin(), coords.end(), int64_t{0});
    if (static_cast<int64_t>(coords.size()) > options.samples_per_param) {
      rng.shuffle(coords);
      coords.resize(static_cast<size_t>(options.samples_per_param));
    }
    for (int64_t i : coords) {
      const float orig = p->value[i];
      // Divide by the representable step actually taken.
      auto central = [&](double h) {
        const float up = orig + static_cast<float>(h);
        const float down = orig - static_cast<float>(h);
        p->value[i] = up;
        const double f_up = objective(false);
        p->value[i] = down;
        const double f_down = objective(false);
        p->value[i] = orig;
        return (f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down));
      };
      // Romberg table; row k holds estimates with the O(h^2k) terms removed.
      std::vector<double> row;
      for (int level = 0; level <= options.extrapolation; ++level) row.push_back(central(epsilon / std::ldexp(1.0, level)));
      for (int k = 1; k <= options.extrapolation; ++k) {
        const double f = std::ldexp(1.0, 2 * k);
        for (size_t j = row.size() - 1; j >= static_cast<size_t>(k); --j) row[j] = (f * row[j] - row[j - 1]) / (f - 1.0);
      }
      const double numeric = row.back();
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel >= result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p->name;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  if (objective(false) != base) throw CheckError("objective is not deterministic");
  return result;
}

Objective projected_objective(std::function<Var(Tape&)> forward, uint64_t seed) {
  auto weights = std::make_shared<NdArray>();
  return [forward = std::move(forward), weights, seed](bool with_grad) {
    Tape tape;
    tape.set_grad_enabled(with_grad);
    Var y = forward(tape);
    const NdArray& yv = y.value();
    if (weights->shape() != yv.shape()) {
      *weights = NdArray(yv.shape());
      Rng rng(derive_seed(seed, "projection"));
      for (float& w : weights->data()) w = rng.uniform(-1.0f, 1.0f);
    }
    double acc = 0.0;
    for (int64_t i = 0; i < yv.size(); ++i) acc += static_cast<double>((*weights)[i]) * yv[i];
    if (with_grad) tape.backward(y, *weights);
    return acc;
  };
}

}  // namespace voxprior::diff
