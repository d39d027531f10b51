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
#include <functional>
#include <span>
#include <string>

#include "voxprior/tape.hpp"

namespace voxprior::diff {

// Scalar objective over the current parameter values. When `with_grad` is
// true it must also accumulate d(objective)/d(param) into Parameter::grad
// (gradients are zeroed by the checker beforehand).
using Objective = std::function<double(bool with_grad)>;

struct GradCheckOptions {
  uint64_t seed = 0;
  // Coordinates checked per parameter (all of them when the parameter is
  // smaller).
  int samples_per_param = 8;
  // Gradients below this magnitude are compared on an absolute scale.
  double abs_floor = 0.05;
  // Raises the floor to this fraction of the RMS analytic gradient over all
  // coordinates of `params`. For deep composites whose 32-bit outputs put
  // rounding noise on f that dwarfs their smallest gradient entries.
  double rms_floor = 0.0;
  // Richardson levels over central differences at h, h/2, h/4, ...:
  // 1 combines D(h) and D(h/2) as (4 D(h/2) - D(h)) / 3, cancelling the
  // O(h^2) term; 2 also cancels O(h^4); 0 is the plain central difference.
  int extrapolation = 1;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  int64_t checked = 0;
};

// Compares analytic gradients to central differences
// D(h) = (f(x + h) - f(x - h)) / (2h), h = epsilon, on a random subsample
// of coordinates. Relative error is |a - n| / max(|a|, |n|, floor) with
// floor = max(abs_floor, rms_floor * RMS analytic gradient).
// Throws CheckError if the objective is not deterministic.
GradCheckResult grad_check(const Objective& objective, std::span<Parameter* const> params, double epsilon,
                           const GradCheckOptions& options = {});

// Objective sum_i w_i * y_i for a fixed random projection w, accumulated in
// double precision. `forward` records the computation on the given tape.
Objective projected_objective(std::function<Var(Tape&)> forward, uint64_t seed);

}  // namespace voxprior::diff
