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

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "voxprior/tape.hpp"

// Differentiable operations recorded on a Tape. Every op accepts the same
// tape for all of its inputs and returns a Var on that tape.
namespace voxprior::diff {

// Additive mask value standing in for -inf.
inline constexpr float kMaskedLogit = std::numeric_limits<float>::lowest();

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, float factor);
Var tanh(Var a);
Var swish(Var a);
Var reshape(Var a, Shape shape);
Var permute(Var a, const std::vector<int>& axes);
Var stop_gradient(Var a);

// Forward value of `quantized`, backward copies the gradient to `encoded`.
Var straight_through(Var encoded, Var quantized);

// Rows of `table` [V, E] picked by `indices`; result [n, E].
Var embedding(Var table, const std::vector<int32_t>& indices);

// [N, C] -> [N, C, spatial...] by repetition.
Var broadcast_spatial(Var a, const Shape& spatial);

// x [..., in] times weight [out, in]^T plus bias [out].
Var linear(Var x, Var weight, std::optional<Var> bias);

// input [N, C_in, D, H, W] (or unbatched [C_in, D, H, W]); weight
// [C_out, C_in, kd, kh, kw]; bias [C_out]. Padding is symmetric zero
// padding per axis.
Var conv3d(Var input, Var weight, std::optional<Var> bias, int stride, int padding);
Var conv3d(Var input, Var weight, std::optional<Var> bias, std::array<int, 3> stride,
           std::array<int, 3> padding);

// Nearest-neighbour x2 upsampling of the trailing three axes.
Var upsample_nearest2x(Var input);

// Normalizes [N, C, ...] over channel groups then applies per-channel
// scale/shift. Unbatched inputs are passed with a leading extent of 1.
Var group_norm(Var input, Var scale, Var shift, int groups, float eps = 1e-5f);
Var group_norm_swish(Var input, Var scale, Var shift, int groups, float eps = 1e-5f);

// Normalizes over the last axis then applies scale/shift of that width.
Var layer_norm(Var input, Var scale, Var shift, float eps = 1e-5f);

// Scaled dot-product attention core. q, k, v: [B, T, heads * dk] or
// [T, heads * dk]. mask: optional [T, T] additive matrix whose entries are 0
// or kMaskedLogit (masked entries are skipped exactly). Output has the
// input's shape with heads concatenated.
Var attention(Var q, Var k, Var v, int heads, const NdArray* mask);

// Mean over rows of -log softmax(logits)[target]. logits [N, K].
Var softmax_cross_entropy(Var logits, const std::vector<int32_t>& targets);
Var mse(Var a, Var b);
Var l1(Var a, Var b);
Var sum(Var a);

// Upper-triangular (strictly above diagonal) additive causal mask.
NdArray causal_mask(int64_t length);

// Row softmax of a [N, K] array in double precision; rows sum to 1.
std::vector<double> softmax_row(std::span<const float> logits);

}  // namespace voxprior::diff
