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

#include "voxprior/ops.hpp"
#include "voxprior/tape.hpp"

// Parameterized building blocks shared by the encoder, decoder, prior and
// conditional heads. Each block registers its parameters under a name
// prefix in a ParameterSet; initial values are a pure function of
// (seed, parameter name), independent of construction order.
namespace voxprior::diff {

struct InitSpec {
  uint64_t seed = 0;
  float gain = 1.0f;  // multiplies the default fan-in bound
  // Extra factor for the last layer of each residual branch; 0 starts the
  // block as the identity.
  float residual_gain = 1.0f;

  InitSpec branch_end() const { return {seed, gain * residual_gain, residual_gain}; }
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, int64_t in, int64_t out, InitSpec init, bool bias = true);
  Var operator()(Tape& t, Var x) const;
  Parameter& weight() { return *weight_; }
  Parameter* bias() { return bias_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(ParameterSet& ps, const std::string& name, int64_t in, int64_t out, int kernel, int stride, int padding,
         InitSpec init);
  Var operator()(Tape& t, Var x) const;
  Parameter& weight() { return *weight_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
  int stride_ = 1;
  int padding_ = 0;
};

// 2D convolution realized as a 3D convolution over a unit depth axis.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterSet& ps, const std::string& name, int64_t in, int64_t out, int kernel, int stride, int padding,
         InitSpec init);
  // x: [N, C, H, W].
  Var operator()(Tape& t, Var x) const;

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
  int stride_ = 1;
  int padding_ = 0;
};

class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(ParameterSet& ps, const std::string& name, int64_t channels, int groups);
  Var operator()(Tape& t, Var x) const;
  Var with_swish(Tape& t, Var x) const;

 private:
  Parameter* scale_ = nullptr;
  Parameter* shift_ = nullptr;
  int groups_ = 1;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& name, int64_t width);
  Var operator()(Tape& t, Var x) const;

 private:
  Parameter* scale_ = nullptr;
  Parameter* shift_ = nullptr;
};

// GN-swish-conv twice plus a (1x1x1 projected when widths differ) skip.
class ResBlock3d {
 public:
  ResBlock3d() = default;
  ResBlock3d(ParameterSet& ps, const std::string& name, int64_t in, int64_t out, int groups, InitSpec init);
  Var operator()(Tape& t, Var x) const;

 private:
  GroupNorm norm1_, norm2_;
  Conv3d conv1_, conv2_;
  Conv3d skip_;
  bool project_skip_ = false;
};

// Single-head self-attention over the spatial cells of [N, C, D, H, W],
// with a residual connection.
class AttnBlock3d {
 public:
  AttnBlock3d() = default;
  AttnBlock3d(ParameterSet& ps, const std::string& name, int64_t channels, int groups, InitSpec init);
  Var operator()(Tape& t, Var x) const;

 private:
  GroupNorm norm_;
  Linear q_, k_, v_, proj_;
};

class Downsample3d {
 public:
  Downsample3d() = default;
  Downsample3d(ParameterSet& ps, const std::string& name, int64_t in, int64_t out, InitSpec init);
  Var operator()(Tape& t, Var x) const { return conv_(t, x); }

 private:
  Conv3d conv_;
};

class Upsample3d {
 public:
  Upsample3d() = default;
  Upsample3d(ParameterSet& ps, const std::string& name, int64_t in, int64_t out, InitSpec init);
  Var operator()(Tape& t, Var x) const { return conv_(t, upsample_nearest2x(x)); }

 private:
  Conv3d conv_;
};

// Projections plus the attention core; heads concatenated then projected.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& ps, const std::string& name, int64_t width, int heads, InitSpec init);
  // x: [B, T, width]
  Var operator()(Tape& t, Var x, const NdArray* mask) const;

 private:
  Linear q_, k_, v_, out_;
  int heads_ = 1;
};

// Pre-layer-norm transformer encoder block.
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParameterSet& ps, const std::string& name, int64_t width, int heads, InitSpec init);
  Var operator()(Tape& t, Var x, const NdArray* mask) const;

 private:
  LayerNorm ln1_, ln2_;
  MultiHeadAttention attn_;
  Linear fc1_, fc2_;
};

}  // namespace voxprior::diff
