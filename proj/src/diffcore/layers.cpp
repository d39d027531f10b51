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
#include "voxprior/layers.hpp"

#include <cmath>

#include "voxprior/rng.hpp"

namespace voxprior::diff {
namespace {

NdArray uniform_init(const Shape& shape, float bound, uint64_t seed, const std::string& name) {
  NdArray a(shape);
  Rng rng(derive_seed(seed, name));
  for (float& x : a.data()) x = rng.uniform(-bound, bound);
  return a;
}

}  // namespace

Linear::Linear(ParameterSet& ps, const std::string& name, int64_t in, int64_t out, InitSpec init, bool bias) {
  const float bound = init.gain / std::sqrt(static_cast<float>(in));
  weight_ = &ps.add(name + ".weight", uniform_init({out, in}, bound, init.seed, name + ".weight"));
  if (bias) bias_ = &ps.add(name + ".bias", uniform_init({out}, bound, init.seed, name + ".bias"));
}

Var Linear::operator()(Tape& t, Var x) const {
  if (bias_) return linear(x, t.parameter(*weight_), t.parameter(*bias_));
  return linear(x, t.parameter(*weight_), std::nullopt);
}

Conv3d::Conv3d(ParameterSet& ps, const std::string& name, int64_t in, int64_t out, int kernel, int stride,
               int padding, InitSpec init)
    : stride_(stride), padding_(padding) {
  const float bound = init.gain / std::sqrt(static_cast<float>(in * kernel * kernel * kernel));
  weight_ = &ps.add(name + ".weight", uniform_init({out, in, kernel, kernel, kernel}, bound, init.seed, name + ".weight"));
  bias_ = &ps.add(name + ".bias", uniform_init({out}, bound, init.seed, name + ".bias"));
}

Var Conv3d::operator()(Tape& t, Var x) const {
  return conv3d(x, t.parameter(*weight_), t.parameter(*bias_), stride_, padding_);
}

Conv2d::Conv2d(ParameterSet& ps, const std::string& name, int64_t in, int64_t out, int kernel, int stride,
               int padding, InitSpec init)
    : stride_(stride), padding_(padding) {
  const float bound = init.gain / std::sqrt(static_cast<float>(in * kernel * kernel));
  weight_ = &ps.add(name + ".weight", uniform_init({out, in, 1, kernel, kernel}, bound, init.seed, name + ".weight"));
  bias_ = &ps.add(name + ".bias", uniform_init({out}, bound, init.seed, name + ".bias"));
}

Var Conv2d::operator()(Tape& t, Var x) const {
  const Shape& s = x.shape();
  Var x5 = reshape(x, {s[0], s[1], 1, s[2], s[3]});
  Var y = conv3d(x5, t.parameter(*weight_), t.parameter(*bias_), {1, stride_, stride_}, {0, padding_, padding_});
  const Shape& ys = y.shape();
  return reshape(y, {ys[0], ys[1], ys[3], ys[4]});
}

GroupNorm::GroupNorm(ParameterSet& ps, const std::string& name, int64_t channels, int groups) : groups_(groups) {
  scale_ = &ps.add(name + ".scale", NdArray({channels}, 1.0f));
  shift_ = &ps.add(name + ".shift", NdArray({channels}, 0.0f));
}

Var GroupNorm::operator()(Tape& t, Var x) const {
  return group_norm(x, t.parameter(*scale_), t.parameter(*shift_), groups_);
}

Var GroupNorm::with_swish(Tape& t, Var x) const {
  return group_norm_swish(x, t.parameter(*scale_), t.parameter(*shift_), groups_);
}

LayerNorm::LayerNorm(ParameterSet& ps, const std::string& name, int64_t width) {
  scale_ = &ps.add(name + ".scale", NdArray({width}, 1.0f));
  shift_ = &ps.add(name + ".shift", NdArray({width}, 0.0f));
}

Var LayerNorm::operator()(Tape& t, Var x) const { return layer_norm(x, t.parameter(*scale_), t.parameter(*shift_)); }

ResBlock3d::ResBlock3d(ParameterSet& ps, const std::string& name, int64_t in, int64_t out, int groups, InitSpec init)
    : norm1_(ps, name + ".norm1", in, groups),
      norm2_(ps, name + ".norm2", out, groups),
      conv1_(ps, name + ".conv1", in, out, 3, 1, 1, init),
      conv2_(ps, name + ".conv2", out, out, 3, 1, 1, init.branch_end()),
      project_skip_(in != out) {
  if (project_skip_) skip_ = Conv3d(ps, name + ".skip", in, out, 1, 1, 0, init);
}

Var ResBlock3d::operator()(Tape& t, Var x) const {
  Var h = conv1_(t, norm1_.with_swish(t, x));
  h = conv2_(t, norm2_.with_swish(t, h));
  Var skip = project_skip_ ? skip_(t, x) : x;
  return add(skip, h);
}

AttnBlock3d::AttnBlock3d(ParameterSet& ps, const std::string& name, int64_t channels, int groups, InitSpec init)
    : norm_(ps, name + ".norm", channels, groups),
      q_(ps, name + ".q", channels, channels, init),
      k_(ps, name + ".k", channels, channels, init),
      v_(ps, name + ".v", channels, channels, init),
      proj_(ps, name + ".proj", channels, channels, init.branch_end()) {}

Var AttnBlock3d::operator()(Tape& t, Var x) const {
  const Shape s = x.shape();
  const int64_t n = s[0], c = s[1], cells = s[2] * s[3] * s[4];
  Var h = norm_(t, x);
  h = permute(reshape(h, {n, c, cells}), {0, 2, 1});
  Var a = attention(q_(t, h), k_(t, h), v_(t, h), 1, nullptr);
  Var o = proj_(t, a);
  o = reshape(permute(o, {0, 2, 1}), s);
  return add(x, o);
}

Downsample3d::Downsample3d(ParameterSet& ps, const std::string& name, int64_t in, int64_t out, InitSpec init)
    : conv_(ps, name + ".conv", in, out, 3, 2, 1, init) {}

Upsample3d::Upsample3d(ParameterSet& ps, const std::string& name, int64_t in, int64_t out, InitSpec init)
    : conv_(ps, name + ".conv", in, out, 3, 1, 1, init) {}

MultiHeadAttention::MultiHeadAttention(ParameterSet& ps, const std::string& name, int64_t width, int heads,
                                       InitSpec init)
    : q_(ps, name + ".q", width, width, init),
      k_(ps, name + ".k", width, width, init),
      v_(ps, name + ".v", width, width, init),
      out_(ps, name + ".out", width, width, init.branch_end()),
      heads_(heads) {}

Var MultiHeadAttention::operator()(Tape& t, Var x, const NdArray* mask) const {
  return out_(t, attention(q_(t, x), k_(t, x), v_(t, x), heads_, mask));
}

TransformerBlock::TransformerBlock(ParameterSet& ps, const std::string& name, int64_t width, int heads, InitSpec init)
    : ln1_(ps, name + ".ln1", width),
      ln2_(ps, name + ".ln2", width),
      attn_(ps, name + ".attn", width, heads, init),
      fc1_(ps, name + ".fc1", width, 4 * width, init),
      fc2_(ps, name + ".fc2", 4 * width, width, init.branch_end()) {}

Var TransformerBlock::operator()(Tape& t, Var x, const NdArray* mask) const {
  x = add(x, attn_(t, ln1_(t, x), mask));
  return add(x, fc2_(t, swish(fc1_(t, ln2_(t, x)))));
}

}  // namespace voxprior::diff
