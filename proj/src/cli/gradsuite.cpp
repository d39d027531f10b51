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
#include "voxprior/gradsuite.hpp"

#include <functional>

#include "voxprior/conditional.hpp"
#include "voxprior/gradcheck.hpp"
#include "voxprior/layers.hpp"
#include "voxprior/ops.hpp"
#include "voxprior/prior.hpp"
#include "voxprior/pvqvae.hpp"
#include "voxprior/rng.hpp"

namespace voxprior::cli {

using namespace voxprior::diff;

namespace {

constexpr double kBlockStep = 4e-2;

NdArray random_array(const Shape& shape, uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  NdArray a(shape);
  Rng rng(seed);
  for (float& x : a.data()) x = rng.uniform(lo, hi);
  return a;
}

void merge(GradSuiteRow& row, const GradCheckResult& r) {
  row.checked += r.checked;
  if (r.max_rel_error >= row.max_rel_error) {
    row.max_rel_error = r.max_rel_error;
    row.worst_param = r.worst_param;
  }
}

// Every parameter and the input, on three random instances.
GradSuiteRow check_block(const std::string& name, const std::function<Var(Tape&, Var)>& forward, ParameterSet& ps,
                         const Shape& input_shape, uint64_t seed) {
  GradSuiteRow row{name, 0.0, 0, ""};
  for (uint64_t trial = 0; trial < 3; ++trial) {
    Parameter input("input", random_array(input_shape, seed * 100 + trial));
    auto params = ps.all();
    params.push_back(&input);
    const Objective f = projected_objective([&](Tape& t) { return forward(t, t.parameter(input)); }, seed + trial);
    GradCheckOptions opts;
    opts.seed = seed + trial;
    merge(row, grad_check(f, params, kBlockStep, opts));
  }
  return row;
}

pvqvae::VqvaeConfig small_vqvae() {
  pvqvae::VqvaeConfig c;
  c.D = 16;
  c.P = 8;
  c.K = 16;
  c.e = 8;
  c.groups = 2;
  c.enc_channels = {4, 4, 4, 8};
  c.dec_channels = {8, 4, 4, 4};
  c.seed = 3;
  return c;
}

std::vector<Parameter*> with_prefix(ParameterSet& ps, const std::string& prefix) {
  std::vector<Parameter*> out;
  for (Parameter* p : ps.all()) {
    if (p->name.rfind(prefix, 0) == 0) out.push_back(p);
  }
  return out;
}

}  // namespace

std::vector<GradSuiteRow> run_gradient_suite() {
  std::vector<GradSuiteRow> rows;
  {
    ParameterSet ps;
    Conv3d conv(ps, "conv", 1, 3, 3, 1, 1, {1, 1.0f});
    Conv3d down(ps, "down", 3, 2, 3, 2, 1, {2, 1.0f});
    rows.push_back(check_block("conv3d", [&](Tape& t, Var x) { return down(t, conv(t, x)); }, ps, {1, 1, 4, 4, 4}, 1));
  }
  {
    ParameterSet ps;
    Conv3d conv(ps, "conv", 2, 3, 3, 1, 1, {7, 1.0f});
    rows.push_back(check_block("conv3d_8cube", [&](Tape& t, Var x) { return conv(t, x); }, ps, {2, 2, 8, 8, 8}, 9));
  }
  {
    ParameterSet ps;
    GroupNorm gn(ps, "gn", 4, 2);
    ps.get("gn.scale").value = random_array({4}, 5, 0.5f, 1.5f);
    ps.get("gn.shift").value = random_array({4}, 6);
    rows.push_back(check_block(
        "group_norm_swish_upsample", [&](Tape& t, Var x) { return upsample_nearest2x(gn.with_swish(t, x)); }, ps,
        {2, 4, 2, 2, 2}, 2));
  }
  {
    ParameterSet ps;
    TransformerBlock block(ps, "blk", 8, 2, {3, 1.0f});
    const NdArray mask = causal_mask(4);
    rows.push_back(
        check_block("transformer_block", [&](Tape& t, Var x) { return block(t, x, &mask); }, ps, {1, 4, 8}, 3));
  }
  {
    ParameterSet ps;
    ResBlock3d rb(ps, "rb", 4, 6, 2, {4, 1.0f});
    AttnBlock3d ab(ps, "ab", 6, 2, {5, 1.0f});
    rows.push_back(
        check_block("resblock3d_attnblock3d", [&](Tape& t, Var x) { return ab(t, rb(t, x)); }, ps, {2, 4, 2, 2, 2}, 4));
  }
  {
    ParameterSet ps;
    Downsample3d down(ps, "down", 2, 3, {8, 1.0f});
    Upsample3d up(ps, "up", 3, 2, {9, 1.0f});
    rows.push_back(
        check_block("down_up_sample3d", [&](Tape& t, Var x) { return up(t, down(t, x)); }, ps, {1, 2, 4, 4, 4}, 7));
  }
  {
    ParameterSet ps;
    Linear lin(ps, "lin", 5, 4, {6, 1.0f});
    LayerNorm ln(ps, "ln", 4);
    Parameter& table = ps.add("table", random_array({7, 4}, 9));
    rows.push_back(check_block(
        "linear_layernorm_embedding_losses",
        [&](Tape& t, Var x) {
          Var h = tanh(ln(t, lin(t, x)));
          Var e = embedding(t.parameter(table), {1, 6, 1});
          Var ce = softmax_cross_entropy(mul(h, e), {0, 3, 2});
          return add(add(ce, mse(h, e)), add(l1(swish(h), e), scale(sum(h), 0.1f)));
        },
        ps, {3, 5}, 5));
  }
  {
    ParameterSet ps;
    Conv2d c2(ps, "c2", 2, 3, 3, 2, 1, {7, 1.0f});
    rows.push_back(check_block(
        "conv2d_permute_broadcast",
        [&](Tape& t, Var x) {
          Var flat = reshape(c2(t, x), {3, 4});
          return broadcast_spatial(permute(flat, {1, 0}), {2});
        },
        ps, {1, 2, 4, 4}, 6));
  }
  {
    pvqvae::VqvaeConfig c = small_vqvae();
    c.D = 8;
    pvqvae::PVqvae m(c);
    const NdArray patches = random_array({2, 1, 8, 8, 8}, 21, -0.2f, 0.2f);
    GradCheckOptions opts;
    opts.seed = 2;
    opts.samples_per_param = 3;
    const auto f = projected_objective([&](Tape& t) { return m.encode(t, t.constant(patches)); }, 1);
    const std::vector<Parameter*> params = with_prefix(m.params(), "enc.");
    GradSuiteRow row{"pvqvae_encoder", 0.0, 0, ""};
    merge(row, grad_check(f, params, 1e-2, opts));
    rows.push_back(row);
  }
  {
    pvqvae::PVqvae m(small_vqvae());
    const NdArray latent = random_array({1, 8, 2, 2, 2}, 22);
    GradCheckOptions opts;
    opts.seed = 2;
    opts.samples_per_param = 3;
    opts.rms_floor = 0.1;
    const auto f = projected_objective([&](Tape& t) { return m.decode(t, t.constant(latent)); }, 2);
    const std::vector<Parameter*> params = with_prefix(m.params(), "dec.");
    GradSuiteRow row{"pvqvae_decoder", 0.0, 0, ""};
    merge(row, grad_check(f, params, 4e-2, opts));
    rows.push_back(row);
  }
  {
    prior::PriorConfig c;
    c.L = 2;
    c.h = 2;
    c.w = 8;
    c.F = 2;
    c.seed = 5;
    prior::PriorModel m(c, 2, random_array({5, 4}, 3));
    const std::vector<prior::PermutationOrder> orders{prior::sample_order(2, 1), prior::sample_order(2, 2)};
    const std::vector<std::vector<int32_t>> tokens{{0, 1, 2, 3, 4, 0, 1, 2}, {4, 4, 3, 3, 2, 2, 1, 1}};
    const auto f = projected_objective([&](Tape& t) { return m.chain_logits(t, orders, tokens); }, 3);
    GradCheckOptions opts;
    opts.samples_per_param = 4;
    const std::vector<Parameter*> params = m.trainable();
    GradSuiteRow row{"prior_transformer", 0.0, 0, ""};
    merge(row, grad_check(f, params, 4e-2, opts));
    rows.push_back(row);
  }
  using conditional::CondKind;
  for (CondKind kind : {CondKind::label, CondKind::attributes, CondKind::silhouette}) {
    conditional::CondConfig c;
    c.kind = kind;
    c.width = 4;
    c.lift = 2;
    c.groups = 1;
    c.classes = 3;
    c.seed = 7;
    conditional::CondHead head(c, 2, 6, 8);
    conditional::Conditioning cond;
    Rng rng(1);
    if (kind == CondKind::label) {
      cond = conditional::Conditioning::from_label(1);
    } else if (kind == CondKind::attributes) {
      std::array<float, shapegen::kAttributeCount> a{};
      for (float& v : a) v = rng.uniform(0.0f, 1.0f);
      cond = conditional::Conditioning::from_attributes(a);
    } else {
      Silhouette s;
      s.D = 8;
      for (int i = 0; i < 64; ++i) s.pixels.push_back(rng.uniform() < 0.5 ? 1 : 0);
      cond = conditional::Conditioning::from_silhouette(s);
    }
    const auto f = projected_objective([&](Tape& t) { return head.forward(t, {&cond, 1}); }, 3);
    GradCheckOptions opts;
    opts.samples_per_param = 4;
    opts.extrapolation = 2;
    opts.rms_floor = 0.1;
    const std::vector<Parameter*> params = head.params().all();
    GradSuiteRow row{"cond_head_" + conditional::kind_name(kind), 0.0, 0, ""};
    merge(row, grad_check(f, params, 0.1, opts));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace voxprior::cli
