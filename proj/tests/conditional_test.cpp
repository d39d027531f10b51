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
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>

#include "doctest.h"
#include "voxprior/conditional.hpp"
#include "voxprior/errors.hpp"
#include "voxprior/gradcheck.hpp"

using namespace voxprior;
using namespace voxprior::conditional;
using diff::Tape;

namespace {

CondConfig tiny_config(CondKind kind) {
  CondConfig c;
  c.kind = kind;
  c.width = 8;
  c.lift = 4;
  c.groups = 2;
  c.classes = 3;
  c.batch = 4;
  c.lr = 1e-2f;
  c.epochs = 30;
  c.seed = 7;
  return c;
}

Silhouette random_silhouette(int D, uint64_t seed) {
  Rng rng(seed);
  Silhouette s;
  s.axis = Axis::z;
  s.D = D;
  for (int i = 0; i < D * D; ++i) s.pixels.push_back(rng.uniform() < 0.5 ? 1 : 0);
  return s;
}

Conditioning random_conditioning(CondKind kind, uint64_t seed) {
  Rng rng(seed);
  switch (kind) {
    case CondKind::label: return Conditioning::from_label(static_cast<int>(rng.below(3)));
    case CondKind::attributes: {
      std::array<float, shapegen::kAttributeCount> a{};
      for (float& v : a) v = rng.uniform(0.0f, 1.0f);
      return Conditioning::from_attributes(a);
    }
    case CondKind::silhouette: return Conditioning::from_silhouette(random_silhouette(8, seed + 100));
  }
  return {};
}

// Tokens a deterministic function of the conditioning, plus 10% noise.
LatentGrid target_for(const Conditioning& c, int d, int K, uint64_t seed) {
  int base = 0;
  switch (c.kind) {
    case CondKind::label: base = c.label; break;
    case CondKind::attributes: base = c.attributes[0] > 0.5f ? 1 : 0; break;
    case CondKind::silhouette: base = c.silhouette.at(0, 0) ? 1 : 0; break;
  }
  Rng rng(seed);
  LatentGrid g(d, 0);
  for (int64_t i = 0; i < g.size(); ++i) {
    g.tokens[static_cast<size_t>(i)] =
        rng.uniform() < 0.1 ? static_cast<int32_t>(rng.below(K)) : static_cast<int32_t>((base * 2 + i) % K);
  }
  return g;
}

struct Pairs {
  std::vector<Conditioning> c;
  std::vector<LatentGrid> z;
};

Pairs make_pairs(CondKind kind, int n, int d, int K, uint64_t seed) {
  Pairs p;
  for (int i = 0; i < n; ++i) {
    p.c.push_back(random_conditioning(kind, seed * 1000 + i));
    p.z.push_back(target_for(p.c.back(), d, K, seed * 1000 + i + 500));
  }
  return p;
}

prior::PriorModel toy_prior(int d, int K, prior::OrderMode mode, uint64_t seed) {
  prior::PriorConfig pc;
  pc.L = 1;
  pc.h = 1;
  pc.w = 8;
  pc.F = 1;
  pc.order_mode = mode;
  pc.seed = seed;
  Rng rng(seed);
  NdArray cb({K, 4});
  for (float& v : cb.data()) v = rng.uniform(-1.0f, 1.0f);
  return prior::PriorModel(pc, d, cb);
}

CategoricalField random_field(int d, int K, float spread, uint64_t seed) {
  Rng rng(seed);
  CategoricalField f;
  f.d = d;
  f.K = K;
  f.values.resize(static_cast<size_t>(d * d * d * K));
  for (float& v : f.values) v = spread * static_cast<float>(rng.normal());
  return f;
}

std::vector<double> random_distribution(int K, Rng& rng) {
  std::vector<double> p(static_cast<size_t>(K));
  double total = 0.0;
  for (double& v : p) total += (v = rng.uniform(0.01f, 1.0f));
  for (double& v : p) v /= total;
  return p;
}

}  // namespace

TEST_CASE("poe worked example and exact endpoints") {
  const std::vector<float> logits{0.0f, 0.0f};
  const std::vector<double> cond{0.9, 0.1};
  const std::vector<double> p = poe_step_distribution(logits, cond, 0.5);
  // sqrt(0.45) / (sqrt(0.45) + sqrt(0.05)) = 3 / 4.
  CHECK(std::abs(p[0] - 0.75) < 1e-9);
  CHECK(std::abs(p[1] - 0.25) < 1e-9);

  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int K = 2 + static_cast<int>(rng.below(10));
    std::vector<float> l(static_cast<size_t>(K));
    for (float& v : l) v = 3.0f * static_cast<float>(rng.normal());
    const std::vector<double> q = random_distribution(K, rng);
    CHECK(poe_step_distribution(l, q, 0.0) == diff::softmax_row(l));
    const std::vector<double> one = poe_step_distribution(l, q, 1.0);
    for (int k = 0; k < K; ++k) CHECK(one[static_cast<size_t>(k)] == q[static_cast<size_t>(k)]);
  }
}

TEST_CASE("poe is normalized and shift invariant") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int K = 2 + static_cast<int>(rng.below(20));
    std::vector<float> l(static_cast<size_t>(K)), shifted;
    for (float& v : l) v = 4.0f * static_cast<float>(rng.normal());
    const float c = static_cast<float>(rng.below(64)) - 32.0f;
    for (float v : l) shifted.push_back(v + c);
    const std::vector<double> q = random_distribution(K, rng);
    const double alpha = rng.uniform();
    const std::vector<double> p = poe_step_distribution(l, q, alpha);
    const std::vector<double> ps = poe_step_distribution(shifted, q, alpha);
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
      total += p[static_cast<size_t>(k)];
      CHECK(std::abs(p[static_cast<size_t>(k)] - ps[static_cast<size_t>(k)]) < 1e-5);
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("poe matches the unnormalized product of powers") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int K = 2 + static_cast<int>(rng.below(8));
    std::vector<float> l(static_cast<size_t>(K));
    for (float& v : l) v = 2.0f * static_cast<float>(rng.normal());
    const std::vector<double> q = random_distribution(K, rng);
    const double alpha = rng.uniform();
    std::vector<double> prior(static_cast<size_t>(K)), prod(static_cast<size_t>(K));
    double z = 0.0, total = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(static_cast<double>(l[static_cast<size_t>(k)]));
    for (int k = 0; k < K; ++k) {
      const size_t i = static_cast<size_t>(k);
      prior[i] = std::exp(static_cast<double>(l[i])) / z;
      prod[i] = std::pow(prior[i], 1.0 - alpha) * std::pow(q[i], alpha);
      total += prod[i];
    }
    const std::vector<double> p = poe_step_distribution(l, q, alpha);
    for (int k = 0; k < K; ++k) CHECK(p[static_cast<size_t>(k)] == doctest::Approx(prod[static_cast<size_t>(k)] / total).epsilon(1e-10));
  }
}

TEST_CASE("poe moves monotonically toward the conditional for K = 2") {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const std::vector<float> l{3.0f * static_cast<float>(rng.normal()), 3.0f * static_cast<float>(rng.normal())};
    const std::vector<double> q = random_distribution(2, rng);
    const size_t top = q[0] >= q[1] ? 0 : 1;
    double prev = poe_step_distribution(l, q, 0.0)[top];
    const double target = q[top];
    for (int s = 1; s <= 20; ++s) {
      const double p = poe_step_distribution(l, q, s / 20.0)[top];
      if (prev <= target) {
        CHECK(p >= prev - 1e-12);
        CHECK(p <= target + 1e-12);
      } else {
        CHECK(p <= prev + 1e-12);
        CHECK(p >= target - 1e-12);
      }
      prev = p;
    }
  }
}

TEST_CASE("poe errors") {
  const std::vector<float> l{0.0f, 1.0f};
  const std::vector<double> q{0.5, 0.5};
  CHECK_THROWS_AS(poe_step_distribution(l, q, -0.1), ParameterError);
  CHECK_THROWS_AS(poe_step_distribution(l, q, 1.5), ParameterError);
  CHECK_THROWS_AS(poe_step_distribution(l, std::vector<double>{0.5, 0.6}, 0.5), InputError);
  CHECK_THROWS_AS(poe_step_distribution(l, std::vector<double>{1.0}, 0.5), DimensionError);
  const float ninf = -std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(poe_step_distribution(std::vector<float>{0.0f, ninf}, std::vector<double>{0.0, 1.0}, 0.5),
                  NumericError);
  // A zero conditional entry excludes that token.
  const std::vector<double> p = poe_step_distribution(l, std::vector<double>{0.0, 1.0}, 0.3);
  CHECK(p[0] == 0.0);
  CHECK(p[1] == 1.0);
}

TEST_CASE("config json, kinds and defaults") {
  CHECK(default_alpha(CondKind::silhouette) == 0.75f);
  CHECK(default_alpha(CondKind::attributes) == 0.5f);
  CondConfig c = tiny_config(CondKind::attributes);
  CHECK(c.effective_alpha() == 0.5f);
  c.alpha = 0.2f;
  CHECK(c.effective_alpha() == 0.2f);
  CHECK(CondConfig::from_json(c.to_json()).to_json() == c.to_json());
  for (CondKind k : {CondKind::label, CondKind::attributes, CondKind::silhouette}) {
    CHECK(kind_from_name(kind_name(k)) == k);
  }
  CHECK(checkpoint_kind(CondKind::label) == "cond_label");
  CHECK(checkpoint_kind(CondKind::attributes) == "cond_attr");
  CHECK(checkpoint_kind(CondKind::silhouette) == "cond_sil");
  CHECK_THROWS_AS(kind_from_name("image"), ConfigError);
  CHECK_THROWS_AS(CondConfig::from_json({{"alpha", 1.5}}), ConfigError);
  CHECK_THROWS_AS(CondConfig::from_json({{"width", 10}, {"groups", 4}}), ConfigError);
  CHECK_THROWS_AS(CondConfig::from_json({{"colour", 1}}), ConfigError);
}

TEST_CASE("heads are deterministic and reject mismatched conditionings") {
  for (CondKind kind : {CondKind::label, CondKind::attributes, CondKind::silhouette}) {
    CAPTURE(kind_name(kind));
    CondHead head(tiny_config(kind), 2, 6, 8);
    const Conditioning c = random_conditioning(kind, 11);
    const CategoricalField f = conditional_field(head, c);
    CHECK(f.values.size() == 8 * 6);
    CHECK(!f.normalized);
    CHECK(conditional_field(head, c) == f);
    const CategoricalField p = f.probabilities();
    for (int64_t i = 0; i < 8; ++i) {
      double total = 0.0;
      for (float v : p.cell(i)) total += v;
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
    const CondKind other = kind == CondKind::label ? CondKind::attributes : CondKind::label;
    CHECK_THROWS_AS(conditional_field(head, random_conditioning(other, 3)), ConfigError);
  }
  CondHead label(tiny_config(CondKind::label), 2, 6, 8);
  CHECK_THROWS_AS(conditional_field(label, Conditioning::from_label(3)), IndexError);
  CondHead sil(tiny_config(CondKind::silhouette), 2, 6, 8);
  CHECK_THROWS_AS(conditional_field(sil, Conditioning::from_silhouette(random_silhouette(4, 1))), DimensionError);
  Silhouette sx = random_silhouette(8, 1);
  sx.axis = Axis::x;
  CHECK_THROWS_AS(conditional_field(sil, Conditioning::from_silhouette(sx)), InputError);
}

TEST_CASE("zero output layer gives ln K per cell") {
  for (CondKind kind : {CondKind::label, CondKind::attributes, CondKind::silhouette}) {
    CondHead head(tiny_config(kind), 2, 6, 8);
    head.zero_output();
    const Pairs p = make_pairs(kind, 5, 2, 6, 1);
    CHECK(evaluate_ce(head, p.c, p.z) == doctest::Approx(std::log(6.0)).epsilon(1e-6));
  }
}

TEST_CASE("head gradients") {
  for (CondKind kind : {CondKind::label, CondKind::attributes, CondKind::silhouette}) {
    CAPTURE(kind_name(kind));
    CondConfig cfg = tiny_config(kind);
    cfg.width = 4;
    cfg.lift = 2;
    cfg.groups = 1;
    CondHead head(cfg, 2, 6, 8);
    const std::vector<Conditioning> conds{random_conditioning(kind, 1)};
    const auto f = diff::projected_objective([&](Tape& t) { return head.forward(t, conds); }, 3);
    // Rounding noise on the 32-bit objective favours a wide step; two
    // extrapolation levels remove the curvature that brings in.
    diff::GradCheckOptions opts;
    opts.samples_per_param = 4;
    opts.extrapolation = 2;
    opts.rms_floor = 0.1;
    const std::vector<diff::Parameter*> params = head.params().all();
    const auto r = diff::grad_check(f, params, 0.1, opts);
    INFO("worst " << r.worst_param << " a=" << r.analytic << " n=" << r.numeric);
    CHECK(r.max_rel_error < 1e-3);
  }
}

TEST_CASE("checkpoint roundtrip") {
  for (CondKind kind : {CondKind::label, CondKind::attributes, CondKind::silhouette}) {
    CondHead head(tiny_config(kind), 2, 6, 8);
    const auto path = std::filesystem::temp_directory_path() / "voxprior_cond_test.vxpr";
    save_checkpoint(path, head.to_checkpoint());
    const Checkpoint ckpt = load_checkpoint(path);
    std::filesystem::remove(path);
    CHECK(ckpt.model_kind == checkpoint_kind(kind));
    const CondHead back = CondHead::from_checkpoint(ckpt);
    const Conditioning c = random_conditioning(kind, 5);
    CHECK(conditional_field(back, c) == conditional_field(head, c));
  }
  Checkpoint bad = CondHead(tiny_config(CondKind::label), 2, 6, 8).to_checkpoint();
  bad.model_kind = "cond_sil";
  CHECK_THROWS_AS(CondHead::from_checkpoint(bad), ConfigError);
  bad.model_kind = "prior";
  CHECK_THROWS_AS(CondHead::from_checkpoint(bad), ConfigError);
}

TEST_CASE("training learns each conditioning and is deterministic") {
  const int d = 2, K = 6;
  for (CondKind kind : {CondKind::label, CondKind::attributes, CondKind::silhouette}) {
    CAPTURE(kind_name(kind));
    const Pairs train = make_pairs(kind, 32, d, K, 1), val = make_pairs(kind, 16, d, K, 2);
    std::vector<HeadEpochLog> log;
    CondConfig cfg = tiny_config(kind);
    const CondHead a = train_head(train.c, train.z, val.c, val.z, cfg, K, 8, &log);
    REQUIRE(log.size() == static_cast<size_t>(cfg.epochs) + 1);
    CHECK(log.back().val_ce < std::log(static_cast<double>(K)));
    CHECK(log.back().val_ce < 0.5 * log.front().val_ce);
    if (kind == CondKind::label) {
      const CondHead b = train_head(train.c, train.z, val.c, val.z, cfg, K, 8);
      CHECK(a.to_checkpoint().tensors == b.to_checkpoint().tensors);
      // Fields of different classes separate, and each puts its mass on
      // the class pattern.
      std::vector<CategoricalField> f;
      for (int c = 0; c < 3; ++c) f.push_back(conditional_field(a, Conditioning::from_label(c)).probabilities());
      for (int c = 0; c < 3; ++c) {
        for (int c2 = c + 1; c2 < 3; ++c2) {
          double dist = 0.0;
          for (size_t i = 0; i < f[0].values.size(); ++i) {
            dist += std::abs(f[static_cast<size_t>(c)].values[i] - f[static_cast<size_t>(c2)].values[i]);
          }
          CHECK(dist > 1.0);
        }
        for (int64_t i = 0; i < 8; ++i) {
          const std::span<const float> cell = f[static_cast<size_t>(c)].cell(i);
          CHECK(std::max_element(cell.begin(), cell.end()) - cell.begin() == (c * 2 + i) % K);
        }
      }
    }
  }
}

TEST_CASE("training rejects misaligned pairs") {
  const Pairs p = make_pairs(CondKind::label, 4, 2, 6, 1);
  const CondConfig cfg = tiny_config(CondKind::label);
  const std::vector<LatentGrid> short_z(p.z.begin(), p.z.begin() + 3);
  CHECK_THROWS_AS(train_head(p.c, short_z, {}, {}, cfg, 6, 8), DataError);
  const Pairs attr = make_pairs(CondKind::attributes, 4, 2, 6, 1);
  CHECK_THROWS_AS(train_head(attr.c, p.z, {}, {}, cfg, 6, 8), DataError);
  std::vector<LatentGrid> bad = p.z;
  bad[1].tokens[0] = 6;
  CHECK_THROWS_AS(train_head(p.c, bad, {}, {}, cfg, 6, 8), DataError);
  CHECK_THROWS_AS(train_head({}, {}, {}, {}, cfg, 6, 8), DataError);
}

TEST_CASE("alpha 0 reproduces sample_completion bit for bit") {
  for (prior::OrderMode mode : {prior::OrderMode::random, prior::OrderMode::raster}) {
    const prior::PriorModel pm = toy_prior(2, 3, mode, 9);
    const CategoricalField field = random_field(2, 3, 2.0f, 4);
    for (uint64_t seed = 0; seed < 20; ++seed) {
      for (float temperature : {1.0f, 0.5f, 0.0f}) {
        const ObservationSet obs{{{0, 1, 0}, 2}};
        PoeConfig poe{0.0, temperature, seed};
        CHECK(sample_conditional(pm, field, obs, poe) == prior::sample_completion(pm, obs, seed, temperature));
      }
    }
  }
}

TEST_CASE("conditional sampling keeps observed tokens and is deterministic") {
  const prior::PriorModel pm = toy_prior(2, 3, prior::OrderMode::random, 3);
  CondHead head(tiny_config(CondKind::attributes), 2, 3, 8);
  const Conditioning c = random_conditioning(CondKind::attributes, 2);
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    ObservationSet obs;
    for (int64_t i = 0; i < 8; ++i) {
      if (rng.uniform() < 0.4) obs.push_back({location_of(i, 2), static_cast<int32_t>(rng.below(3))});
    }
    const PoeConfig poe{rng.uniform(), 1.0f, static_cast<uint64_t>(trial)};
    const LatentGrid g = sample_conditional(pm, head, c, obs, poe);
    for (const Observation& o : obs) CHECK(g.at(o.loc) == o.token);
    CHECK(sample_conditional(pm, head, c, obs, poe) == g);
  }
  CHECK_THROWS_AS(sample_conditional(pm, random_field(2, 4, 1.0f, 1), {}, PoeConfig{}), DimensionError);
  CHECK_THROWS_AS(sample_conditional(pm, random_field(2, 3, 1.0f, 1), {}, PoeConfig{2.0, 1.0f, 0}), ParameterError);
}

TEST_CASE("alpha 1 with a one-hot field reproduces the field") {
  const prior::PriorModel pm = toy_prior(2, 3, prior::OrderMode::random, 3);
  CategoricalField f;
  f.d = 2;
  f.K = 3;
  f.normalized = true;
  for (int64_t i = 0; i < 8; ++i) {
    for (int k = 0; k < 3; ++k) f.values.push_back(k == i % 3 ? 1.0f : 0.0f);
  }
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const LatentGrid g = sample_conditional(pm, f, {}, PoeConfig{1.0, 1.0f, seed});
    for (int64_t i = 0; i < 8; ++i) CHECK(g.tokens[static_cast<size_t>(i)] == i % 3);
  }
}

TEST_CASE("sampled chain distribution matches brute-force enumeration") {
  // Raster order fixes the chain, so every grid's probability is the
  // product of its eight renormalized per-step products.
  const int d = 2, K = 3, cells = 8;
  const prior::PriorModel pm = toy_prior(d, K, prior::OrderMode::raster, 21);
  const CategoricalField field = random_field(d, K, 1.5f, 22);
  const CategoricalField probs = field.probabilities();
  const double alpha = 0.75;
  std::map<std::vector<int32_t>, double> exact;
  std::vector<double> marginal(static_cast<size_t>(cells * K), 0.0);
  std::vector<int32_t> tokens(static_cast<size_t>(cells), 0);
  double total = 0.0;
  for (int code = 0; code < 6561; ++code) {
    int rest = code;
    for (int i = 0; i < cells; ++i) {
      tokens[static_cast<size_t>(i)] = rest % K;
      rest /= K;
    }
    double p = 1.0;
    prior::Prefix prefix;
    for (int i = 0; i < cells; ++i) {
      const Location l = location_of(i, d);
      const std::vector<float> logits = prior::prior_logits(pm, prefix, {l})[0];
      // Independent evaluation of softmax^(1 - alpha) * q^alpha.
      std::vector<double> w(K);
      double z = 0.0, zw = 0.0;
      for (int k = 0; k < K; ++k) z += std::exp(static_cast<double>(logits[static_cast<size_t>(k)]));
      for (int k = 0; k < K; ++k) {
        const double prior_p = std::exp(static_cast<double>(logits[static_cast<size_t>(k)])) / z;
        w[static_cast<size_t>(k)] = std::pow(prior_p, 1.0 - alpha) * std::pow(probs.cell(i)[static_cast<size_t>(k)], alpha);
        zw += w[static_cast<size_t>(k)];
      }
      p *= w[static_cast<size_t>(tokens[static_cast<size_t>(i)])] / zw;
      prefix.push_back({l, tokens[static_cast<size_t>(i)]});
    }
    exact[tokens] = p;
    total += p;
    for (int i = 0; i < cells; ++i) marginal[static_cast<size_t>(i * K + tokens[static_cast<size_t>(i)])] += p;
  }
  CHECK(std::abs(total - 1.0) < 1e-9);

  const int n = 100000;
  std::map<std::vector<int32_t>, int> counts;
  std::vector<double> seen(marginal.size(), 0.0);
  for (int s = 0; s < n; ++s) {
    const LatentGrid g = sample_conditional(pm, field, {}, PoeConfig{alpha, 1.0f, static_cast<uint64_t>(s)});
    ++counts[g.tokens];
    for (int i = 0; i < cells; ++i) seen[static_cast<size_t>(i * K + g.tokens[static_cast<size_t>(i)])] += 1.0 / n;
  }
  // Joint total variation, against its expected size under exact sampling
  // (about sum sqrt(p (1 - p) / (2 pi n)) for n draws).
  double tv = 0.0, expected_tv = 0.0;
  for (const auto& [grid, p] : exact) {
    const auto it = counts.find(grid);
    tv += 0.5 * std::abs((it == counts.end() ? 0.0 : it->second / static_cast<double>(n)) - p);
    expected_tv += std::sqrt(p * (1.0 - p) / (2.0 * std::numbers::pi * n));
  }
  INFO("joint TV " << tv << ", expected from sampling noise " << expected_tv);
  CHECK(tv < 1.2 * expected_tv);
  // Per-cell marginals: each within five standard errors.
  for (size_t j = 0; j < marginal.size(); ++j) {
    CHECK(std::abs(seen[j] - marginal[j]) < 5.0 * std::sqrt(marginal[j] * (1.0 - marginal[j]) / n) + 1e-9);
  }
}
