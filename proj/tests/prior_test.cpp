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
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "voxprior/errors.hpp"
#include "voxprior/gradcheck.hpp"
#include "voxprior/prior.hpp"

using namespace voxprior;
using namespace voxprior::prior;
using diff::Tape;

namespace {

NdArray random_codebook(int K, int e, uint64_t seed) {
  Rng rng(seed);
  NdArray cb({K, e});
  for (float& v : cb.data()) v = rng.uniform(-1.0f, 1.0f);
  return cb;
}

PriorConfig tiny_config() {
  PriorConfig c;
  c.L = 2;
  c.h = 2;
  c.w = 8;
  c.F = 2;
  c.batch = 4;
  c.lr = 1e-2f;
  c.seed = 5;
  return c;
}

LatentGrid random_latent(int d, int K, uint64_t seed) {
  Rng rng(seed);
  LatentGrid g(d, 0);
  for (int32_t& t : g.tokens) t = static_cast<int32_t>(rng.below(K));
  return g;
}

}  // namespace

TEST_CASE("fourier features") {
  const std::vector<float> f0 = fourier_features({0, 0, 0}, 4, 4);
  REQUIRE(f0.size() == 24);
  for (size_t i = 0; i < f0.size(); i += 2) {
    CHECK(f0[i] == 0.0f);
    CHECK(f0[i + 1] == 1.0f);
  }
  std::set<std::vector<float>> distinct;
  for (int64_t i = 0; i < 64; ++i) distinct.insert(fourier_features(location_of(i, 4), 4, 4));
  CHECK(distinct.size() == 64);
  CHECK(fourier_features({1, 2, 3}, 4, 4) == fourier_features({1, 2, 3}, 4, 4));
  // x = 1 of 4: c = 0.25, the f = 0 pair is (sin(pi / 2), cos(pi / 2)).
  const std::vector<float> f1 = fourier_features({1, 0, 0}, 4, 4);
  CHECK(f1[0] == doctest::Approx(1.0));
  CHECK(f1[1] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK_THROWS_AS(fourier_features({4, 0, 0}, 4, 4), IndexError);
}

TEST_CASE("sample_order is a seeded uniform permutation") {
  const PermutationOrder o = sample_order(2, 9);
  CHECK(o.size() == 8);
  CHECK(std::set<Location>(o.begin(), o.end()).size() == 8);
  CHECK(sample_order(2, 9) == o);
  std::vector<int> first(8, 0);
  for (uint64_t s = 0; s < 10000; ++s) ++first[static_cast<size_t>(location_index(sample_order(2, s)[0], 2))];
  for (int c : first) CHECK(std::abs(c / 10000.0 - 0.125) < 0.02);
  CHECK(raster_order(2)[3] == Location{0, 1, 1});
}

TEST_CASE("zero head gives the uniform bound") {
  PriorModel m(tiny_config(), 2, random_codebook(128, 4, 1));
  m.zero_head();
  const LatentGrid g = random_latent(2, 128, 3);
  for (uint64_t s = 0; s < 3; ++s) CHECK(prior_nll(m, g, sample_order(2, s)) == doctest::Approx(std::log(128.0)).epsilon(1e-6));
  const auto logits = prior_logits(m, {}, {{0, 0, 0}});
  for (float v : logits[0]) CHECK(v == 0.0f);
}

TEST_CASE("chain probabilities sum to one") {
  PriorModel m(tiny_config(), 2, random_codebook(3, 4, 2));
  for (const PermutationOrder& order : {sample_order(2, 4), raster_order(2)}) {
    double total = 0.0;
    LatentGrid g(2, 0);
    for (int code = 0; code < 6561; ++code) {
      int c = code;
      for (int32_t& t : g.tokens) {
        t = c % 3;
        c /= 3;
      }
      total += std::exp(-8.0 * prior_nll(m, g, order));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("a position never sees later tokens") {
  PriorModel m(tiny_config(), 2, random_codebook(5, 4, 3));
  const PermutationOrder order = sample_order(2, 7);
  std::vector<int32_t> tokens{0, 1, 2, 3, 4, 0, 1, 2};
  Tape t;
  const NdArray base = m.chain_logits(t, {&order, 1}, {&tokens, 1}).value();
  for (size_t j = 0; j < 8; ++j) {
    std::vector<int32_t> changed = tokens;
    changed[j] = (changed[j] + 2) % 5;
    const NdArray out = m.chain_logits(t, {&order, 1}, {&changed, 1}).value();
    // Row s predicts entry s from entries < s.
    for (size_t s = 0; s <= j; ++s) {
      for (int k = 0; k < 5; ++k) CHECK(out[static_cast<int64_t>(s) * 5 + k] == base[static_cast<int64_t>(s) * 5 + k]);
    }
    if (j + 1 < 8) {
      bool moved = false;
      for (int k = 0; k < 5; ++k) moved |= out[static_cast<int64_t>(j + 1) * 5 + k] != base[static_cast<int64_t>(j + 1) * 5 + k];
      CHECK(moved);
    }
  }
}

TEST_CASE("prior_logits matches the teacher-forced chain") {
  PriorModel m(tiny_config(), 2, random_codebook(5, 4, 3));
  const PermutationOrder order = sample_order(2, 8);
  const std::vector<int32_t> tokens{4, 3, 2, 1, 0, 1, 2, 3};
  Tape t;
  const NdArray chain = m.chain_logits(t, {&order, 1}, {&tokens, 1}).value();
  Prefix prefix;
  for (size_t s = 0; s < 8; ++s) {
    const auto row = prior_logits(m, prefix, {order[s]});
    for (int k = 0; k < 5; ++k) CHECK(row[0][k] == doctest::Approx(chain[static_cast<int64_t>(s) * 5 + k]).epsilon(1e-5));
    prefix.push_back({order[s], tokens[s]});
  }
  CHECK(prior_logits(m, {}, {{1, 0, 1}}) == prior_logits(m, {}, {{1, 0, 1}}));
  CHECK_THROWS_AS(prior_logits(m, {{{0, 0, 0}, 1}, {{0, 0, 0}, 2}}, {{1, 1, 1}}), InputError);
  CHECK_THROWS_AS(prior_logits(m, {{{0, 0, 0}, 1}}, {{0, 0, 0}}), InputError);
}

TEST_CASE("gradients through the prior") {
  PriorModel m(tiny_config(), 2, random_codebook(5, 4, 3));
  const std::vector<PermutationOrder> orders{sample_order(2, 1), sample_order(2, 2)};
  const std::vector<std::vector<int32_t>> tokens{{0, 1, 2, 3, 4, 0, 1, 2}, {4, 4, 3, 3, 2, 2, 1, 1}};
  const auto f = diff::projected_objective([&](Tape& t) { return m.chain_logits(t, orders, tokens); }, 3);
  const std::vector<diff::Parameter*> params = m.trainable();
  diff::GradCheckOptions opts;
  opts.samples_per_param = 4;
  const auto r = diff::grad_check(f, params, 4e-2, opts);
  INFO("worst " << r.worst_param << " a=" << r.analytic << " n=" << r.numeric);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("sample_token follows the softmax") {
  const std::vector<float> logits{0.0f, 1.0f, -1.0f, 0.5f};
  const std::vector<double> p = diff::softmax_row(logits);
  Rng rng(4);
  std::vector<int> count(4, 0);
  for (int i = 0; i < 10000; ++i) ++count[static_cast<size_t>(sample_token(logits, 1.0f, rng))];
  for (int k = 0; k < 4; ++k) CHECK(std::abs(count[static_cast<size_t>(k)] / 10000.0 - p[static_cast<size_t>(k)]) < 0.02);
  CHECK(sample_token(logits, 0.0f, rng) == 1);
  CHECK(sample_token(std::vector<float>{2.0f, 2.0f}, 1e-7f, rng) == 0);
}

TEST_CASE("completion keeps observed tokens") {
  PriorModel m(tiny_config(), 2, random_codebook(5, 4, 3));
  const LatentGrid truth = random_latent(2, 5, 6);
  CHECK(sample_completion(m, observe_all(truth), 1) == truth);
  for (uint64_t s = 0; s < 20; ++s) {
    ObservationSet obs;
    Rng rng(s);
    for (const Observation& o : observe_all(truth)) {
      if (rng.uniform() < 0.5) obs.push_back(o);
    }
    const LatentGrid out = sample_completion(m, obs, s);
    for (const Observation& o : obs) CHECK(out.at(o.loc) == o.token);
    CHECK(sample_completion(m, obs, s) == out);
  }
  const ObservationSet all = observe_all(truth);
  const ObservationSet half(all.begin(), all.begin() + 4);
  CHECK(sample_completion(m, half, 1, 0.0f) == sample_completion(m, half, 2, 0.0f));
  const PermutationOrder o = completion_order(m, half, 3);
  CHECK(std::set<Location>(o.begin(), o.begin() + 4) == std::set<Location>{half[0].loc, half[1].loc, half[2].loc, half[3].loc});
  ObservationSet dup{half[0], half[0]};
  CHECK_THROWS_AS(sample_completion(m, dup, 1), InputError);
}

TEST_CASE("raster mode clamps observed cells along the raster chain") {
  PriorConfig c = tiny_config();
  c.order_mode = OrderMode::raster;
  PriorModel m(c, 2, random_codebook(5, 4, 3));
  CHECK(completion_order(m, {}, 3) == raster_order(2));
  const ObservationSet obs{{{1, 1, 1}, 2}, {{0, 1, 0}, 4}};
  const LatentGrid out = sample_completion(m, obs, 5);
  CHECK(out.at({1, 1, 1}) == 2);
  CHECK(out.at({0, 1, 0}) == 4);
}

TEST_CASE("training learns, is deterministic, and checkpoints") {
  // Two fixed grids: an easy distribution well below the uniform bound.
  std::vector<LatentGrid> data;
  for (int i = 0; i < 8; ++i) data.push_back(random_latent(2, 8, static_cast<uint64_t>(i % 2)));
  const NdArray cb = random_codebook(8, 4, 4);
  PriorConfig c = tiny_config();
  c.epochs = 40;
  std::vector<PriorEpochLog> log;
  const PriorModel a = train_prior(data, data, cb, c, &log);
  REQUIRE(log.size() == 41);
  CHECK(log.back().val_nll < std::log(8.0) - 0.5);
  const PriorModel b = train_prior(data, data, cb, c);
  const Checkpoint ca = a.to_checkpoint(), cbk = b.to_checkpoint();
  for (const auto& [name, arr] : ca.tensors) CHECK(arr.vec() == cbk.tensor(name).vec());
  CHECK(ca.tensor("codebook").vec() == cb.vec());

  const auto path = std::filesystem::temp_directory_path() / "voxprior_prior_test.vxpr";
  save_checkpoint(path, ca);
  const PriorModel back = PriorModel::from_checkpoint(load_checkpoint(path));
  std::filesystem::remove(path);
  CHECK(prior_nll(back, data[0], raster_order(2)) == prior_nll(a, data[0], raster_order(2)));
  CHECK(back.config().to_json() == a.config().to_json());

  c.order_mode = OrderMode::raster;
  c.epochs = 1;
  const PriorModel r = train_prior(data, data, cb, c);
  const auto pa = a.params().all();
  const auto pr = const_cast<PriorModel&>(r).params().all();
  REQUIRE(pa.size() == pr.size());
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.shape() == pr[i]->value.shape());

  std::vector<LatentGrid> bad = data;
  bad[3].tokens[0] = 8;
  CHECK_THROWS_AS(train_prior(bad, data, cb, c), DataError);
}

TEST_CASE("config json") {
  const PriorConfig c;
  CHECK(PriorConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK(PriorConfig::from_json({{"order_mode", "raster"}}).order_mode == OrderMode::raster);
  CHECK_THROWS_AS(PriorConfig::from_json({{"order_mode", "spiral"}}), ConfigError);
  CHECK_THROWS_AS(PriorConfig::from_json({{"depth", 3}}), ConfigError);
  CHECK_THROWS_AS(PriorConfig::from_json({{"w", 130}}), ConfigError);
}
