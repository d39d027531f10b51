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
#include "voxprior/prior.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <map>
#include <numeric>
#include <set>

#include "voxprior/adam.hpp"
#include "voxprior/errors.hpp"
#include "voxprior/ops.hpp"
#include "voxprior/parallel.hpp"

namespace voxprior::prior {

using diff::Tape;
using diff::Var;

std::string order_mode_name(OrderMode m) { return m == OrderMode::raster ? "raster" : "random"; }

OrderMode order_mode_from_name(const std::string& name) {
  if (name == "random") return OrderMode::random;
  if (name == "raster") return OrderMode::raster;
  throw ConfigError("prior.order_mode: expected random or raster, got '" + name + "'");
}

void PriorConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw ConfigError("prior." + key + ": " + why); };
  if (L < 1) fail("L", "must be positive");
  if (h < 1) fail("h", "must be positive");
  if (w < 1 || w % h != 0) fail("w", "must be a positive multiple of h");
  if (F < 1 || F > 16) fail("F", "must be in [1, 16]");
  if (!(lr > 0.0f)) fail("lr", "must be positive");
  if (epochs < 0) fail("epochs", "must be non-negative");
  if (batch < 1) fail("batch", "must be positive");
}

nlohmann::json PriorConfig::to_json() const {
  return {{"L", L},   {"h", h},           {"w", w},         {"F", F},
          {"lr", lr}, {"epochs", epochs}, {"batch", batch}, {"order_mode", order_mode_name(order_mode)},
          {"seed", seed}};
}

PriorConfig PriorConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("prior: expected an object");
  PriorConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "L") c.L = value.get<int>();
      else if (key == "h") c.h = value.get<int>();
      else if (key == "w") c.w = value.get<int>();
      else if (key == "F") c.F = value.get<int>();
      else if (key == "lr") c.lr = value.get<float>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "batch") c.batch = value.get<int>();
      else if (key == "order_mode") c.order_mode = order_mode_from_name(value.get<std::string>());
      else if (key == "seed") c.seed = value.get<uint64_t>();
      else throw ConfigError("prior." + key + ": unknown key");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("prior." + key + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

std::vector<float> fourier_features(const Location& l, int d, int F) {
  if (!location_valid(l, d)) throw IndexError("location outside the " + std::to_string(d) + "^3 lattice");
  std::vector<float> out;
  out.reserve(static_cast<size_t>(6 * F));
  for (int coord : {l.x, l.y, l.z}) {
    const double c = static_cast<double>(coord) / d;
    for (int f = 0; f < F; ++f) {
      const double a = 2.0 * std::numbers::pi * std::ldexp(1.0, f) * c;
      out.push_back(static_cast<float>(std::sin(a)));
      out.push_back(static_cast<float>(std::cos(a)));
    }
  }
  return out;
}

PermutationOrder raster_order(int d) {
  PermutationOrder o;
  for (int64_t i = 0; i < static_cast<int64_t>(d) * d * d; ++i) o.push_back(location_of(i, d));
  return o;
}

PermutationOrder sample_order(int d, uint64_t seed) {
  PermutationOrder o = raster_order(d);
  Rng rng(seed);
  rng.shuffle(o);
  return o;
}

PriorModel::PriorModel(const PriorConfig& config, int d, const NdArray& codebook)
    : config_(config), d_(d), params_(std::make_unique<diff::ParameterSet>()) {
  config_.validate();
  if (d < 1) throw ConfigError("prior: lattice resolution must be positive");
  if (codebook.rank() != 2 || codebook.dim(0) < 2) throw ConfigError("prior: codebook must be [K >= 2, e]");
  K_ = static_cast<int>(codebook.dim(0));
  e_ = static_cast<int>(codebook.dim(1));
  diff::ParameterSet& ps = *params_;
  const diff::InitSpec init{config_.seed, 1.0f, 1.0f};
  const int w = config_.w, nf = 6 * config_.F;
  codebook_ = &ps.add("codebook", codebook);
  start_ = &ps.add("start", NdArray({1, w}));
  tok_proj_ = diff::Linear(ps, "tok_proj", e_, w, init);
  prev_pos_ = diff::Linear(ps, "prev_pos", nf, w, init);
  query_pos_ = diff::Linear(ps, "query_pos", nf, w, init);
  for (int i = 0; i < config_.L; ++i) {
    blocks_.emplace_back(ps, "block" + std::to_string(i), w, config_.h, init);
  }
  ln_out_ = diff::LayerNorm(ps, "ln_out", w);
  head_ = diff::Linear(ps, "head", w, K_, init);
  for (int64_t i = 0; i < cells(); ++i) {
    const std::vector<float> f = fourier_features(location_of(i, d_), d_, config_.F);
    features_.insert(features_.end(), f.begin(), f.end());
  }
}

std::vector<diff::Parameter*> PriorModel::trainable() {
  std::vector<diff::Parameter*> out;
  for (diff::Parameter* p : params_->all()) {
    if (p != codebook_) out.push_back(p);
  }
  return out;
}

void PriorModel::zero_head() {
  head_.weight().value.fill(0.0f);
  head_.bias()->value.fill(0.0f);
}

Var PriorModel::embed_inputs(Tape& t, std::span<const PermutationOrder> orders,
                             std::span<const std::vector<int32_t>> tokens) const {
  const int64_t B = static_cast<int64_t>(orders.size());
  const int64_t T = static_cast<int64_t>(orders[0].size());
  const int64_t n = B * T, nf = 6 * config_.F, w = config_.w;
  std::vector<int32_t> prev_tokens(static_cast<size_t>(n), 0);
  NdArray prev_feat({n, nf}), query_feat({n, nf}), keep({n, w}), first({n, w});
  for (int64_t b = 0; b < B; ++b) {
    const PermutationOrder& o = orders[static_cast<size_t>(b)];
    const std::vector<int32_t>& tok = tokens[static_cast<size_t>(b)];
    for (int64_t s = 0; s < T; ++s) {
      const int64_t row = b * T + s;
      const float* qf = features_.data() + location_index(o[static_cast<size_t>(s)], d_) * nf;
      std::copy_n(qf, nf, query_feat.ptr() + row * nf);
      if (s == 0) {
        std::fill_n(first.ptr() + row * w, w, 1.0f);
        continue;
      }
      prev_tokens[static_cast<size_t>(row)] = tok[static_cast<size_t>(s - 1)];
      const float* pf = features_.data() + location_index(o[static_cast<size_t>(s - 1)], d_) * nf;
      std::copy_n(pf, nf, prev_feat.ptr() + row * nf);
      std::fill_n(keep.ptr() + row * w, w, 1.0f);
    }
  }
  Var prev = diff::add(tok_proj_(t, diff::embedding(t.frozen(*codebook_), prev_tokens)),
                       prev_pos_(t, t.constant(std::move(prev_feat))));
  prev = diff::mul(prev, t.constant(std::move(keep)));
  Var start = diff::mul(diff::embedding(t.parameter(*start_), std::vector<int32_t>(static_cast<size_t>(n), 0)),
                        t.constant(std::move(first)));
  Var x = diff::add(diff::add(prev, start), query_pos_(t, t.constant(std::move(query_feat))));
  return diff::reshape(x, {B, T, w});
}

Var PriorModel::chain_logits(Tape& t, std::span<const PermutationOrder> orders,
                             std::span<const std::vector<int32_t>> tokens) const {
  if (orders.empty() || orders.size() != tokens.size()) throw DimensionError("chain_logits: need one token list per order");
  const size_t T = orders[0].size();
  if (T == 0 || T > static_cast<size_t>(cells())) throw DimensionError("chain_logits: bad chain length");
  for (size_t b = 0; b < orders.size(); ++b) {
    if (orders[b].size() != T || tokens[b].size() < T - 1) throw DimensionError("chain_logits: ragged chains");
    for (size_t s = 0; s + 1 < T; ++s) {
      if (tokens[b][s] < 0 || tokens[b][s] >= K_) throw IndexError("token outside [0, K)");
    }
  }
  Var x = embed_inputs(t, orders, tokens);
  const NdArray mask = diff::causal_mask(static_cast<int64_t>(T));
  for (const diff::TransformerBlock& blk : blocks_) x = blk(t, x, &mask);
  return head_(t, ln_out_(t, x));
}

Checkpoint PriorModel::to_checkpoint() const {
  Checkpoint c;
  c.model_kind = "prior";
  c.config = {{"prior", config_.to_json()}, {"d", d_}, {"K", K_}, {"e", e_}};
  c.store(*params_);
  return c;
}

PriorModel PriorModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.model_kind != "prior") {
    throw ConfigError("checkpoint holds a '" + ckpt.model_kind + "' model, expected 'prior'");
  }
  const int K = ckpt.config.at("K").get<int>(), e = ckpt.config.at("e").get<int>();
  PriorModel m(PriorConfig::from_json(ckpt.config.at("prior")), ckpt.config.at("d").get<int>(), NdArray({K, e}));
  ckpt.restore(*m.params_);
  return m;
}

namespace {

void check_prefix(const Prefix& prefix, int d, int K, std::set<Location>& seen) {
  for (const Observation& o : prefix) {
    if (!location_valid(o.loc, d)) throw InputError("prefix location outside the lattice");
    if (!seen.insert(o.loc).second) throw InputError("duplicate prefix location");
    if (o.token < 0 || o.token >= K) throw IndexError("prefix token outside [0, K)");
  }
}

}  // namespace

std::vector<std::vector<float>> prior_logits(const PriorModel& model, const Prefix& prefix,
                                             const std::vector<Location>& queries) {
  std::set<Location> seen;
  check_prefix(prefix, model.d(), model.K(), seen);
  std::set<Location> asked;
  for (const Location& q : queries) {
    if (!location_valid(q, model.d())) throw InputError("query location outside the lattice");
    if (seen.count(q)) throw InputError("query location is already in the prefix");
    if (!asked.insert(q).second) throw InputError("duplicate query location");
  }
  if (queries.empty()) return {};
  PermutationOrder base;
  std::vector<int32_t> tokens;
  for (const Observation& o : prefix) {
    base.push_back(o.loc);
    tokens.push_back(o.token);
  }
  std::vector<PermutationOrder> orders(queries.size(), base);
  for (size_t i = 0; i < queries.size(); ++i) orders[i].push_back(queries[i]);
  const std::vector<std::vector<int32_t>> toks(queries.size(), tokens);
  Tape t;
  t.set_grad_enabled(false);
  const Var logits = model.chain_logits(t, orders, toks);
  const int64_t T = static_cast<int64_t>(base.size()) + 1, K = model.K();
  std::vector<std::vector<float>> out(queries.size());
  for (size_t i = 0; i < queries.size(); ++i) {
    const float* row = logits.value().ptr() + (static_cast<int64_t>(i) * T + T - 1) * K;
    out[i].assign(row, row + K);
  }
  return out;
}

namespace {

// Sum of per-token NLL over a batch of full chains, recorded on `t`.
Var chain_nll(Tape& t, const PriorModel& model, std::span<const PermutationOrder> orders,
              std::span<const std::vector<int32_t>> tokens) {
  const Var logits = model.chain_logits(t, orders, tokens);
  std::vector<int32_t> targets;
  for (const auto& tok : tokens) targets.insert(targets.end(), tok.begin(), tok.end());
  const int64_t n = static_cast<int64_t>(targets.size());
  return diff::softmax_cross_entropy(diff::reshape(logits, {n, model.K()}), targets);
}

std::vector<int32_t> tokens_along(const LatentGrid& latent, const PermutationOrder& order) {
  std::vector<int32_t> out;
  out.reserve(order.size());
  for (const Location& l : order) out.push_back(latent.at(l));
  return out;
}

void check_order(const PermutationOrder& order, int d) {
  if (static_cast<int64_t>(order.size()) != static_cast<int64_t>(d) * d * d) {
    throw InputError("order must visit all " + std::to_string(d * d * d) + " cells");
  }
  std::set<Location> seen;
  for (const Location& l : order) {
    if (!location_valid(l, d) || !seen.insert(l).second) throw InputError("order is not a permutation of the cells");
  }
}

void check_latents(std::span<const LatentGrid> latents, int d, int K) {
  for (const LatentGrid& g : latents) {
    if (g.d != d) throw DataError("token grid resolution " + std::to_string(g.d) + " != " + std::to_string(d));
    for (int32_t tok : g.tokens) {
      if (tok < 0 || tok >= K) throw DataError("token " + std::to_string(tok) + " outside [0, " + std::to_string(K) + ")");
    }
  }
}

PermutationOrder order_for(OrderMode mode, int d, uint64_t seed) {
  return mode == OrderMode::raster ? raster_order(d) : sample_order(d, seed);
}

}  // namespace

double prior_nll(const PriorModel& model, const LatentGrid& latent, const PermutationOrder& order) {
  check_latents({&latent, 1}, model.d(), model.K());
  check_order(order, model.d());
  Tape t;
  t.set_grad_enabled(false);
  const std::vector<int32_t> tokens = tokens_along(latent, order);
  return chain_nll(t, model, {&order, 1}, {&tokens, 1}).value()[0];
}

double evaluate_nll(const PriorModel& model, std::span<const LatentGrid> latents, uint64_t seed) {
  if (latents.empty()) return 0.0;
  std::vector<double> nll(latents.size());
  parallel_for(static_cast<int64_t>(latents.size()), [&](int64_t i) {
    const PermutationOrder o =
        order_for(model.config().order_mode, model.d(), derive_seed(seed, "prior_eval", static_cast<uint64_t>(i)));
    nll[static_cast<size_t>(i)] = prior_nll(model, latents[static_cast<size_t>(i)], o);
  });
  return std::accumulate(nll.begin(), nll.end(), 0.0) / static_cast<double>(nll.size());
}

PriorModel train_prior(std::span<const LatentGrid> train, std::span<const LatentGrid> val, const NdArray& codebook,
                       const PriorConfig& config, std::vector<PriorEpochLog>* log,
                       const PriorEpochCallback& on_epoch) {
  if (train.empty()) throw DataError("train_prior: empty training split");
  const int d = train[0].d;
  PriorModel model(config, d, codebook);
  check_latents(train, d, model.K());
  check_latents(val, d, model.K());
  diff::AdamState adam;
  adam.config.lr = config.lr;
  const std::vector<diff::Parameter*> params = model.trainable();
  const uint64_t val_seed = derive_seed(config.seed, "prior_val", 0);
  auto report = [&](const PriorEpochLog& e) {
    if (log) log->push_back(e);
    if (on_epoch) on_epoch(e);
  };
  PriorEpochLog init;
  init.val_nll = evaluate_nll(model, val, val_seed);
  report(init);

  std::vector<int64_t> index(train.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(index.begin(), index.end(), 0);
    Rng rng(derive_seed(config.seed, "prior_epoch", static_cast<uint64_t>(epoch)));
    rng.shuffle(index);
    double total = 0.0;
    int64_t steps = 0;
    for (size_t start = 0; start < index.size(); start += static_cast<size_t>(config.batch)) {
      const size_t end = std::min(index.size(), start + static_cast<size_t>(config.batch));
      std::vector<PermutationOrder> orders;
      std::vector<std::vector<int32_t>> tokens;
      for (size_t i = start; i < end; ++i) {
        orders.push_back(order_for(config.order_mode, d, derive_seed(config.seed, "prior_order", rng.below(1LL << 62))));
        tokens.push_back(tokens_along(train[static_cast<size_t>(index[i])], orders.back()));
      }
      Tape t;
      model.params().zero_grad();
      const Var loss = chain_nll(t, model, orders, tokens);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) throw TrainingError("prior loss became non-finite at epoch " + std::to_string(epoch));
      t.backward(loss);
      diff::adam_step(adam, params);
      total += value;
      ++steps;
    }
    PriorEpochLog e;
    e.epoch = epoch;
    e.train_nll = total / static_cast<double>(steps);
    e.val_nll = evaluate_nll(model, val, val_seed);
    report(e);
  }
  return model;
}

int32_t sample_token(std::span<const float> logits, float temperature, Rng& rng) {
  if (logits.empty()) throw DimensionError("sample_token: empty logits");
  if (temperature <= 1e-6f) {
    return static_cast<int32_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  std::vector<float> scaled(logits.begin(), logits.end());
  for (float& v : scaled) v /= temperature;
  return draw_categorical(diff::softmax_row(scaled), rng);
}

int32_t draw_categorical(std::span<const double> p, Rng& rng) {
  if (p.empty()) throw DimensionError("draw_categorical: empty distribution");
  const double u = rng.uniform();
  double acc = 0.0;
  for (size_t k = 0; k < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return static_cast<int32_t>(k);
  }
  // Rounding left u above the total; take the last non-zero entry.
  for (size_t k = p.size(); k-- > 0;) {
    if (p[k] > 0.0) return static_cast<int32_t>(k);
  }
  return 0;
}

PermutationOrder completion_order(const PriorModel& model, const ObservationSet& observed, uint64_t seed) {
  validate_observations(observed, model.d(), model.K());
  if (model.config().order_mode == OrderMode::raster) return raster_order(model.d());
  Rng rng(derive_seed(seed, "completion_order", 0));
  PermutationOrder seen, free;
  std::set<Location> obs;
  for (const Observation& o : observed) {
    seen.push_back(o.loc);
    obs.insert(o.loc);
  }
  for (const Location& l : raster_order(model.d())) {
    if (!obs.count(l)) free.push_back(l);
  }
  rng.shuffle(seen);
  rng.shuffle(free);
  seen.insert(seen.end(), free.begin(), free.end());
  return seen;
}

LatentGrid sample_completion(const PriorModel& model, const ObservationSet& observed, uint64_t seed,
                             float temperature) {
  return sample_chain(model, observed, seed, [temperature](const Location&, std::span<const float> logits, Rng& rng) {
    return sample_token(logits, temperature, rng);
  });
}

LatentGrid sample_chain(const PriorModel& model, const ObservationSet& observed, uint64_t seed,
                        const TokenPicker& pick) {
  const PermutationOrder order = completion_order(model, observed, seed);
  std::map<Location, int32_t> known;
  for (const Observation& o : observed) known[o.loc] = o.token;
  Rng rng(derive_seed(seed, "completion_tokens", 0));
  LatentGrid out(model.d(), 0);
  Prefix prefix;
  for (const Location& l : order) {
    int32_t tok = 0;
    if (auto it = known.find(l); it != known.end()) {
      tok = it->second;
    } else {
      const std::vector<std::vector<float>> logits = prior_logits(model, prefix, {l});
      tok = pick(l, logits[0], rng);
    }
    out.at(l) = tok;
    prefix.push_back({l, tok});
  }
  return out;
}

}  // namespace voxprior::prior
