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
#include "voxprior/conditional.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "voxprior/adam.hpp"
#include "voxprior/errors.hpp"
#include "voxprior/ops.hpp"
#include "voxprior/rng.hpp"

namespace voxprior::conditional {

using diff::Tape;
using diff::Var;

namespace {

constexpr int kSilChannels[3] = {8, 16, 32};

int halved(int n) { return (n + 1) / 2; }

int silhouette_features(int D) {
  const int s = halved(halved(halved(D)));
  return kSilChannels[2] * s * s;
}

}  // namespace

std::string kind_name(CondKind k) {
  switch (k) {
    case CondKind::label: return "label";
    case CondKind::attributes: return "attributes";
    case CondKind::silhouette: return "silhouette";
  }
  return "label";
}

CondKind kind_from_name(const std::string& name) {
  if (name == "label") return CondKind::label;
  if (name == "attributes") return CondKind::attributes;
  if (name == "silhouette") return CondKind::silhouette;
  throw ConfigError("cond.kind: expected label, attributes or silhouette, got '" + name + "'");
}

std::string checkpoint_kind(CondKind k) {
  switch (k) {
    case CondKind::label: return "cond_label";
    case CondKind::attributes: return "cond_attr";
    case CondKind::silhouette: return "cond_sil";
  }
  return "cond_label";
}

Conditioning Conditioning::from_label(int label) {
  Conditioning c;
  c.kind = CondKind::label;
  c.label = label;
  return c;
}

Conditioning Conditioning::from_attributes(const std::array<float, shapegen::kAttributeCount>& a) {
  Conditioning c;
  c.kind = CondKind::attributes;
  c.attributes = a;
  return c;
}

Conditioning Conditioning::from_silhouette(Silhouette s) {
  Conditioning c;
  c.kind = CondKind::silhouette;
  c.silhouette = std::move(s);
  return c;
}

Conditioning describe(CondKind kind, const shapegen::ShapeSpec& spec, const TsdfGrid& grid, Axis axis) {
  switch (kind) {
    case CondKind::label: return Conditioning::from_label(spec.label);
    case CondKind::attributes: return Conditioning::from_attributes(spec.attributes);
    case CondKind::silhouette: return Conditioning::from_silhouette(silhouette_project(grid, axis));
  }
  return {};
}

float default_alpha(CondKind k) { return k == CondKind::silhouette ? 0.75f : 0.5f; }

float CondConfig::effective_alpha() const { return alpha < 0.0f ? default_alpha(kind) : alpha; }

void CondConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw ConfigError("cond." + key + ": " + why); };
  if (alpha > 1.0f || std::isnan(alpha)) fail("alpha", "must be in [0, 1] (negative selects the default)");
  if (!(lr > 0.0f)) fail("lr", "must be positive");
  if (epochs < 0) fail("epochs", "must be non-negative");
  if (batch < 1) fail("batch", "must be positive");
  if (groups < 1) fail("groups", "must be positive");
  if (width < 1 || width % groups != 0) fail("width", "must be a positive multiple of groups");
  if (lift < 1) fail("lift", "must be positive");
  if (classes < 1) fail("classes", "must be positive");
}

nlohmann::json CondConfig::to_json() const {
  return {{"kind", kind_name(kind)}, {"alpha", alpha},   {"lr", lr},         {"epochs", epochs},
          {"batch", batch},          {"width", width},   {"lift", lift},     {"groups", groups},
          {"classes", classes},      {"axis", axis_name(axis)}, {"seed", seed}};
}

CondConfig CondConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("cond: expected an object");
  CondConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "kind") c.kind = kind_from_name(value.get<std::string>());
      else if (key == "alpha") c.alpha = value.get<float>();
      else if (key == "lr") c.lr = value.get<float>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "batch") c.batch = value.get<int>();
      else if (key == "width") c.width = value.get<int>();
      else if (key == "lift") c.lift = value.get<int>();
      else if (key == "groups") c.groups = value.get<int>();
      else if (key == "classes") c.classes = value.get<int>();
      else if (key == "axis") c.axis = axis_from_name(value.get<std::string>());
      else if (key == "seed") c.seed = value.get<uint64_t>();
      else throw ConfigError("cond." + key + ": unknown key");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("cond." + key + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

CategoricalField CategoricalField::probabilities() const {
  if (normalized) return *this;
  CategoricalField out = *this;
  out.normalized = true;
  const int64_t n = static_cast<int64_t>(d) * d * d;
  for (int64_t i = 0; i < n; ++i) {
    const std::vector<double> p = diff::softmax_row(cell(i));
    std::transform(p.begin(), p.end(), out.values.begin() + i * K, [](double v) { return static_cast<float>(v); });
  }
  return out;
}

CondHead::CondHead(const CondConfig& config, int d, int K, int D)
    : config_(config), d_(d), K_(K), D_(D), params_(std::make_unique<diff::ParameterSet>()) {
  config_.validate();
  if (d < 1) throw ConfigError("cond: lattice resolution must be positive");
  if (K < 2) throw ConfigError("cond: need at least two tokens");
  if (D < 1) throw ConfigError("cond: grid resolution must be positive");
  diff::ParameterSet& ps = *params_;
  const diff::InitSpec init{config_.seed, 1.0f, 1.0f};
  const int64_t cells = static_cast<int64_t>(d) * d * d, lift = config_.lift, w = config_.width;
  switch (config_.kind) {
    case CondKind::label:
      label_table_ = &ps.add("label_table", NdArray({config_.classes, lift}));
      {
        Rng rng(derive_seed(config_.seed, "label_table", 0));
        for (float& v : label_table_->value.data()) v = static_cast<float>(rng.normal());
      }
      break;
    case CondKind::attributes:
      attr_lift_ = diff::Linear(ps, "attr_lift", shapegen::kAttributeCount, lift * cells, init);
      break;
    case CondKind::silhouette: {
      int in = 1;
      for (int i = 0; i < 3; ++i) {
        sil_convs_.emplace_back(ps, "sil_conv" + std::to_string(i), in, kSilChannels[i], 3, 2, 1, init);
        in = kSilChannels[i];
      }
      sil_lift_ = diff::Linear(ps, "sil_lift", silhouette_features(D), lift * cells, init);
      break;
    }
  }
  position_ = &ps.add("position", NdArray({cells, lift}));
  {
    Rng rng(derive_seed(config_.seed, "position", 0));
    for (float& v : position_->value.data()) v = 0.1f * static_cast<float>(rng.normal());
  }
  trunk_.emplace_back(ps, "trunk0", lift, w, std::gcd(config_.groups, config_.lift), init);
  trunk_.emplace_back(ps, "trunk1", w, w, config_.groups, init);
  trunk_.emplace_back(ps, "trunk2", w, w, config_.groups, init);
  norm_out_ = diff::GroupNorm(ps, "norm_out", w, config_.groups);
  conv_out_ = diff::Conv3d(ps, "conv_out", w, K, 1, 1, 0, init);
}

void CondHead::zero_output() {
  conv_out_.weight().value.fill(0.0f);
  params_->get("conv_out.bias").value.fill(0.0f);
}

Var CondHead::lift_volume(Tape& t, std::span<const Conditioning> conds) const {
  const int64_t B = static_cast<int64_t>(conds.size()), d = d_, lift = config_.lift;
  for (const Conditioning& c : conds) {
    if (c.kind != config_.kind) {
      throw ConfigError("a " + kind_name(c.kind) + " conditioning was given to a " + kind_name(config_.kind) + " head");
    }
  }
  switch (config_.kind) {
    case CondKind::label: {
      std::vector<int32_t> labels;
      for (const Conditioning& c : conds) {
        if (c.label < 0 || c.label >= config_.classes) {
          throw IndexError("label " + std::to_string(c.label) + " outside [0, " + std::to_string(config_.classes) + ")");
        }
        labels.push_back(c.label);
      }
      return diff::broadcast_spatial(diff::embedding(t.parameter(*label_table_), labels), {d, d, d});
    }
    case CondKind::attributes: {
      NdArray a({B, shapegen::kAttributeCount});
      for (int64_t b = 0; b < B; ++b) {
        std::copy(conds[static_cast<size_t>(b)].attributes.begin(), conds[static_cast<size_t>(b)].attributes.end(),
                  a.ptr() + b * shapegen::kAttributeCount);
      }
      return diff::reshape(attr_lift_(t, t.constant(std::move(a))), {B, lift, d, d, d});
    }
    case CondKind::silhouette: {
      const int64_t D = D_;
      NdArray img({B, 1, D, D});
      for (int64_t b = 0; b < B; ++b) {
        const Silhouette& s = conds[static_cast<size_t>(b)].silhouette;
        if (s.D != D_ || static_cast<int64_t>(s.pixels.size()) != D * D) {
          throw DimensionError("silhouette must be " + std::to_string(D_) + "x" + std::to_string(D_));
        }
        if (s.axis != config_.axis) {
          throw InputError(std::string("silhouette projected along ") + axis_name(s.axis) + ", head expects " +
                           axis_name(config_.axis));
        }
        for (int64_t p = 0; p < D * D; ++p) img.ptr()[b * D * D + p] = s.pixels[static_cast<size_t>(p)] ? 1.0f : 0.0f;
      }
      Var x = t.constant(std::move(img));
      for (const diff::Conv2d& conv : sil_convs_) x = diff::swish(conv(t, x));
      x = diff::reshape(x, {B, silhouette_features(D_)});
      return diff::reshape(sil_lift_(t, x), {B, lift, d, d, d});
    }
  }
  throw ConfigError("unknown conditioning kind");
}

Var CondHead::forward(Tape& t, std::span<const Conditioning> conds) const {
  if (conds.empty()) throw DimensionError("cond head: empty batch");
  const int64_t B = static_cast<int64_t>(conds.size()), d = d_, cells = d * d * d, lift = config_.lift;
  std::vector<int32_t> idx(static_cast<size_t>(B * cells));
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int32_t>(static_cast<int64_t>(i) % cells);
  Var pos = diff::reshape(diff::embedding(t.parameter(*position_), idx), {B, d, d, d, lift});
  Var x = diff::add(lift_volume(t, conds), diff::permute(pos, {0, 4, 1, 2, 3}));
  for (const diff::ResBlock3d& blk : trunk_) x = blk(t, x);
  x = conv_out_(t, norm_out_.with_swish(t, x));
  return diff::reshape(diff::permute(x, {0, 2, 3, 4, 1}), {B, cells, K_});
}

Checkpoint CondHead::to_checkpoint() const {
  Checkpoint c;
  c.model_kind = checkpoint_kind(config_.kind);
  c.config = {{"cond", config_.to_json()}, {"d", d_}, {"K", K_}, {"D", D_}};
  c.store(*params_);
  return c;
}

CondHead CondHead::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.model_kind != "cond_label" && ckpt.model_kind != "cond_attr" && ckpt.model_kind != "cond_sil") {
    throw ConfigError("checkpoint holds a '" + ckpt.model_kind + "' model, expected a conditional head");
  }
  const CondConfig config = CondConfig::from_json(ckpt.config.at("cond"));
  if (checkpoint_kind(config.kind) != ckpt.model_kind) {
    throw ConfigError("checkpoint kind '" + ckpt.model_kind + "' disagrees with its " + kind_name(config.kind) +
                      " config");
  }
  CondHead h(config, ckpt.config.at("d").get<int>(), ckpt.config.at("K").get<int>(), ckpt.config.at("D").get<int>());
  ckpt.restore(*h.params_);
  return h;
}

CategoricalField conditional_field(const CondHead& head, const Conditioning& c) {
  Tape t;
  t.set_grad_enabled(false);
  const Var logits = head.forward(t, {&c, 1});
  CategoricalField f;
  f.d = head.d();
  f.K = head.K();
  f.values = logits.value().vec();
  return f;
}

namespace {

void check_pairs(std::span<const Conditioning> conds, std::span<const LatentGrid> latents, CondKind kind, int d,
                 int K) {
  if (conds.size() != latents.size()) {
    throw DataError("conditionings (" + std::to_string(conds.size()) + ") and token grids (" +
                    std::to_string(latents.size()) + ") are not aligned");
  }
  for (size_t i = 0; i < conds.size(); ++i) {
    if (conds[i].kind != kind) throw DataError("pair " + std::to_string(i) + " has a " + kind_name(conds[i].kind) + " conditioning");
    if (latents[i].d != d) throw DataError("pair " + std::to_string(i) + " has a token grid of resolution " + std::to_string(latents[i].d));
    for (int32_t tok : latents[i].tokens) {
      if (tok < 0 || tok >= K) throw DataError("token " + std::to_string(tok) + " outside [0, " + std::to_string(K) + ")");
    }
  }
}

// Mean cell cross-entropy of a batch, recorded on `t`.
Var batch_ce(Tape& t, const CondHead& head, std::span<const Conditioning> conds,
             std::span<const LatentGrid* const> latents) {
  const Var logits = head.forward(t, conds);
  std::vector<int32_t> targets;
  for (const LatentGrid* g : latents) targets.insert(targets.end(), g->tokens.begin(), g->tokens.end());
  return diff::softmax_cross_entropy(diff::reshape(logits, {static_cast<int64_t>(targets.size()), head.K()}), targets);
}

}  // namespace

double evaluate_ce(const CondHead& head, std::span<const Conditioning> conds, std::span<const LatentGrid> latents) {
  check_pairs(conds, latents, head.kind(), head.d(), head.K());
  if (conds.empty()) return 0.0;
  constexpr size_t kChunk = 16;
  double total = 0.0;
  for (size_t start = 0; start < conds.size(); start += kChunk) {
    const size_t n = std::min(kChunk, conds.size() - start);
    std::vector<const LatentGrid*> z;
    for (size_t i = start; i < start + n; ++i) z.push_back(&latents[i]);
    Tape t;
    t.set_grad_enabled(false);
    total += batch_ce(t, head, conds.subspan(start, n), z).value()[0] * static_cast<double>(n);
  }
  return total / static_cast<double>(conds.size());
}

CondHead train_head(std::span<const Conditioning> train_c, std::span<const LatentGrid> train_z,
                    std::span<const Conditioning> val_c, std::span<const LatentGrid> val_z, const CondConfig& config,
                    int K, int D, std::vector<HeadEpochLog>* log, const HeadEpochCallback& on_epoch) {
  if (train_z.empty()) throw DataError("train_head: empty training split");
  const int d = train_z[0].d;
  CondHead head(config, d, K, D);
  check_pairs(train_c, train_z, config.kind, d, K);
  check_pairs(val_c, val_z, config.kind, d, K);
  diff::AdamState adam;
  adam.config.lr = config.lr;
  const std::vector<diff::Parameter*> params = head.params().all();
  auto report = [&](const HeadEpochLog& e) {
    if (log) log->push_back(e);
    if (on_epoch) on_epoch(e);
  };
  HeadEpochLog init;
  init.val_ce = evaluate_ce(head, val_c, val_z);
  report(init);

  std::vector<size_t> index(train_c.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(index.begin(), index.end(), 0);
    Rng rng(derive_seed(config.seed, "cond_epoch", static_cast<uint64_t>(epoch)));
    rng.shuffle(index);
    double total = 0.0;
    int64_t steps = 0;
    for (size_t start = 0; start < index.size(); start += static_cast<size_t>(config.batch)) {
      const size_t end = std::min(index.size(), start + static_cast<size_t>(config.batch));
      std::vector<Conditioning> c;
      std::vector<const LatentGrid*> z;
      for (size_t i = start; i < end; ++i) {
        c.push_back(train_c[index[i]]);
        z.push_back(&train_z[index[i]]);
      }
      Tape t;
      head.params().zero_grad();
      const Var loss = batch_ce(t, head, c, z);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) throw TrainingError("head loss became non-finite at epoch " + std::to_string(epoch));
      t.backward(loss);
      diff::adam_step(adam, params);
      total += value;
      ++steps;
    }
    HeadEpochLog e;
    e.epoch = epoch;
    e.train_ce = total / static_cast<double>(steps);
    e.val_ce = evaluate_ce(head, val_c, val_z);
    report(e);
  }
  return head;
}

std::vector<double> poe_step_distribution(std::span<const float> prior_logits, std::span<const double> cond_cell,
                                          double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("alpha must be in [0, 1]");
  if (prior_logits.empty() || prior_logits.size() != cond_cell.size()) {
    throw DimensionError("poe: prior logits and conditional cell must have the same non-zero length");
  }
  double mass = 0.0;
  for (double q : cond_cell) {
    if (!(q >= 0.0)) throw InputError("poe: conditional probabilities must be non-negative");
    mass += q;
  }
  if (std::abs(mass - 1.0) > 1e-4) throw InputError("poe: conditional cell is not normalized");
  if (alpha == 0.0) return diff::softmax_row(prior_logits);
  if (alpha == 1.0) return {cond_cell.begin(), cond_cell.end()};
  const size_t K = prior_logits.size();
  std::vector<double> logp(K);
  double top = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < K; ++k) {
    const double lq = cond_cell[k] > 0.0 ? std::log(cond_cell[k]) : -std::numeric_limits<double>::infinity();
    logp[k] = (1.0 - alpha) * static_cast<double>(prior_logits[k]) + alpha * lq;
    top = std::max(top, logp[k]);
  }
  if (!std::isfinite(top)) throw NumericError("poe: product has no mass");
  double total = 0.0;
  for (double& v : logp) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : logp) v /= total;
  return logp;
}

LatentGrid sample_conditional(const prior::PriorModel& prior, const CategoricalField& field,
                              const ObservationSet& observed, const PoeConfig& poe) {
  if (field.d != prior.d() || field.K != prior.K()) {
    throw DimensionError("conditional field is " + std::to_string(field.d) + "^3 x " + std::to_string(field.K) +
                         ", prior expects " + std::to_string(prior.d()) + "^3 x " + std::to_string(prior.K()));
  }
  if (!(poe.alpha >= 0.0 && poe.alpha <= 1.0)) throw ParameterError("alpha must be in [0, 1]");
  const CategoricalField probs = field.probabilities();
  const double alpha = poe.alpha;
  const float temperature = poe.temperature;
  return prior::sample_chain(prior, observed, poe.seed,
                             [&](const Location& l, std::span<const float> logits, Rng& rng) -> int32_t {
                               const std::span<const float> cell = probs.cell(location_index(l, probs.d));
                               const std::vector<double> cond(cell.begin(), cell.end());
                               if (temperature <= 1e-6f) {
                                 if (alpha == 0.0) return prior::sample_token(logits, temperature, rng);
                                 const std::vector<double> p = poe_step_distribution(logits, cond, alpha);
                                 return static_cast<int32_t>(std::max_element(p.begin(), p.end()) - p.begin());
                               }
                               std::vector<float> scaled(logits.begin(), logits.end());
                               for (float& v : scaled) v /= temperature;
                               return prior::draw_categorical(poe_step_distribution(scaled, cond, alpha), rng);
                             });
}

LatentGrid sample_conditional(const prior::PriorModel& prior, const CondHead& head, const Conditioning& c,
                              const ObservationSet& observed, const PoeConfig& poe) {
  return sample_conditional(prior, conditional_field(head, c), observed, poe);
}

}  // namespace voxprior::conditional
