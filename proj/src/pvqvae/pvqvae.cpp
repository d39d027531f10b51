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
#include "voxprior/pvqvae.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "voxprior/adam.hpp"
#include "voxprior/errors.hpp"
#include "voxprior/metrics.hpp"
#include "voxprior/parallel.hpp"
#include "voxprior/rng.hpp"

namespace voxprior::pvqvae {

using diff::Tape;
using diff::Var;

int VqvaeConfig::levels() const {
  int l = 0;
  for (int p = P; p > 1; p /= 2) ++l;
  return l;
}

void VqvaeConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw ConfigError("vqvae." + key + ": " + why); };
  if (D <= 0) fail("D", "must be positive");
  if (!(tau > 0.0f)) fail("tau", "must be positive");
  if (P <= 0 || (P & (P - 1)) != 0) fail("P", "must be a power of two");
  if (D % P != 0) fail("P", "D=" + std::to_string(D) + " is not divisible by P=" + std::to_string(P));
  if (K < 2) fail("K", "needs at least 2 codebook entries");
  if (e <= 0) fail("e", "must be positive");
  if (!(beta >= 0.0f)) fail("beta", "must be non-negative");
  if (!(lr > 0.0f)) fail("lr", "must be positive");
  if (epochs < 0) fail("epochs", "must be non-negative");
  if (batch < 1) fail("batch", "must be at least 1");
  if (recon != "mse" && recon != "l1") fail("recon", "must be mse or l1");
  if (!(recon_weight > 0.0f)) fail("recon_weight", "must be positive");
  if (groups < 1) fail("groups", "must be positive");
  if (lr_schedule != "constant" && lr_schedule != "cosine") fail("lr_schedule", "must be constant or cosine");
  if (!(codebook_lr_scale > 0.0f)) fail("codebook_lr_scale", "must be positive");
  if (!(residual_gain >= 0.0f)) fail("residual_gain", "must be non-negative");
  const size_t want = static_cast<size_t>(levels()) + 1;
  if (enc_channels.size() != want) fail("enc_channels", "needs " + std::to_string(want) + " entries");
  if (dec_channels.size() != want) fail("dec_channels", "needs " + std::to_string(want) + " entries");
  for (int c : enc_channels) {
    if (c <= 0 || c % groups != 0) fail("enc_channels", "widths must be positive multiples of groups");
  }
  for (int c : dec_channels) {
    if (c <= 0 || c % groups != 0) fail("dec_channels", "widths must be positive multiples of groups");
  }
}

nlohmann::json VqvaeConfig::to_json() const {
  return {{"D", D},
          {"tau", tau},
          {"P", P},
          {"K", K},
          {"e", e},
          {"beta", beta},
          {"lr", lr},
          {"epochs", epochs},
          {"batch", batch},
          {"recon", recon},
          {"recon_weight", recon_weight},
          {"groups", groups},
          {"lr_schedule", lr_schedule},
          {"codebook_lr_scale", codebook_lr_scale},
          {"residual_gain", residual_gain},
          {"enc_channels", enc_channels},
          {"dec_channels", dec_channels},
          {"seed", seed}};
}

VqvaeConfig VqvaeConfig::from_json(const nlohmann::json& j) {
  VqvaeConfig c;
  if (!j.is_object()) throw ConfigError("vqvae: expected an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "D") c.D = value.get<int>();
      else if (key == "tau") c.tau = value.get<float>();
      else if (key == "P") c.P = value.get<int>();
      else if (key == "K") c.K = value.get<int>();
      else if (key == "e") c.e = value.get<int>();
      else if (key == "beta") c.beta = value.get<float>();
      else if (key == "lr") c.lr = value.get<float>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "batch") c.batch = value.get<int>();
      else if (key == "recon") c.recon = value.get<std::string>();
      else if (key == "recon_weight") c.recon_weight = value.get<float>();
      else if (key == "groups") c.groups = value.get<int>();
      else if (key == "lr_schedule") c.lr_schedule = value.get<std::string>();
      else if (key == "codebook_lr_scale") c.codebook_lr_scale = value.get<float>();
      else if (key == "residual_gain") c.residual_gain = value.get<float>();
      else if (key == "enc_channels") c.enc_channels = value.get<std::vector<int>>();
      else if (key == "dec_channels") c.dec_channels = value.get<std::vector<int>>();
      else if (key == "seed") c.seed = value.get<uint64_t>();
      else throw ConfigError("vqvae." + key + ": unknown key");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("vqvae." + key + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

std::span<const float> PatchBatch::patch(int64_t n) const {
  const size_t v = static_cast<size_t>(P) * P * P;
  return std::span<const float>(values).subspan(static_cast<size_t>(n) * v, v);
}

PatchBatch split_patches(const TsdfGrid& grid, int P, const std::vector<Location>& locations) {
  if (P <= 0 || grid.D % P != 0) {
    throw ConfigError("grid resolution " + std::to_string(grid.D) + " is not divisible by patch size " +
                      std::to_string(P));
  }
  const int d = grid.D / P;
  PatchBatch b;
  b.P = P;
  b.locations = locations;
  b.values.reserve(locations.size() * static_cast<size_t>(P) * P * P);
  std::set<Location> seen;
  for (const Location& l : locations) {
    if (!location_valid(l, d)) throw IndexError("patch location outside the " + std::to_string(d) + "^3 lattice");
    if (!seen.insert(l).second) throw InputError("duplicate patch location");
    for (int a = 0; a < P; ++a) {
      for (int c = 0; c < P; ++c) {
        for (int e = 0; e < P; ++e) b.values.push_back(grid.at(l.x * P + a, l.y * P + c, l.z * P + e));
      }
    }
  }
  return b;
}

PatchBatch split_patches(const TsdfGrid& grid, int P) {
  if (P <= 0 || grid.D % P != 0) {
    throw ConfigError("grid resolution " + std::to_string(grid.D) + " is not divisible by patch size " +
                      std::to_string(P));
  }
  const int d = grid.D / P;
  std::vector<Location> all;
  for (int64_t i = 0; i < static_cast<int64_t>(d) * d * d; ++i) all.push_back(location_of(i, d));
  return split_patches(grid, P, all);
}

TsdfGrid assemble_patches(const PatchBatch& batch, int D, float tau) {
  const int P = batch.P;
  if (P <= 0 || D % P != 0) throw ConfigError("grid resolution is not divisible by patch size");
  const int d = D / P;
  if (batch.count() != static_cast<int64_t>(d) * d * d) {
    throw DimensionError("assemble_patches needs all " + std::to_string(d * d * d) + " patches, got " +
                         std::to_string(batch.count()));
  }
  TsdfGrid g(D, tau, tau);
  for (int64_t n = 0; n < batch.count(); ++n) {
    const Location& l = batch.locations[static_cast<size_t>(n)];
    auto src = batch.patch(n);
    size_t s = 0;
    for (int a = 0; a < P; ++a) {
      for (int c = 0; c < P; ++c) {
        for (int e = 0; e < P; ++e) g.at(l.x * P + a, l.y * P + c, l.z * P + e) = src[s++];
      }
    }
  }
  return g;
}

int32_t vector_quantize(std::span<const float> zhat, const NdArray& codebook, double* distance2) {
  if (codebook.rank() != 2 || codebook.dim(0) < 1) throw ConfigError("codebook must be a non-empty [K, e] array");
  const int64_t K = codebook.dim(0), e = codebook.dim(1);
  if (static_cast<int64_t>(zhat.size()) != e) {
    throw DimensionError("vector_quantize: vector width " + std::to_string(zhat.size()) + " != codebook width " +
                         std::to_string(e));
  }
  int32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int64_t k = 0; k < K; ++k) {
    const float* row = codebook.ptr() + k * e;
    double dist = 0.0;
    for (int64_t i = 0; i < e; ++i) {
      const double diff = static_cast<double>(zhat[static_cast<size_t>(i)]) - static_cast<double>(row[i]);
      dist += diff * diff;
    }
    if (dist < best_d) {
      best_d = dist;
      best = static_cast<int32_t>(k);
    }
  }
  if (distance2) *distance2 = best_d;
  return best;
}

VqLoss vqvae_loss(Var x, Var x_rec, Var zhat, Var zq, float beta, const std::string& recon, float recon_weight) {
  VqLoss l;
  l.recon = recon == "l1" ? diff::l1(x_rec, x) : diff::mse(x_rec, x);
  if (recon_weight != 1.0f) l.recon = diff::scale(l.recon, recon_weight);
  l.codebook = diff::mse(diff::stop_gradient(zhat), zq);
  l.commit = diff::mse(zhat, diff::stop_gradient(zq));
  l.total = diff::add(diff::add(l.recon, l.codebook), diff::scale(l.commit, beta));
  return l;
}

PVqvae::PVqvae(const VqvaeConfig& config) : config_(config), params_(std::make_unique<diff::ParameterSet>()) {
  config_.validate();
  diff::ParameterSet& ps = *params_;
  const diff::InitSpec init{config_.seed, 1.0f, config_.residual_gain};
  const int g = config_.groups;
  const int levels = config_.levels();
  const auto& ec = config_.enc_channels;
  const auto& dc = config_.dec_channels;

  NdArray cb({config_.K, config_.e});
  Rng rng(derive_seed(config_.seed, "codebook"));
  const float bound = 1.0f / static_cast<float>(config_.K);
  for (float& v : cb.data()) v = rng.uniform(-bound, bound);
  codebook_ = &ps.add("codebook", std::move(cb));

  enc_.conv_in = diff::Conv3d(ps, "enc.conv_in", 1, ec[0], 3, 1, 1, init);
  for (int l = 0; l < levels; ++l) {
    const std::string n = "enc.level" + std::to_string(l);
    enc_.down.emplace_back(ps, n + ".down", ec[l], ec[l], init);
    enc_.res.emplace_back(ps, n + ".res", ec[l], ec[l + 1], g, init);
  }
  const int top = ec[levels];
  enc_.mid1 = diff::ResBlock3d(ps, "enc.mid1", top, top, g, init);
  enc_.attn = diff::AttnBlock3d(ps, "enc.attn", top, g, init);
  enc_.mid2 = diff::ResBlock3d(ps, "enc.mid2", top, top, g, init);
  enc_.norm_out = diff::GroupNorm(ps, "enc.norm_out", top, g);
  // Encoder outputs start at the codebook's scale so that many entries are
  // nearest to some patch from the first step.
  enc_.conv_out = diff::Conv3d(ps, "enc.conv_out", top, config_.e, 1, 1, 0,
                               {config_.seed, 1.0f / static_cast<float>(config_.K), 1.0f});

  dec_.conv_in = diff::Conv3d(ps, "dec.conv_in", config_.e, dc[0], 3, 1, 1, init);
  dec_.mid1 = diff::ResBlock3d(ps, "dec.mid1", dc[0], dc[0], g, init);
  dec_.attn = diff::AttnBlock3d(ps, "dec.attn", dc[0], g, init);
  dec_.mid2 = diff::ResBlock3d(ps, "dec.mid2", dc[0], dc[0], g, init);
  for (int l = 0; l < levels; ++l) {
    const std::string n = "dec.level" + std::to_string(l);
    dec_.up.emplace_back(ps, n + ".up", dc[l], dc[l + 1], init);
    dec_.res.emplace_back(ps, n + ".res", dc[l + 1], dc[l + 1], g, init);
  }
  if (levels > 0) dec_.up_attn = diff::AttnBlock3d(ps, "dec.level0.attn", dc[1], g, init);
  dec_.norm_out = diff::GroupNorm(ps, "dec.norm_out", dc[levels], g);
  dec_.conv_out = diff::Conv3d(ps, "dec.conv_out", dc[levels], 1, 3, 1, 1, init);
}

Var PVqvae::encode(Tape& t, Var patches) const {
  const Shape& s = patches.shape();
  const int P = config_.P;
  if (s.size() != 5 || s[1] != 1 || s[2] != P || s[3] != P || s[4] != P) {
    throw DimensionError("encode expects [n, 1, " + std::to_string(P) + ", " + std::to_string(P) + ", " +
                         std::to_string(P) + "] patches, got " + shape_str(s));
  }
  // Inputs are rescaled from [-tau, tau] to [-1, 1].
  Var h = enc_.conv_in(t, diff::scale(patches, 1.0f / config_.tau));
  for (size_t l = 0; l < enc_.down.size(); ++l) {
    h = enc_.down[l](t, h);
    h = enc_.res[l](t, h);
  }
  h = enc_.mid1(t, h);
  h = enc_.attn(t, h);
  h = enc_.mid2(t, h);
  h = enc_.conv_out(t, enc_.norm_out.with_swish(t, h));
  return diff::reshape(h, {s[0], config_.e});
}

Var PVqvae::decode(Tape& t, Var latent) const {
  const Shape& s = latent.shape();
  const int d = config_.d();
  if (s.size() != 5 || s[1] != config_.e || s[2] != d || s[3] != d || s[4] != d) {
    throw DimensionError("decode expects [B, " + std::to_string(config_.e) + ", " + std::to_string(d) + ", " +
                         std::to_string(d) + ", " + std::to_string(d) + "], got " + shape_str(s));
  }
  Var h = dec_.conv_in(t, latent);
  h = dec_.mid1(t, h);
  h = dec_.attn(t, h);
  h = dec_.mid2(t, h);
  for (size_t l = 0; l < dec_.up.size(); ++l) {
    h = dec_.up[l](t, h);
    h = dec_.res[l](t, h);
    if (l == 0) h = dec_.up_attn(t, h);
  }
  h = dec_.conv_out(t, dec_.norm_out.with_swish(t, h));
  return diff::scale(diff::tanh(h), config_.tau);
}

std::vector<float> PVqvae::encode_patch(std::span<const float> patch) const {
  const int P = config_.P;
  if (static_cast<int64_t>(patch.size()) != static_cast<int64_t>(P) * P * P) {
    throw DimensionError("encode_patch expects " + std::to_string(P * P * P) + " values");
  }
  Tape t;
  t.set_grad_enabled(false);
  Var z = encode(t, t.constant(NdArray({1, 1, P, P, P}, std::vector<float>(patch.begin(), patch.end()))));
  return z.value().vec();
}

void PVqvae::require_trained(const char* what) const {
  if (!trained_) throw StateError(std::string(what) + " needs a trained model; load a checkpoint first");
}

ObservationSet PVqvae::encode_subset(const TsdfGrid& grid, const std::vector<Location>& locations) const {
  require_trained("encode");
  if (grid.D != config_.D) {
    throw DimensionError("grid resolution " + std::to_string(grid.D) + " != model D " + std::to_string(config_.D));
  }
  const PatchBatch b = split_patches(grid, config_.P, locations);
  ObservationSet obs(locations.size());
  parallel_for(b.count(), [&](int64_t n) {
    const std::vector<float> z = encode_patch(b.patch(n));
    obs[static_cast<size_t>(n)] = {b.locations[static_cast<size_t>(n)], vector_quantize(z, codebook())};
  });
  return obs;
}

LatentGrid PVqvae::encode_shape(const TsdfGrid& grid) const {
  const int d = config_.d();
  std::vector<Location> all;
  for (int64_t i = 0; i < static_cast<int64_t>(d) * d * d; ++i) all.push_back(location_of(i, d));
  LatentGrid out(d, 0);
  for (const Observation& o : encode_subset(grid, all)) out.at(o.loc) = o.token;
  return out;
}

std::vector<TsdfGrid> PVqvae::decode_latents(std::span<const LatentGrid> latents) const {
  std::vector<TsdfGrid> out(latents.size());
  parallel_for(static_cast<int64_t>(latents.size()), [&](int64_t i) {
    out[static_cast<size_t>(i)] = decode_latent(latents[static_cast<size_t>(i)]);
  });
  return out;
}

TsdfGrid PVqvae::decode_latent(const LatentGrid& latent) const {
  const int d = config_.d();
  if (latent.d != d) {
    throw DimensionError("latent resolution " + std::to_string(latent.d) + " != model d " + std::to_string(d));
  }
  Tape t;
  t.set_grad_enabled(false);
  Var rows = diff::embedding(t.frozen(*codebook_), latent.tokens);
  Var lat = diff::permute(diff::reshape(rows, {1, d, d, d, config_.e}), {0, 4, 1, 2, 3});
  Var x = decode(t, lat);
  TsdfGrid g(config_.D, config_.tau, 0.0f);
  const auto& v = x.value().data();
  std::copy(v.begin(), v.end(), g.values.begin());
  return g;
}

Checkpoint PVqvae::to_checkpoint() const {
  Checkpoint c;
  c.model_kind = "pvqvae";
  c.config = {{"vqvae", config_.to_json()}, {"trained", trained_}};
  c.store(*params_);
  return c;
}

PVqvae PVqvae::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.model_kind != "pvqvae") {
    throw ConfigError("checkpoint holds a '" + ckpt.model_kind + "' model, expected 'pvqvae'");
  }
  PVqvae m(VqvaeConfig::from_json(ckpt.config.at("vqvae")));
  ckpt.restore(*m.params_);
  m.trained_ = ckpt.config.value("trained", false);
  return m;
}

namespace {

struct BatchOut {
  VqLoss loss;
  Var x_rec;
  std::vector<int32_t> tokens;
};

// Full forward pass over a batch of grids.
BatchOut forward_batch(Tape& t, PVqvae& model, std::span<const TsdfGrid* const> grids) {
  const VqvaeConfig& cfg = model.config();
  const int P = cfg.P, d = cfg.d(), D = cfg.D;
  const int64_t B = static_cast<int64_t>(grids.size());
  const int64_t cells = static_cast<int64_t>(d) * d * d;
  NdArray patches({B * cells, 1, P, P, P});
  NdArray target({B, 1, D, D, D});
  for (int64_t b = 0; b < B; ++b) {
    const TsdfGrid& g = *grids[static_cast<size_t>(b)];
    const PatchBatch pb = split_patches(g, P);
    std::copy(pb.values.begin(), pb.values.end(), patches.ptr() + b * cells * P * P * P);
    std::copy(g.values.begin(), g.values.end(), target.ptr() + b * g.size());
  }
  Var zhat = model.encode(t, t.constant(std::move(patches)));
  BatchOut out;
  out.tokens.resize(static_cast<size_t>(B * cells));
  const NdArray& zv = zhat.value();
  for (int64_t n = 0; n < B * cells; ++n) {
    out.tokens[static_cast<size_t>(n)] =
        vector_quantize(std::span<const float>(zv.ptr() + n * cfg.e, static_cast<size_t>(cfg.e)), model.codebook());
  }
  Var zq = diff::embedding(t.parameter(model.codebook_param()), out.tokens);
  Var st = diff::straight_through(zhat, zq);
  Var lat = diff::permute(diff::reshape(st, {B, d, d, d, cfg.e}), {0, 4, 1, 2, 3});
  out.x_rec = model.decode(t, lat);
  out.loss = vqvae_loss(t.constant(std::move(target)), out.x_rec, zhat, zq, cfg.beta, cfg.recon, cfg.recon_weight);
  return out;
}

}  // namespace

ReconStats evaluate_reconstruction(const PVqvae& model, std::span<const TsdfGrid> grids) {
  ReconStats s;
  if (grids.empty()) return s;
  std::vector<double> loss(grids.size()), iou(grids.size());
  parallel_for(static_cast<int64_t>(grids.size()), [&](int64_t i) {
    Tape t;
    t.set_grad_enabled(false);
    const TsdfGrid* one[1] = {&grids[static_cast<size_t>(i)]};
    BatchOut o = forward_batch(t, const_cast<PVqvae&>(model), one);
    loss[static_cast<size_t>(i)] = o.loss.total.value()[0];
    TsdfGrid rec(model.config().D, model.config().tau, 0.0f);
    std::copy(o.x_rec.value().data().begin(), o.x_rec.value().data().end(), rec.values.begin());
    iou[static_cast<size_t>(i)] = metrics::occupancy_iou(grids[static_cast<size_t>(i)], rec);
  });
  s.loss = std::accumulate(loss.begin(), loss.end(), 0.0) / static_cast<double>(grids.size());
  s.iou = std::accumulate(iou.begin(), iou.end(), 0.0) / static_cast<double>(grids.size());
  return s;
}

PVqvae train_pvqvae(std::span<const TsdfGrid> train, std::span<const TsdfGrid> val, const VqvaeConfig& config,
                    std::vector<EpochLog>* log, const EpochCallback& on_epoch) {
  if (train.empty()) throw DataError("train_pvqvae: empty training split");
  PVqvae model(config);
  for (const TsdfGrid& g : train) {
    if (g.D != config.D) throw DataError("training grid resolution " + std::to_string(g.D) + " != D");
  }
  diff::AdamState adam, codebook_adam;
  adam.config.lr = config.lr;
  codebook_adam.config.lr = config.lr * config.codebook_lr_scale;
  std::vector<diff::Parameter*> params;
  for (diff::Parameter* p : model.params().all()) {
    if (p != &model.codebook_param()) params.push_back(p);
  }
  diff::Parameter* const codebook[] = {&model.codebook_param()};
  auto report = [&](const EpochLog& e) {
    if (log) log->push_back(e);
    if (on_epoch) on_epoch(e);
  };
  auto validate = [&](EpochLog& e) {
    const ReconStats s = evaluate_reconstruction(model, val);
    e.val_loss = s.loss;
    e.val_iou = s.iou;
  };

  EpochLog init;
  validate(init);
  report(init);

  const int64_t per_epoch = (static_cast<int64_t>(train.size()) + config.batch - 1) / config.batch;
  const int64_t total_steps = per_epoch * config.epochs;
  int64_t step = 0;
  std::vector<int64_t> order(train.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.seed, "vqvae_epoch", static_cast<uint64_t>(epoch)));
    rng.shuffle(order);
    double total = 0.0;
    int64_t batches = 0;
    std::set<int32_t> used;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch)) {
      std::vector<const TsdfGrid*> batch;
      for (size_t i = start; i < std::min(order.size(), start + static_cast<size_t>(config.batch)); ++i) {
        batch.push_back(&train[static_cast<size_t>(order[i])]);
      }
      Tape t;
      model.params().zero_grad();
      BatchOut o = forward_batch(t, model, batch);
      const double loss = o.loss.total.value()[0];
      if (!std::isfinite(loss)) {
        throw TrainingError("pvqvae loss became non-finite at epoch " + std::to_string(epoch));
      }
      t.backward(o.loss.total);
      if (config.lr_schedule == "cosine") {
        const double f = 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps));
        adam.config.lr = static_cast<float>(config.lr * f);
        codebook_adam.config.lr = static_cast<float>(config.lr * config.codebook_lr_scale * f);
      }
      ++step;
      try {
        diff::adam_step(adam, params);
        diff::adam_step(codebook_adam, codebook);
      } catch (const TrainingError& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ": " + e.what());
      }
      used.insert(o.tokens.begin(), o.tokens.end());
      total += loss;
      ++batches;
    }
    EpochLog e;
    e.epoch = epoch;
    e.train_loss = total / static_cast<double>(batches);
    e.codes_used = static_cast<int>(used.size());
    validate(e);
    report(e);
  }
  model.set_trained(true);
  return model;
}

}  // namespace voxprior::pvqvae
