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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxprior/checkpoint.hpp"
#include "voxprior/latent.hpp"
#include "voxprior/layers.hpp"
#include "voxprior/rng.hpp"

// Autoregressive transformer over token grids, trained on randomly
// permuted chains so that any subset of cells can serve as the context.
namespace voxprior::prior {

// A visiting order over all d^3 cells.
using PermutationOrder = std::vector<Location>;

enum class OrderMode { random, raster };
std::string order_mode_name(OrderMode m);
// Throws ConfigError on anything but "random" or "raster".
OrderMode order_mode_from_name(const std::string& name);

struct PriorConfig {
  int L = 4;
  int h = 4;
  int w = 128;
  int F = 4;
  float lr = 5e-4f;
  int epochs = 300;
  int batch = 16;
  OrderMode order_mode = OrderMode::random;
  uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static PriorConfig from_json(const nlohmann::json& j);
};

// Per axis, c = coordinate / d and [sin(2 pi 2^f c), cos(2 pi 2^f c)] for
// f = 0..F-1; axes concatenated in x, y, z order (6F values).
std::vector<float> fourier_features(const Location& l, int d, int F);

// Uniform permutation of the d^3 cells drawn from `seed`.
PermutationOrder sample_order(int d, uint64_t seed);
// Lexicographic order.
PermutationOrder raster_order(int d);

// A chain of (location, token) pairs: the prefix a prediction may see.
using Prefix = std::vector<Observation>;

class PriorModel {
 public:
  // `codebook` [K, e] is copied and kept frozen; tokens enter the network
  // as codebook rows.
  PriorModel(const PriorConfig& config, int d, const NdArray& codebook);
  PriorModel(const PriorModel&) = delete;
  PriorModel& operator=(const PriorModel&) = delete;
  PriorModel(PriorModel&&) = default;

  const PriorConfig& config() const { return config_; }
  int d() const { return d_; }
  int K() const { return K_; }
  int cells() const { return d_ * d_ * d_; }
  diff::ParameterSet& params() { return *params_; }
  const diff::ParameterSet& params() const { return *params_; }
  // Trainable parameters (everything except the codebook).
  std::vector<diff::Parameter*> trainable();
  // Zeroes the output head so that every prediction is uniform.
  void zero_head();

  // Teacher-forced chains. tokens[b] holds the tokens of chain b listed in
  // visiting order; all chains share a length T <= d^3. Returns logits
  // [B, T, K]; row t depends on chain entries < t and location t only.
  diff::Var chain_logits(diff::Tape& t, std::span<const PermutationOrder> orders,
                         std::span<const std::vector<int32_t>> tokens) const;

  Checkpoint to_checkpoint() const;
  static PriorModel from_checkpoint(const Checkpoint& ckpt);

 private:
  diff::Var embed_inputs(diff::Tape& t, std::span<const PermutationOrder> orders,
                         std::span<const std::vector<int32_t>> tokens) const;

  PriorConfig config_;
  int d_ = 0;
  int K_ = 0;
  int e_ = 0;
  std::unique_ptr<diff::ParameterSet> params_;
  diff::Parameter* codebook_ = nullptr;
  diff::Parameter* start_ = nullptr;
  diff::Linear tok_proj_, prev_pos_, query_pos_;
  std::vector<diff::TransformerBlock> blocks_;
  diff::LayerNorm ln_out_;
  diff::Linear head_;
  // Fourier features of every cell, [d^3, 6F].
  std::vector<float> features_;
};

// Logits [queries, K] for each query location given the prefix. Throws
// InputError on duplicate prefix locations or a query inside the prefix.
std::vector<std::vector<float>> prior_logits(const PriorModel& model, const Prefix& prefix,
                                             const std::vector<Location>& queries);

// Mean per-token negative log-likelihood of `latent` along `order`.
double prior_nll(const PriorModel& model, const LatentGrid& latent, const PermutationOrder& order);

struct PriorEpochLog {
  int epoch = 0;
  double train_nll = 0.0;
  double val_nll = 0.0;
};
using PriorEpochCallback = std::function<void(const PriorEpochLog&)>;

// Mean NLL over `latents`, chain i following order derive_seed(seed, i)
// (raster order in raster mode).
double evaluate_nll(const PriorModel& model, std::span<const LatentGrid> latents, uint64_t seed);

// Adam on the chain NLL; every example gets a fresh order per step.
// Throws DataError on tokens outside [0, K) and TrainingError on divergence.
PriorModel train_prior(std::span<const LatentGrid> train, std::span<const LatentGrid> val, const NdArray& codebook,
                       const PriorConfig& config, std::vector<PriorEpochLog>* log = nullptr,
                       const PriorEpochCallback& on_epoch = {});

// Inverse-CDF draw from probabilities that sum to one.
int32_t draw_categorical(std::span<const double> p, Rng& rng);

// Draws a token from softmax(logits / temperature); temperatures at or
// below 1e-6 pick the argmax (lowest index on ties).
int32_t sample_token(std::span<const float> logits, float temperature, Rng& rng);

// Chooses the token at `query` given the prior's logits there.
using TokenPicker = std::function<int32_t(const Location& query, std::span<const float> logits, Rng& rng)>;

// The chain behind sample_completion with a caller-supplied step rule.
LatentGrid sample_chain(const PriorModel& model, const ObservationSet& observed, uint64_t seed,
                        const TokenPicker& pick);

// Observed cells go first in a random order, then the remaining cells are
// sampled one at a time in a random order. In raster mode the chain is the
// raster order with observed cells clamped to their tokens.
LatentGrid sample_completion(const PriorModel& model, const ObservationSet& observed, uint64_t seed,
                             float temperature = 1.0f);

// The chain sample_completion follows for `observed`: observed cells
// first, then the free cells, each group in its own order.
PermutationOrder completion_order(const PriorModel& model, const ObservationSet& observed, uint64_t seed);

}  // namespace voxprior::prior
