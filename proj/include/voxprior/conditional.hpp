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
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxprior/checkpoint.hpp"
#include "voxprior/latent.hpp"
#include "voxprior/layers.hpp"
#include "voxprior/prior.hpp"
#include "voxprior/shapegen.hpp"
#include "voxprior/tsdf.hpp"

// Per-cell "naive" conditionals p(z_i | C) and their product with the prior
// during sampling.
namespace voxprior::conditional {

enum class CondKind { label, attributes, silhouette };
std::string kind_name(CondKind k);
// "label", "attributes" or "silhouette"; ConfigError otherwise.
CondKind kind_from_name(const std::string& name);
// Checkpoint model_kind: cond_label, cond_attr or cond_sil.
std::string checkpoint_kind(CondKind k);

struct Conditioning {
  CondKind kind = CondKind::label;
  int label = 0;
  std::array<float, shapegen::kAttributeCount> attributes{};
  Silhouette silhouette;

  static Conditioning from_label(int label);
  static Conditioning from_attributes(const std::array<float, shapegen::kAttributeCount>& a);
  static Conditioning from_silhouette(Silhouette s);
};

// The conditioning of `kind` that describes a dataset shape.
Conditioning describe(CondKind kind, const shapegen::ShapeSpec& spec, const TsdfGrid& grid, Axis axis);

struct CondConfig {
  CondKind kind = CondKind::silhouette;
  // Negative selects the per-kind default (default_alpha).
  float alpha = -1.0f;
  float lr = 1e-3f;
  int epochs = 60;
  int batch = 8;
  // Trunk channel width.
  int width = 32;
  // Channels of the lifted d^3 volume the trunk starts from.
  int lift = 8;
  int groups = 8;
  // Number of label classes.
  int classes = shapegen::kFamilyCount;
  // Projection axis of silhouette inputs.
  Axis axis = Axis::z;
  uint64_t seed = 0;

  float effective_alpha() const;
  void validate() const;
  nlohmann::json to_json() const;
  static CondConfig from_json(const nlohmann::json& j);
};

// 0.75 for silhouettes, 0.5 for attributes and labels.
float default_alpha(CondKind k);

// d^3 x K values in lexicographic cell order; logits, or per-cell
// probabilities when `normalized`.
struct CategoricalField {
  int d = 0;
  int K = 0;
  bool normalized = false;
  std::vector<float> values;

  std::span<const float> cell(int64_t index) const {
    return {values.data() + index * K, static_cast<size_t>(K)};
  }
  // Per-cell softmax (identity when already normalized).
  CategoricalField probabilities() const;
  bool operator==(const CategoricalField&) const = default;
};

class CondHead {
 public:
  // `D` is the grid resolution silhouettes are drawn at.
  CondHead(const CondConfig& config, int d, int K, int D);
  CondHead(const CondHead&) = delete;
  CondHead& operator=(const CondHead&) = delete;
  CondHead(CondHead&&) = default;

  const CondConfig& config() const { return config_; }
  CondKind kind() const { return config_.kind; }
  int d() const { return d_; }
  int K() const { return K_; }
  int D() const { return D_; }
  diff::ParameterSet& params() { return *params_; }
  const diff::ParameterSet& params() const { return *params_; }
  void zero_output();

  // Logits [B, d^3, K]. Throws ConfigError when a conditioning's kind does
  // not match the head.
  diff::Var forward(diff::Tape& t, std::span<const Conditioning> conds) const;

  Checkpoint to_checkpoint() const;
  static CondHead from_checkpoint(const Checkpoint& ckpt);

 private:
  diff::Var lift_volume(diff::Tape& t, std::span<const Conditioning> conds) const;

  CondConfig config_;
  int d_ = 0;
  int K_ = 0;
  int D_ = 0;
  std::unique_ptr<diff::ParameterSet> params_;
  diff::Parameter* label_table_ = nullptr;
  diff::Parameter* position_ = nullptr;
  diff::Linear attr_lift_;
  std::vector<diff::Conv2d> sil_convs_;
  diff::Linear sil_lift_;
  std::vector<diff::ResBlock3d> trunk_;
  diff::GroupNorm norm_out_;
  diff::Conv3d conv_out_;
};

// Logits of the head for one conditioning.
CategoricalField conditional_field(const CondHead& head, const Conditioning& c);

struct HeadEpochLog {
  int epoch = 0;
  double train_ce = 0.0;
  double val_ce = 0.0;
};
using HeadEpochCallback = std::function<void(const HeadEpochLog&)>;

// Mean per-cell cross-entropy of the head against `latents`.
double evaluate_ce(const CondHead& head, std::span<const Conditioning> conds, std::span<const LatentGrid> latents);

// Adam on the per-cell cross-entropy. Throws DataError when conditionings
// and token grids are not aligned one to one.
CondHead train_head(std::span<const Conditioning> train_c, std::span<const LatentGrid> train_z,
                    std::span<const Conditioning> val_c, std::span<const LatentGrid> val_z, const CondConfig& config,
                    int K, int D, std::vector<HeadEpochLog>* log = nullptr, const HeadEpochCallback& on_epoch = {});

// p(k) proportional to softmax(prior_logits)(k)^(1 - alpha) * cond(k)^alpha,
// evaluated in log space. alpha = 0 and 1 return the two factors exactly.
// Throws ParameterError for alpha outside [0, 1] and NumericError if the
// product has no mass.
std::vector<double> poe_step_distribution(std::span<const float> prior_logits, std::span<const double> cond_cell,
                                          double alpha);

struct PoeConfig {
  double alpha = 0.75;
  // Applied to the prior logits before the product.
  float temperature = 1.0f;
  uint64_t seed = 0;
};

// The prior's sampling chain with each free step drawn from the product of
// the prior and the field's cell at the query location. `field` may hold
// logits or probabilities.
LatentGrid sample_conditional(const prior::PriorModel& prior, const CategoricalField& field,
                              const ObservationSet& observed, const PoeConfig& poe);
LatentGrid sample_conditional(const prior::PriorModel& prior, const CondHead& head, const Conditioning& c,
                              const ObservationSet& observed, const PoeConfig& poe);

}  // namespace voxprior::conditional
