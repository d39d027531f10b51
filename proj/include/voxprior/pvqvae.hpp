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
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxprior/checkpoint.hpp"
#include "voxprior/latent.hpp"
#include "voxprior/layers.hpp"
#include "voxprior/tsdf.hpp"

// Patch-wise VQ-VAE: every P^3 patch is encoded on its own into one
// codebook token; the d^3 token grid is decoded jointly.
namespace voxprior::pvqvae {

struct VqvaeConfig {
  int D = 32;
  float tau = 0.2f;
  int P = 8;
  int K = 128;
  int e = 64;
  float beta = 0.25f;
  float lr = 1e-4f;
  int epochs = 20;
  int batch = 1;
  std::string recon = "mse";  // or "l1"
  // Multiplies the reconstruction term.
  float recon_weight = 1.0f;
  int groups = 8;
  // "constant" or "cosine" (decays to zero over the run).
  std::string lr_schedule = "constant";
  // Learning-rate multiplier for the codebook entries.
  float codebook_lr_scale = 30.0f;
  // Initial scale of the last layer on every residual branch.
  float residual_gain = 1.0f;
  // Encoder widths: input conv, then one entry per halving of the patch.
  std::vector<int> enc_channels{32, 64, 64, 128};
  // Decoder widths: latent conv, then one entry per doubling.
  std::vector<int> dec_channels{128, 64, 32, 16};
  uint64_t seed = 0;

  int d() const { return D / P; }
  int levels() const;
  // Throws ConfigError naming the offending key.
  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are a ConfigError.
  static VqvaeConfig from_json(const nlohmann::json& j);
};

struct PatchBatch {
  int P = 0;
  // n * P^3 values, each patch in (x, y, z) row-major order.
  std::vector<float> values;
  std::vector<Location> locations;

  int64_t count() const { return static_cast<int64_t>(locations.size()); }
  std::span<const float> patch(int64_t n) const;
};

// All d^3 patches in lexicographic location order.
PatchBatch split_patches(const TsdfGrid& grid, int P);
// Only the listed locations, in the given order.
PatchBatch split_patches(const TsdfGrid& grid, int P, const std::vector<Location>& locations);
// Inverse of split_patches over the full lattice.
TsdfGrid assemble_patches(const PatchBatch& batch, int D, float tau);

// Nearest codebook row by squared L2 distance (accumulated in double);
// ties go to the lowest index. codebook: [K, e].
int32_t vector_quantize(std::span<const float> zhat, const NdArray& codebook, double* distance2 = nullptr);

struct VqLoss {
  diff::Var total;
  diff::Var recon;
  diff::Var codebook;
  diff::Var commit;
};

// w * recon(x, x_rec) + |sg[zhat] - zq|^2 + beta |zhat - sg[zq]|^2,
// squared norms taken as means over elements.
VqLoss vqvae_loss(diff::Var x, diff::Var x_rec, diff::Var zhat, diff::Var zq, float beta,
                  const std::string& recon = "mse", float recon_weight = 1.0f);

class PVqvae {
 public:
  explicit PVqvae(const VqvaeConfig& config);
  PVqvae(const PVqvae&) = delete;
  PVqvae& operator=(const PVqvae&) = delete;
  PVqvae(PVqvae&&) = default;

  const VqvaeConfig& config() const { return config_; }
  diff::ParameterSet& params() { return *params_; }
  const diff::ParameterSet& params() const { return *params_; }
  const NdArray& codebook() const { return codebook_->value; }
  diff::Parameter& codebook_param() { return *codebook_; }
  bool trained() const { return trained_; }
  void set_trained(bool t) { trained_ = t; }

  // patches [n, 1, P, P, P] -> pre-quantization vectors [n, e].
  diff::Var encode(diff::Tape& t, diff::Var patches) const;
  // embeddings [B, e, d, d, d] -> TSDF [B, 1, D, D, D] in [-tau, tau].
  diff::Var decode(diff::Tape& t, diff::Var latent) const;

  // Single-patch encoding; the result depends on that patch alone.
  std::vector<float> encode_patch(std::span<const float> patch) const;
  // Throw StateError on an untrained model.
  LatentGrid encode_shape(const TsdfGrid& grid) const;
  ObservationSet encode_subset(const TsdfGrid& grid, const std::vector<Location>& locations) const;
  // Throws IndexError on a token outside [0, K).
  TsdfGrid decode_latent(const LatentGrid& latent) const;
  std::vector<TsdfGrid> decode_latents(std::span<const LatentGrid> latents) const;

  Checkpoint to_checkpoint() const;
  static PVqvae from_checkpoint(const Checkpoint& ckpt);

 private:
  struct Encoder {
    diff::Conv3d conv_in;
    std::vector<diff::Downsample3d> down;
    std::vector<diff::ResBlock3d> res;
    diff::ResBlock3d mid1, mid2;
    diff::AttnBlock3d attn;
    diff::GroupNorm norm_out;
    diff::Conv3d conv_out;
  };
  struct Decoder {
    diff::Conv3d conv_in;
    diff::ResBlock3d mid1, mid2;
    diff::AttnBlock3d attn;
    std::vector<diff::Upsample3d> up;
    std::vector<diff::ResBlock3d> res;
    diff::AttnBlock3d up_attn;
    diff::GroupNorm norm_out;
    diff::Conv3d conv_out;
  };

  void require_trained(const char* what) const;

  VqvaeConfig config_;
  std::unique_ptr<diff::ParameterSet> params_;
  diff::Parameter* codebook_ = nullptr;
  Encoder enc_;
  Decoder dec_;
  bool trained_ = false;
};

struct EpochLog {
  int epoch = 0;  // 0 is the untrained model
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_iou = 0.0;
  int codes_used = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Mean loss and mean occupancy IoU of decode(encode(x)) over `grids`.
struct ReconStats {
  double loss = 0.0;
  double iou = 0.0;
};
ReconStats evaluate_reconstruction(const PVqvae& model, std::span<const TsdfGrid> grids);

// Adam on vqvae_loss over `train`; after every epoch evaluates `val` and
// reports through `on_epoch`. Throws TrainingError with the epoch index if
// the loss becomes non-finite.
PVqvae train_pvqvae(std::span<const TsdfGrid> train, std::span<const TsdfGrid> val, const VqvaeConfig& config,
                    std::vector<EpochLog>* log = nullptr, const EpochCallback& on_epoch = {});

}  // namespace voxprior::pvqvae
