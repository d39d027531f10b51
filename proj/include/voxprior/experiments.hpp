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
#include <span>
#include <vector>

#include "json.hpp"
#include "voxprior/conditional.hpp"
#include "voxprior/metrics.hpp"
#include "voxprior/partial.hpp"
#include "voxprior/prior.hpp"
#include "voxprior/pvqvae.hpp"
#include "voxprior/shapegen.hpp"

// Multi-sample completion, generation and the held-out evaluation protocol.
namespace voxprior::cli {

// k chains, chain j seeded with derive_seed(seed, "chain", j); run in
// parallel, returned in index order. With a field, each free step follows
// the product of experts at `alpha`.
std::vector<LatentGrid> sample_chains(const prior::PriorModel& prior, const ObservationSet& observed, int k,
                                      float temperature, uint64_t seed,
                                      const conditional::CategoricalField* field = nullptr, double alpha = 0.0);

// Surface points of `grid`; empty when the grid has no surface.
metrics::PointCloud surface_or_empty(const TsdfGrid& grid, uint64_t seed);

// Surface points of `gt` that fall inside the observed patches.
metrics::PointCloud partial_points(const TsdfGrid& gt, const std::vector<Location>& observed, int P, uint64_t seed);

struct SetMetrics {
  // Mean over the set; a generation without a surface scores the
  // [-1, 1]^3 diagonal.
  double uhd = 0.0;
  // Over generations that have a surface; 0 when fewer than two do.
  double tmd = 0.0;
  int distinct = 0;
  // Mean occupancy IoU against the ground truth.
  double iou = 0.0;
};

// `partial` may be empty, in which case uhd is left at 0.
SetMetrics set_metrics(const metrics::PointCloud& partial, std::span<const TsdfGrid> grids,
                       std::span<const LatentGrid> latents, const TsdfGrid& gt, uint64_t seed);

// One-sided sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
double sign_test_p(int wins, int losses);

struct ProtocolOptions {
  int shapes = 20;
  int k = 10;
  float temperature = 1.0f;
  PartialSpec partial;
  double alpha = 0.75;
  uint64_t seed = 0;
};

struct ShapeReport {
  int64_t index = 0;
  double recon_iou = 0.0;
  SetMetrics completion;
  SetMetrics unconditional;
  SetMetrics conditional;
};

struct ProtocolReport {
  std::vector<ShapeReport> shapes;
  double recon_iou = 0.0;
  double test_nll = 0.0;
  double completion_uhd = 0.0;
  double unconditional_uhd = 0.0;
  // Fraction of shapes whose completions have tmd > 0 and >= 2 distinct grids.
  double diverse_fraction = 0.0;
  bool has_conditional = false;
  double conditional_iou = 0.0;
  double unconditional_iou = 0.0;
  int wins = 0;
  int losses = 0;
  double sign_p = 1.0;

  nlohmann::json to_json() const;
};

// Runs over the first `shapes` test-split shapes of `data`: reconstruction
// IoU, test NLL, k completions against k unconditional samples, and with a
// head, k conditioned samples (no observations) against the same
// unconditional samples.
ProtocolReport evaluate_protocol(const shapegen::Dataset& data, const pvqvae::PVqvae& vqvae,
                                 const prior::PriorModel& prior, const conditional::CondHead* head,
                                 const ProtocolOptions& options);

}  // namespace voxprior::cli
