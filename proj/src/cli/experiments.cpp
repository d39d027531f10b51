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
#include "voxprior/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <numeric>
#include <set>

#include "voxprior/errors.hpp"
#include "voxprior/parallel.hpp"
#include "voxprior/rng.hpp"

namespace voxprior::cli {

std::vector<LatentGrid> sample_chains(const prior::PriorModel& prior, const ObservationSet& observed, int k,
                                      float temperature, uint64_t seed, const conditional::CategoricalField* field,
                                      double alpha) {
  if (k < 1) throw ParameterError("need at least one sample");
  std::vector<LatentGrid> out(static_cast<size_t>(k));
  const std::optional<conditional::CategoricalField> probs =
      field ? std::optional(field->probabilities()) : std::nullopt;
  parallel_for(k, [&](int64_t j) {
    const uint64_t s = derive_seed(seed, "chain", static_cast<uint64_t>(j));
    out[static_cast<size_t>(j)] =
        probs ? conditional::sample_conditional(prior, *probs, observed, {alpha, temperature, s})
              : prior::sample_completion(prior, observed, s, temperature);
  });
  return out;
}

metrics::PointCloud surface_or_empty(const TsdfGrid& grid, uint64_t seed) {
  try {
    return metrics::surface_points(grid, metrics::kEvalPoints, seed);
  } catch (const EmptySurfaceError&) {
    return {};
  }
}

metrics::PointCloud partial_points(const TsdfGrid& gt, const std::vector<Location>& observed, int P, uint64_t seed) {
  const int d = gt.D / P;
  std::set<Location> obs(observed.begin(), observed.end());
  metrics::PointCloud out;
  for (const metrics::Point& p : surface_or_empty(gt, seed)) {
    Location l;
    int* axes[3] = {&l.x, &l.y, &l.z};
    for (int a = 0; a < 3; ++a) {
      const int cell = std::clamp(static_cast<int>(std::floor((p[static_cast<size_t>(a)] + 1.0) / 2.0 * gt.D)), 0, gt.D - 1);
      *axes[a] = std::min(cell / P, d - 1);
    }
    if (obs.count(l)) out.push_back(p);
  }
  return out;
}

SetMetrics set_metrics(const metrics::PointCloud& partial, std::span<const TsdfGrid> grids,
                       std::span<const LatentGrid> latents, const TsdfGrid& gt, uint64_t seed) {
  SetMetrics m;
  const double diagonal = 2.0 * std::sqrt(3.0);
  std::vector<metrics::PointCloud> clouds;
  for (size_t i = 0; i < grids.size(); ++i) {
    metrics::PointCloud c = surface_or_empty(grids[i], derive_seed(seed, "set_points", i));
    if (!partial.empty()) m.uhd += c.empty() ? diagonal : metrics::uhd(partial, c);
    m.iou += metrics::occupancy_iou(grids[i], gt);
    if (!c.empty()) clouds.push_back(std::move(c));
  }
  if (!grids.empty()) {
    m.uhd /= static_cast<double>(grids.size());
    m.iou /= static_cast<double>(grids.size());
  }
  if (clouds.size() >= 2) m.tmd = metrics::tmd(clouds);
  std::set<std::vector<int32_t>> distinct;
  for (const LatentGrid& g : latents) distinct.insert(g.tokens);
  m.distinct = static_cast<int>(distinct.size());
  return m;
}

double sign_test_p(int wins, int losses) {
  const int n = wins + losses;
  if (n == 0) return 1.0;
  double p = 0.0;
  for (int x = wins; x <= n; ++x) {
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(x + 1.0) - std::lgamma(n - x + 1.0) - n * std::log(2.0));
  }
  return std::min(1.0, p);
}

namespace {

nlohmann::json set_json(const SetMetrics& m) {
  return {{"uhd", m.uhd}, {"tmd", m.tmd}, {"distinct", m.distinct}, {"iou", m.iou}};
}

}  // namespace

nlohmann::json ProtocolReport::to_json() const {
  nlohmann::json per_shape = nlohmann::json::array();
  for (const ShapeReport& s : shapes) {
    nlohmann::json j{{"index", s.index},
                     {"recon_iou", s.recon_iou},
                     {"completion", set_json(s.completion)},
                     {"unconditional", set_json(s.unconditional)}};
    if (has_conditional) j["conditional"] = set_json(s.conditional);
    per_shape.push_back(j);
  }
  nlohmann::json j{{"recon_iou", recon_iou},
                   {"test_nll", test_nll},
                   {"completion_uhd", completion_uhd},
                   {"unconditional_uhd", unconditional_uhd},
                   {"diverse_fraction", diverse_fraction},
                   {"shapes", per_shape}};
  if (has_conditional) {
    j["conditional_iou"] = conditional_iou;
    j["unconditional_iou"] = unconditional_iou;
    j["sign_test"] = {{"wins", wins}, {"losses", losses}, {"p", sign_p}};
  }
  return j;
}

ProtocolReport evaluate_protocol(const shapegen::Dataset& data, const pvqvae::PVqvae& vqvae,
                                 const prior::PriorModel& prior, const conditional::CondHead* head,
                                 const ProtocolOptions& options) {
  const std::vector<int64_t> test = shapegen::split_indices(shapegen::Split::test, data.count());
  if (test.empty()) throw DataError("evaluate: the dataset has no test split");
  const size_t n = std::min(test.size(), static_cast<size_t>(std::max(options.shapes, 1)));
  const int P = vqvae.config().P;
  ProtocolReport report;
  report.has_conditional = head != nullptr;

  std::vector<LatentGrid> test_latents;
  for (int64_t i : test) test_latents.push_back(vqvae.encode_shape(data.grids[static_cast<size_t>(i)]));
  report.test_nll = prior::evaluate_nll(prior, test_latents, derive_seed(options.seed, "test_nll", 0));

  for (size_t s = 0; s < n; ++s) {
    const int64_t index = test[s];
    const TsdfGrid& gt = data.grids[static_cast<size_t>(index)];
    ShapeReport r;
    r.index = index;
    r.recon_iou = metrics::occupancy_iou(vqvae.decode_latent(test_latents[s]), gt);

    const PartialObservation obs = partial_to_observation(gt, options.partial, vqvae);
    const metrics::PointCloud partial = partial_points(gt, obs.locations, P, derive_seed(options.seed, "partial", s));
    const uint64_t shape_seed = derive_seed(options.seed, "shape", static_cast<uint64_t>(index));

    const std::vector<LatentGrid> completions =
        sample_chains(prior, obs.observed, options.k, options.temperature, derive_seed(shape_seed, "complete", 0));
    r.completion = set_metrics(partial, vqvae.decode_latents(completions), completions, gt, shape_seed);
    const std::vector<LatentGrid> free =
        sample_chains(prior, {}, options.k, options.temperature, derive_seed(shape_seed, "unconditional", 0));
    r.unconditional = set_metrics(partial, vqvae.decode_latents(free), free, gt, shape_seed);
    if (head) {
      const conditional::Conditioning c = conditional::describe(head->kind(), data.specs[static_cast<size_t>(index)],
                                                                gt, head->config().axis);
      const conditional::CategoricalField field = conditional::conditional_field(*head, c);
      const std::vector<LatentGrid> guided = sample_chains(prior, {}, options.k, options.temperature,
                                                           derive_seed(shape_seed, "conditional", 0), &field,
                                                           options.alpha);
      r.conditional = set_metrics(partial, vqvae.decode_latents(guided), guided, gt, shape_seed);
    }
    report.shapes.push_back(r);
  }

  int diverse = 0;
  for (const ShapeReport& r : report.shapes) {
    report.recon_iou += r.recon_iou;
    report.completion_uhd += r.completion.uhd;
    report.unconditional_uhd += r.unconditional.uhd;
    if (r.completion.tmd > 0.0 && r.completion.distinct >= 2) ++diverse;
    if (head) {
      report.conditional_iou += r.conditional.iou;
      report.unconditional_iou += r.unconditional.iou;
      if (r.conditional.iou > r.unconditional.iou) ++report.wins;
      if (r.conditional.iou < r.unconditional.iou) ++report.losses;
    }
  }
  const double count = static_cast<double>(report.shapes.size());
  report.recon_iou /= count;
  report.completion_uhd /= count;
  report.unconditional_uhd /= count;
  report.diverse_fraction = diverse / count;
  report.conditional_iou /= count;
  report.unconditional_iou /= count;
  report.sign_p = head ? sign_test_p(report.wins, report.losses) : 1.0;
  return report;
}

}  // namespace voxprior::cli
