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
#include "voxprior/metrics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "voxprior/errors.hpp"
#include "voxprior/rng.hpp"

namespace voxprior::metrics {
namespace {

double dist2(const Point& a, const Point& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

double nearest2(const Point& p, const PointCloud& cloud) {
  double best = std::numeric_limits<double>::infinity();
  for (const Point& q : cloud) best = std::min(best, dist2(p, q));
  return best;
}

void require_points(const PointCloud& c, const char* what) {
  if (c.empty()) throw ParameterError(std::string(what) + ": point cloud is empty");
}

}  // namespace

PointCloud surface_points(const TsdfGrid& grid, int64_t n, uint64_t seed) {
  if (n < 1) throw ParameterError("surface_points needs n >= 1");
  const int D = grid.D;
  PointCloud all;
  for (int i = 0; i < D; ++i) {
    for (int j = 0; j < D; ++j) {
      for (int k = 0; k < D; ++k) {
        const double a = grid.at(i, j, k);
        const Point pa{cell_center(i, D), cell_center(j, D), cell_center(k, D)};
        const int nb[3][3] = {{i + 1, j, k}, {i, j + 1, k}, {i, j, k + 1}};
        for (int axis = 0; axis < 3; ++axis) {
          const int* c = nb[axis];
          if (c[axis] >= D) continue;
          const double b = grid.at(c[0], c[1], c[2]);
          if ((a < 0.0) == (b < 0.0)) continue;
          const double t = a / (a - b);
          Point p = pa;
          p[axis] += t * (cell_center(c[axis], D) - pa[axis]);
          all.push_back(p);
        }
      }
    }
  }
  if (all.empty()) throw EmptySurfaceError("grid has no sign change");
  Rng rng(derive_seed(seed, "surface_points"));
  PointCloud out;
  out.reserve(static_cast<size_t>(n));
  if (static_cast<int64_t>(all.size()) >= n) {
    std::vector<int64_t> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (int64_t i = 0; i < n; ++i) out.push_back(all[static_cast<size_t>(order[static_cast<size_t>(i)])]);
  } else {
    out = all;
    while (static_cast<int64_t>(out.size()) < n) {
      out.push_back(all[static_cast<size_t>(rng.below(static_cast<int64_t>(all.size())))]);
    }
  }
  return out;
}

double chamfer(const PointCloud& a, const PointCloud& b) {
  require_points(a, "chamfer");
  require_points(b, "chamfer");
  double ab = 0.0, ba = 0.0;
  for (const Point& p : a) ab += nearest2(p, b);
  for (const Point& p : b) ba += nearest2(p, a);
  return ab / static_cast<double>(a.size()) + ba / static_cast<double>(b.size());
}

double uhd(const PointCloud& partial, const PointCloud& generated) {
  require_points(partial, "uhd");
  require_points(generated, "uhd");
  double worst = 0.0;
  for (const Point& p : partial) worst = std::max(worst, nearest2(p, generated));
  return std::sqrt(worst);
}

double uhd_mean(const PointCloud& partial, std::span<const PointCloud> generations) {
  if (generations.empty()) throw ParameterError("uhd_mean needs at least one generation");
  double total = 0.0;
  for (const PointCloud& g : generations) total += uhd(partial, g);
  return total / static_cast<double>(generations.size());
}

double tmd(std::span<const PointCloud> generations) {
  const size_t k = generations.size();
  if (k < 2) throw ParameterError("tmd needs k >= 2 generations, got " + std::to_string(k));
  std::vector<double> pair(k * k, 0.0);
  for (size_t i = 0; i < k; ++i) {
    for (size_t j = i + 1; j < k; ++j) pair[i * k + j] = pair[j * k + i] = chamfer(generations[i], generations[j]);
  }
  double total = 0.0;
  for (size_t i = 0; i < k; ++i) {
    double row = 0.0;
    for (size_t j = 0; j < k; ++j) {
      if (j != i) row += pair[i * k + j];
    }
    total += row / static_cast<double>(k - 1);
  }
  return total;
}

double occupancy_iou(const TsdfGrid& a, const TsdfGrid& b) {
  if (a.D != b.D || a.values.size() != b.values.size()) {
    throw DimensionError("occupancy_iou: resolution " + std::to_string(a.D) + " vs " + std::to_string(b.D));
  }
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    const bool ia = a.values[i] < 0.0f, ib = b.values[i] < 0.0f;
    inter += ia && ib;
    uni += ia || ib;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double fscore(const PointCloud& a, const PointCloud& b, double threshold) {
  require_points(a, "fscore");
  require_points(b, "fscore");
  const double t2 = threshold * threshold;
  int64_t pa = 0, pb = 0;
  for (const Point& p : a) pa += nearest2(p, b) <= t2;
  for (const Point& p : b) pb += nearest2(p, a) <= t2;
  const double precision = static_cast<double>(pa) / static_cast<double>(a.size());
  const double recall = static_cast<double>(pb) / static_cast<double>(b.size());
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

}  // namespace voxprior::metrics
