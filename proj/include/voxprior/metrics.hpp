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
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "voxprior/tsdf.hpp"

// Point-set and volumetric shape metrics. All functions are pure.
namespace voxprior::metrics {

using Point = std::array<double, 3>;
using PointCloud = std::vector<Point>;

// One percent of the [-1, 1]^3 diagonal.
inline const double kFscoreThreshold = 0.01 * 2.0 * std::sqrt(3.0);
inline constexpr int64_t kEvalPoints = 2048;

// Zero crossings along grid edges whose endpoint values differ in sign
// (negative vs non-negative), linearly interpolated, then subsampled
// without replacement (or padded by seeded repeats) to exactly n points.
// Throws EmptySurfaceError when there is no sign change.
PointCloud surface_points(const TsdfGrid& grid, int64_t n, uint64_t seed);

// Squared-distance chamfer: mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2.
double chamfer(const PointCloud& a, const PointCloud& b);

// max over partial points of the (unsquared) distance to the nearest
// generated point.
double uhd(const PointCloud& partial, const PointCloud& generated);
double uhd_mean(const PointCloud& partial, std::span<const PointCloud> generations);

// Sum over generations of the mean chamfer distance to the other k - 1.
double tmd(std::span<const PointCloud> generations);

// |A n B| / |A u B| over negative voxels; 1 when both are empty.
double occupancy_iou(const TsdfGrid& a, const TsdfGrid& b);

double fscore(const PointCloud& a, const PointCloud& b, double threshold = kFscoreThreshold);

}  // namespace voxprior::metrics
