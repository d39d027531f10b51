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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <queue>

#include "doctest.h"
#include "voxprior/errors.hpp"
#include "voxprior/shapegen.hpp"

using namespace voxprior;
using namespace voxprior::shapegen;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("voxprior_shapegen_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Number of 6-connected components of negative voxels.
int interior_components(const TsdfGrid& g) {
  const int D = g.D;
  std::vector<int> seen(g.values.size(), 0);
  int components = 0;
  for (int64_t start = 0; start < g.size(); ++start) {
    if (seen[start] || !(g.values[start] < 0.0f)) continue;
    ++components;
    std::queue<int64_t> q;
    q.push(start);
    seen[start] = 1;
    while (!q.empty()) {
      const int64_t c = q.front();
      q.pop();
      const int i = static_cast<int>(c / (D * D)), j = static_cast<int>((c / D) % D), k = static_cast<int>(c % D);
      const int nb[6][3] = {{i - 1, j, k}, {i + 1, j, k}, {i, j - 1, k}, {i, j + 1, k}, {i, j, k - 1}, {i, j, k + 1}};
      for (const auto& n : nb) {
        if (n[0] < 0 || n[1] < 0 || n[2] < 0 || n[0] >= D || n[1] >= D || n[2] >= D) continue;
        const int64_t id = g.index(n[0], n[1], n[2]);
        if (seen[id] || !(g.values[id] < 0.0f)) continue;
        seen[id] = 1;
        q.push(id);
      }
    }
  }
  return components;
}

ShapeSpec spec_at(Family f, double t) {
  ShapeSpec s;
  s.family = f;
  s.label = static_cast<int>(f);
  for (const auto& [name, r] : family_ranges(f)) s.params[name] = r.lo + t * (r.hi - r.lo);
  return s;
}

}  // namespace

TEST_CASE("primitive signed distances") {
  CHECK(primitive_sdf(make_sphere({0, 0, 0}, 0.5), {0, 0, 0}) == doctest::Approx(-0.5));
  CHECK(primitive_sdf(make_sphere({0, 0, 0}, 0.5), {0, 0.5, 0}) == doctest::Approx(0.0));
  CHECK(primitive_sdf(make_box({0, 0, 0}, {0.5, 0.5, 0.5}), {1, 0, 0}) == doctest::Approx(0.5));
  // Corner distance of a unit box from (1, 1, 1): sqrt(3) * 0.5.
  CHECK(primitive_sdf(make_box({0, 0, 0}, {0.5, 0.5, 0.5}), {1, 1, 1}) == doctest::Approx(std::sqrt(0.75)));
  CHECK(primitive_sdf(make_box({0, 0, 0}, {0.5, 0.2, 0.5}), {0, 0.1, 0}) == doctest::Approx(-0.1));
  // Cylinder: radial side, cap, and rim corner.
  const Primitive cyl = make_cylinder({0, 0, 0}, 0.3, 0.4);
  CHECK(primitive_sdf(cyl, {0.5, 0, 0}) == doctest::Approx(0.2));
  CHECK(primitive_sdf(cyl, {0, 0.6, 0}) == doctest::Approx(0.2));
  CHECK(primitive_sdf(cyl, {0.6, 0.8, 0}) == doctest::Approx(0.5));
  CHECK(primitive_sdf(cyl, {0, 0, 0}) == doctest::Approx(-0.3));
  // Yaw by 90 degrees swaps the x and z extents.
  const Primitive rotated = make_box({0, 0, 0}, {0.8, 0.1, 0.2}, M_PI / 2);
  CHECK(primitive_sdf(rotated, {0, 0, 0.7}) < 0.0);
  CHECK(primitive_sdf(rotated, {0.7, 0, 0}) == doctest::Approx(0.5));
}

TEST_CASE("non-positive primitive extents are rejected") {
  CHECK_THROWS_AS(make_sphere({0, 0, 0}, 0.0), ParameterError);
  CHECK_THROWS_AS(make_box({0, 0, 0}, {0.1, -0.1, 0.1}), ParameterError);
  CHECK_THROWS_AS(make_cylinder({0, 0, 0}, 0.1, 0.0), ParameterError);
  Primitive p;
  p.kind = PrimitiveKind::sphere;
  p.radius = -1.0;
  CHECK_THROWS_AS(primitive_sdf(p, {0, 0, 0}), ParameterError);
}

TEST_CASE("scene composition is a pointwise minimum") {
  const Primitive a = make_sphere({-0.5, 0, 0}, 0.3);
  const Primitive b = make_sphere({0.5, 0, 0}, 0.2);
  Scene single{{a}};
  Scene both{{a, b}};
  Rng rng(3);
  for (int n = 0; n < 200; ++n) {
    const Vec3 p{rng.uniform(-1.0f, 1.0f), rng.uniform(-1.0f, 1.0f), rng.uniform(-1.0f, 1.0f)};
    CHECK(single.sdf(p) == primitive_sdf(a, p));
    CHECK(both.sdf(p) == std::min(primitive_sdf(a, p), primitive_sdf(b, p)));
  }
  CHECK(std::isinf(Scene{}.sdf({0, 0, 0})));
}

TEST_CASE("table slab interior is negative") {
  ShapeSpec s = spec_at(Family::table, 0.5);
  const double y = s.params["top_height"], t = s.params["top_thickness"];
  const Scene scene = compose_scene(s);
  // The slab's box SDF at its center is -top_thickness; legs sit at the
  // corners and do not reach the center.
  CHECK(scene.sdf({0.0, y, 0.0}) == doctest::Approx(-t));
  CHECK(scene.sdf({0.0, y + t + 0.05, 0.0}) == doctest::Approx(0.05));
}

TEST_CASE("rasterization samples cell centers and clamps") {
  CHECK(cell_center(0, 32) == doctest::Approx(-1.0 + 1.0 / 32));
  CHECK(cell_center(31, 32) == doctest::Approx(1.0 - 1.0 / 32));
  const TsdfGrid empty = rasterize_tsdf(Scene{}, 8, 0.2f);
  for (float v : empty.values) CHECK(v == 0.2f);
  const TsdfGrid solid = rasterize_tsdf(Scene{{make_box({0, 0, 0}, {2, 2, 2})}}, 8, 0.2f);
  for (float v : solid.values) CHECK(v == -0.2f);
  const TsdfGrid sphere = rasterize_tsdf(Scene{{make_sphere({0, 0, 0}, 0.5)}}, 32, 0.2f);
  CHECK(sphere.at(16, 16, 16) == -0.2f);
  CHECK(sphere.at(15, 15, 15) == -0.2f);
  for (float v : sphere.values) CHECK((v >= -0.2f && v <= 0.2f));
  // A cell center near the surface keeps its unclamped distance.
  const double c = cell_center(24, 32);  // 0.53125
  CHECK(sphere.at(24, 16, 16) ==
        doctest::Approx(std::sqrt(c * c + 2 * cell_center(16, 32) * cell_center(16, 32)) - 0.5).epsilon(1e-6));
  CHECK_THROWS_AS(rasterize_tsdf(Scene{}, 4, 0.2f), ParameterError);
  CHECK_THROWS_AS(rasterize_tsdf(Scene{}, 8, 0.0f), ParameterError);
}

TEST_CASE("disjoint parts rasterize to the min of part rasterizations") {
  const Primitive a = make_box({-0.5, 0, 0}, {0.2, 0.3, 0.3});
  const Primitive b = make_sphere({0.55, 0, 0}, 0.25);
  const TsdfGrid ga = rasterize_tsdf(Scene{{a}}, 16, 0.2f);
  const TsdfGrid gb = rasterize_tsdf(Scene{{b}}, 16, 0.2f);
  const TsdfGrid gab = rasterize_tsdf(Scene{{a, b}}, 16, 0.2f);
  for (int64_t n = 0; n < gab.size(); ++n) CHECK(gab.values[n] == std::min(ga.values[n], gb.values[n]));
}

TEST_CASE("silhouette projection") {
  TsdfGrid pos(8, 0.2f, 0.2f), neg(8, 0.2f, -0.2f);
  for (Axis a : {Axis::x, Axis::y, Axis::z}) {
    for (uint8_t p : silhouette_project(pos, a).pixels) CHECK(p == 0);
    for (uint8_t p : silhouette_project(neg, a).pixels) CHECK(p == 1);
  }
  TsdfGrid one(8, 0.2f, 0.2f);
  one.at(2, 5, 6) = -0.1f;
  const Silhouette s = silhouette_project(one, Axis::z);
  for (int a = 0; a < 8; ++a) {
    for (int b = 0; b < 8; ++b) CHECK(s.at(a, b) == (a == 2 && b == 5));
  }
  CHECK(silhouette_project(one, Axis::x).at(5, 6));
  CHECK(silhouette_project(one, Axis::y).at(2, 6));
}

TEST_CASE("every family is connected and inside the domain") {
  Rng rng(11);
  for (int f = 0; f < kFamilyCount; ++f) {
    const auto family = static_cast<Family>(f);
    std::vector<ShapeSpec> specs = {spec_at(family, 0.0), spec_at(family, 1.0)};
    for (int n = 0; n < 20; ++n) specs.push_back(sample_spec(family, rng));
    for (const ShapeSpec& s : specs) {
      INFO(family_name(family));
      for (const Primitive& p : build_parts(s)) {
        const auto b = primitive_bounds(p);
        for (int a = 0; a < 3; ++a) {
          CHECK(b[0][a] >= -1.0);
          CHECK(b[1][a] <= 1.0);
        }
      }
      CHECK(interior_components(rasterize_tsdf(compose_scene(s), 32, 0.2f)) == 1);
      for (float a : s.attributes) CHECK((a >= 0.0f && a <= 1.0f));
    }
  }
}

TEST_CASE("spec validation") {
  ShapeSpec s = spec_at(Family::lamp, 0.5);
  CHECK_NOTHROW(validate_spec(s));
  s.params["pole_height"] = 5.0;
  CHECK_THROWS_AS(validate_spec(s), ParameterError);
  s = spec_at(Family::lamp, 0.5);
  s.params.erase("shade_radius");
  CHECK_THROWS_AS(compose_scene(s), ParameterError);
  CHECK_THROWS_AS(family_from_name("sofa"), ParameterError);
}

TEST_CASE("split is 80/10/10 by index") {
  CHECK(split_indices(Split::train, 200).size() == 160);
  CHECK(split_indices(Split::val, 200).size() == 20);
  CHECK(split_indices(Split::test, 200).size() == 20);
  CHECK(split_indices(Split::val, 200).front() == 160);
  CHECK(split_of(9, 10) == Split::test);
}

TEST_CASE("dataset generation is byte-deterministic") {
  const auto a = scratch_dir("det_a"), b = scratch_dir("det_b");
  write_dataset(a, make_dataset(10, 7, 32, 0.2f));
  write_dataset(b, make_dataset(10, 7, 32, 0.2f));
  CHECK(slurp(a / "shapes.tsdf") == slurp(b / "shapes.tsdf"));
  CHECK(slurp(a / "shapes.jsonl") == slurp(b / "shapes.jsonl"));
  CHECK(slurp(a / "silhouettes" / "00003_z.pgm") == slurp(b / "silhouettes" / "00003_z.pgm"));
  const Dataset back = read_dataset(a);
  const Dataset again = make_dataset(10, 7, 32, 0.2f);
  CHECK(back.grids == again.grids);
  for (size_t i = 0; i < back.specs.size(); ++i) {
    CHECK(back.specs[i].params == again.specs[i].params);
    CHECK(back.specs[i].attributes == again.specs[i].attributes);
  }
  int w = 0, h = 0;
  const auto px = read_pgm(a / "silhouettes" / "00003_y.pgm", w, h);
  Silhouette s = silhouette_project(again.grids[3], Axis::y);
  for (uint8_t& p : s.pixels) p = p ? 255 : 0;
  CHECK(px == s.pixels);
  CHECK(make_dataset(10, 8, 32, 0.2f).grids != again.grids);
}

TEST_CASE("dataset file size") {
  const auto dir = scratch_dir("size");
  const Dataset ds = make_dataset(200, 1, 32, 0.2f);
  write_tsdf_file(dir / "shapes.tsdf", ds.grids);
  CHECK(std::filesystem::file_size(dir / "shapes.tsdf") == 20u + 200u * 32768u * 4u);
  CHECK(read_tsdf_file(dir / "shapes.tsdf").size() == 200);
}

TEST_CASE("family histogram is uniform") {
  const Dataset ds = make_dataset(1000, 5, 8, 0.2f);
  std::vector<int> hist(kFamilyCount, 0);
  for (const ShapeSpec& s : ds.specs) ++hist[static_cast<size_t>(s.label)];
  for (int c : hist) CHECK(std::abs(c - 200) <= 20);
}

TEST_CASE("truncated dataset file is an I/O error") {
  const auto dir = scratch_dir("trunc");
  const Dataset ds = make_dataset(2, 1, 8, 0.2f);
  write_tsdf_file(dir / "shapes.tsdf", ds.grids);
  std::filesystem::resize_file(dir / "shapes.tsdf", 100);
  CHECK_THROWS_AS(read_tsdf_file(dir / "shapes.tsdf"), IoError);
  CHECK_THROWS_AS(read_tsdf_file(dir / "missing.tsdf"), IoError);
}
