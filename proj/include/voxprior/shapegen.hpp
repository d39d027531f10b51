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
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "voxprior/rng.hpp"
#include "voxprior/tsdf.hpp"

// Procedural shapes as unions of placed primitives, their TSDF
// rasterization, and the on-disk dataset layout.
namespace voxprior::shapegen {

using Vec3 = std::array<double, 3>;

enum class PrimitiveKind { box, sphere, cylinder };

// A primitive placed by translation to `center` and a rotation of `yaw`
// radians about +y. Boxes use `half_extent`; spheres `radius`; cylinders
// are y-aligned with `radius` and `half_height`.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::sphere;
  Vec3 center{0.0, 0.0, 0.0};
  double yaw = 0.0;
  Vec3 half_extent{0.0, 0.0, 0.0};
  double radius = 0.0;
  double half_height = 0.0;
};

Primitive make_box(Vec3 center, Vec3 half_extent, double yaw = 0.0);
Primitive make_sphere(Vec3 center, double radius);
Primitive make_cylinder(Vec3 center, double radius, double half_height, double yaw = 0.0);

double primitive_sdf(const Primitive& prim, const Vec3& p);

// Axis-aligned bounds of a placed primitive: {min, max}.
std::array<Vec3, 2> primitive_bounds(const Primitive& prim);

enum class Family { table = 0, chair = 1, box = 2, lamp = 3, craft = 4 };
inline constexpr int kFamilyCount = 5;
inline constexpr int kAttributeCount = 4;
const char* family_name(Family f);
Family family_from_name(const std::string& name);

struct ParamRange {
  double lo;
  double hi;
};

// Documented parameter ranges per family, in [-1, 1]^3 units.
const std::map<std::string, ParamRange>& family_ranges(Family f);

struct ShapeSpec {
  Family family = Family::box;
  std::map<std::string, double> params;
  int label = 0;
  // thinness, height, width, depth; each in [0, 1].
  std::array<float, kAttributeCount> attributes{};
};

// Draws every parameter uniformly within the family's range.
ShapeSpec sample_spec(Family family, Rng& rng);

// Throws ParameterError if a parameter is missing or outside its range.
void validate_spec(const ShapeSpec& spec);

struct Scene {
  std::vector<Primitive> parts;
  // Minimum over parts; +infinity for an empty scene.
  double sdf(const Vec3& p) const;
};

std::vector<Primitive> build_parts(const ShapeSpec& spec);
Scene compose_scene(const ShapeSpec& spec);

// Derived attributes of a spec's part layout.
std::array<float, kAttributeCount> compute_attributes(const ShapeSpec& spec);

using SdfFn = std::function<double(const Vec3&)>;
TsdfGrid rasterize_tsdf(const SdfFn& sdf, int D, float tau);
TsdfGrid rasterize_tsdf(const Scene& scene, int D, float tau);

enum class Split { train, val, test };
// 80/10/10 by index: [0, 0.8n) train, [0.8n, 0.9n) val, rest test.
Split split_of(int64_t index, int64_t count);
const char* split_name(Split s);
std::vector<int64_t> split_indices(Split s, int64_t count);

struct Dataset {
  int D = 0;
  float tau = 0.0f;
  std::vector<ShapeSpec> specs;
  std::vector<TsdfGrid> grids;

  int64_t count() const { return static_cast<int64_t>(grids.size()); }
};

// Families are drawn in balanced blocks of kFamilyCount consecutive indices
// (a seeded permutation per block), so each index's family is uniform.
Dataset make_dataset(int64_t count, uint64_t seed, int D, float tau);

// Writes <dir>/shapes.tsdf, <dir>/shapes.jsonl and
// <dir>/silhouettes/<index>_<axis>.pgm for the three axes.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

std::string spec_to_jsonl(int64_t index, const ShapeSpec& spec);

}  // namespace voxprior::shapegen
