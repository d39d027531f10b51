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
#include "voxprior/shapegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "voxprior/errors.hpp"
#include "voxprior/parallel.hpp"

namespace voxprior::shapegen {
namespace {

constexpr double kFloor = -0.85;

Vec3 to_local(const Primitive& prim, const Vec3& p) {
  const double dx = p[0] - prim.center[0];
  const double dy = p[1] - prim.center[1];
  const double dz = p[2] - prim.center[2];
  if (prim.yaw == 0.0) return {dx, dy, dz};
  const double c = std::cos(prim.yaw), s = std::sin(prim.yaw);
  return {c * dx - s * dz, dy, s * dx + c * dz};
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0)) throw ParameterError(std::string(what) + " must be positive, got " + std::to_string(v));
}

double param(const ShapeSpec& spec, const char* name) {
  auto it = spec.params.find(name);
  if (it == spec.params.end()) {
    throw ParameterError(std::string(family_name(spec.family)) + " spec is missing parameter '" + name + "'");
  }
  return it->second;
}

// Four legs under a slab of half-size (w, d), running from the floor to
// the slab's center height.
void add_legs(std::vector<Primitive>& parts, double w, double d, double top_y, double leg) {
  const double half_h = (top_y - kFloor) / 2.0;
  const double y = kFloor + half_h;
  for (int sx : {-1, 1}) {
    for (int sz : {-1, 1}) {
      parts.push_back(make_box({sx * (w - leg), y, sz * (d - leg)}, {leg, half_h, leg}));
    }
  }
}

double thinnest(const Primitive& prim) {
  switch (prim.kind) {
    case PrimitiveKind::box:
      return std::min({prim.half_extent[0], prim.half_extent[1], prim.half_extent[2]});
    case PrimitiveKind::sphere:
      return prim.radius;
    case PrimitiveKind::cylinder:
      return std::min(prim.radius, prim.half_height);
  }
  return 0.0;
}

float unit_clamp(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

Primitive make_box(Vec3 center, Vec3 half_extent, double yaw) {
  for (double h : half_extent) require_positive(h, "box half extent");
  Primitive p;
  p.kind = PrimitiveKind::box;
  p.center = center;
  p.half_extent = half_extent;
  p.yaw = yaw;
  return p;
}

Primitive make_sphere(Vec3 center, double radius) {
  require_positive(radius, "sphere radius");
  Primitive p;
  p.kind = PrimitiveKind::sphere;
  p.center = center;
  p.radius = radius;
  return p;
}

Primitive make_cylinder(Vec3 center, double radius, double half_height, double yaw) {
  require_positive(radius, "cylinder radius");
  require_positive(half_height, "cylinder half height");
  Primitive p;
  p.kind = PrimitiveKind::cylinder;
  p.center = center;
  p.radius = radius;
  p.half_height = half_height;
  p.yaw = yaw;
  return p;
}

double primitive_sdf(const Primitive& prim, const Vec3& p) {
  const Vec3 q = to_local(prim, p);
  switch (prim.kind) {
    case PrimitiveKind::sphere:
      require_positive(prim.radius, "sphere radius");
      return std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]) - prim.radius;
    case PrimitiveKind::box: {
      for (double h : prim.half_extent) require_positive(h, "box half extent");
      double outside = 0.0, inside = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a) {
        const double d = std::abs(q[a]) - prim.half_extent[a];
        outside += std::max(d, 0.0) * std::max(d, 0.0);
        inside = std::max(inside, d);
      }
      return std::sqrt(outside) + std::min(inside, 0.0);
    }
    case PrimitiveKind::cylinder: {
      require_positive(prim.radius, "cylinder radius");
      require_positive(prim.half_height, "cylinder half height");
      const double dr = std::sqrt(q[0] * q[0] + q[2] * q[2]) - prim.radius;
      const double dy = std::abs(q[1]) - prim.half_height;
      const double ox = std::max(dr, 0.0), oy = std::max(dy, 0.0);
      return std::min(std::max(dr, dy), 0.0) + std::sqrt(ox * ox + oy * oy);
    }
  }
  return std::numeric_limits<double>::infinity();
}

std::array<Vec3, 2> primitive_bounds(const Primitive& prim) {
  Vec3 half{};
  switch (prim.kind) {
    case PrimitiveKind::sphere:
      half = {prim.radius, prim.radius, prim.radius};
      break;
    case PrimitiveKind::cylinder:
      half = {prim.radius, prim.half_height, prim.radius};
      break;
    case PrimitiveKind::box: {
      const double c = std::abs(std::cos(prim.yaw)), s = std::abs(std::sin(prim.yaw));
      const Vec3& h = prim.half_extent;
      half = {c * h[0] + s * h[2], h[1], s * h[0] + c * h[2]};
      break;
    }
  }
  std::array<Vec3, 2> b;
  for (int a = 0; a < 3; ++a) {
    b[0][a] = prim.center[a] - half[a];
    b[1][a] = prim.center[a] + half[a];
  }
  return b;
}

const char* family_name(Family f) {
  switch (f) {
    case Family::table:
      return "table";
    case Family::chair:
      return "chair";
    case Family::box:
      return "box";
    case Family::lamp:
      return "lamp";
    case Family::craft:
      return "craft";
  }
  return "?";
}

Family family_from_name(const std::string& name) {
  for (int f = 0; f < kFamilyCount; ++f) {
    if (name == family_name(static_cast<Family>(f))) return static_cast<Family>(f);
  }
  throw ParameterError("unknown shape family '" + name + "'");
}

const std::map<std::string, ParamRange>& family_ranges(Family f) {
  static const std::map<std::string, ParamRange> table = {
      {"width", {0.45, 0.85}},         {"depth", {0.35, 0.75}},         {"top_height", {-0.2, 0.5}},
      {"top_thickness", {0.07, 0.13}}, {"leg_thickness", {0.07, 0.13}},
  };
  static const std::map<std::string, ParamRange> chair = {
      {"width", {0.35, 0.6}},           {"depth", {0.35, 0.6}},          {"seat_height", {-0.35, 0.05}},
      {"seat_thickness", {0.07, 0.11}}, {"leg_thickness", {0.07, 0.1}},  {"back_height", {0.35, 0.75}},
      {"back_thickness", {0.07, 0.1}},
  };
  static const std::map<std::string, ParamRange> box = {
      {"half_x", {0.3, 0.65}},
      {"half_y", {0.25, 0.8}},
      {"half_z", {0.3, 0.65}},
      {"yaw", {-0.6, 0.6}},
  };
  static const std::map<std::string, ParamRange> lamp = {
      {"base_radius", {0.25, 0.5}},  {"base_thickness", {0.06, 0.1}}, {"pole_radius", {0.07, 0.11}},
      {"pole_height", {0.6, 1.2}},   {"shade_radius", {0.2, 0.35}},
  };
  static const std::map<std::string, ParamRange> craft = {
      {"body_width", {0.1, 0.18}}, {"body_length", {0.55, 0.9}}, {"wing_span", {0.5, 0.9}},
      {"wing_chord", {0.12, 0.25}}, {"wing_offset", {-0.2, 0.2}}, {"altitude", {-0.2, 0.2}},
      {"fin_height", {0.15, 0.35}},
  };
  switch (f) {
    case Family::table:
      return table;
    case Family::chair:
      return chair;
    case Family::box:
      return box;
    case Family::lamp:
      return lamp;
    case Family::craft:
      return craft;
  }
  throw ParameterError("unknown shape family");
}

ShapeSpec sample_spec(Family family, Rng& rng) {
  ShapeSpec spec;
  spec.family = family;
  spec.label = static_cast<int>(family);
  for (const auto& [name, range] : family_ranges(family)) {
    spec.params[name] = range.lo + (range.hi - range.lo) * rng.uniform();
  }
  spec.attributes = compute_attributes(spec);
  return spec;
}

void validate_spec(const ShapeSpec& spec) {
  const auto& ranges = family_ranges(spec.family);
  for (const auto& [name, range] : ranges) {
    const double v = param(spec, name.c_str());
    if (!(v >= range.lo && v <= range.hi)) {
      throw ParameterError(std::string(family_name(spec.family)) + "." + name + " = " + std::to_string(v) +
                           " outside [" + std::to_string(range.lo) + ", " + std::to_string(range.hi) + "]");
    }
  }
  for (const auto& [name, v] : spec.params) {
    if (!ranges.count(name)) {
      throw ParameterError(std::string(family_name(spec.family)) + " has no parameter '" + name + "'");
    }
  }
}

double Scene::sdf(const Vec3& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (const Primitive& prim : parts) d = std::min(d, primitive_sdf(prim, p));
  return d;
}

std::vector<Primitive> build_parts(const ShapeSpec& spec) {
  validate_spec(spec);
  std::vector<Primitive> parts;
  switch (spec.family) {
    case Family::table: {
      const double w = param(spec, "width"), d = param(spec, "depth"), y = param(spec, "top_height");
      parts.push_back(make_box({0.0, y, 0.0}, {w, param(spec, "top_thickness"), d}));
      add_legs(parts, w, d, y, param(spec, "leg_thickness"));
      break;
    }
    case Family::chair: {
      const double w = param(spec, "width"), d = param(spec, "depth"), y = param(spec, "seat_height");
      const double back = param(spec, "back_height"), bt = param(spec, "back_thickness");
      parts.push_back(make_box({0.0, y, 0.0}, {w, param(spec, "seat_thickness"), d}));
      add_legs(parts, w, d, y, param(spec, "leg_thickness"));
      parts.push_back(make_box({0.0, y + back / 2.0, -(d - bt)}, {w, back / 2.0, bt}));
      break;
    }
    case Family::box: {
      const double hy = param(spec, "half_y");
      parts.push_back(make_box({0.0, kFloor + hy, 0.0}, {param(spec, "half_x"), hy, param(spec, "half_z")},
                               param(spec, "yaw")));
      break;
    }
    case Family::lamp: {
      const double bt = param(spec, "base_thickness"), ph = param(spec, "pole_height");
      const double top = kFloor + 2.0 * bt + ph;
      parts.push_back(make_cylinder({0.0, kFloor + bt, 0.0}, param(spec, "base_radius"), bt));
      parts.push_back(make_cylinder({0.0, kFloor + bt + (ph + bt) / 2.0, 0.0}, param(spec, "pole_radius"),
                                    (ph + bt) / 2.0));
      parts.push_back(make_sphere({0.0, top, 0.0}, param(spec, "shade_radius")));
      break;
    }
    case Family::craft: {
      const double bw = param(spec, "body_width"), len = param(spec, "body_length");
      const double alt = param(spec, "altitude"), fin = param(spec, "fin_height");
      parts.push_back(make_box({0.0, alt, 0.0}, {bw, bw, len}));
      parts.push_back(make_box({0.0, alt, param(spec, "wing_offset")},
                               {param(spec, "wing_span"), 0.07, param(spec, "wing_chord")}));
      // Fin rooted inside the body.
      parts.push_back(make_box({0.0, alt + bw + fin / 2.0 - 0.04, -(len - 0.12)}, {0.07, fin / 2.0 + 0.04, 0.12}));
      break;
    }
  }
  return parts;
}

Scene compose_scene(const ShapeSpec& spec) { return Scene{build_parts(spec)}; }

std::array<float, kAttributeCount> compute_attributes(const ShapeSpec& spec) {
  const auto parts = build_parts(spec);
  Vec3 lo{1e9, 1e9, 1e9}, hi{-1e9, -1e9, -1e9};
  double thin = 1e9;
  for (const Primitive& p : parts) {
    const auto b = primitive_bounds(p);
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], b[0][a]);
      hi[a] = std::max(hi[a], b[1][a]);
    }
    thin = std::min(thin, thinnest(p));
  }
  return {unit_clamp((0.2 - thin) / 0.15), unit_clamp((hi[1] - lo[1]) / 2.0), unit_clamp((hi[0] - lo[0]) / 2.0),
          unit_clamp((hi[2] - lo[2]) / 2.0)};
}

TsdfGrid rasterize_tsdf(const SdfFn& sdf, int D, float tau) {
  if (D < 8) throw ParameterError("rasterize_tsdf needs D >= 8, got " + std::to_string(D));
  if (!(tau > 0.0f)) throw ParameterError("rasterize_tsdf needs tau > 0");
  TsdfGrid g(D, tau, tau);
  for (int i = 0; i < D; ++i) {
    for (int j = 0; j < D; ++j) {
      for (int k = 0; k < D; ++k) {
        const double d = sdf({cell_center(i, D), cell_center(j, D), cell_center(k, D)});
        g.at(i, j, k) = static_cast<float>(std::clamp(d, -static_cast<double>(tau), static_cast<double>(tau)));
      }
    }
  }
  return g;
}

TsdfGrid rasterize_tsdf(const Scene& scene, int D, float tau) {
  return rasterize_tsdf([&scene](const Vec3& p) { return scene.sdf(p); }, D, tau);
}

Split split_of(int64_t index, int64_t count) {
  if (index < (count * 8) / 10) return Split::train;
  if (index < (count * 9) / 10) return Split::val;
  return Split::test;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

std::vector<int64_t> split_indices(Split s, int64_t count) {
  std::vector<int64_t> out;
  for (int64_t i = 0; i < count; ++i) {
    if (split_of(i, count) == s) out.push_back(i);
  }
  return out;
}

Dataset make_dataset(int64_t count, uint64_t seed, int D, float tau) {
  if (count < 1) throw ParameterError("dataset count must be >= 1, got " + std::to_string(count));
  Dataset ds;
  ds.D = D;
  ds.tau = tau;
  ds.specs.resize(static_cast<size_t>(count));
  ds.grids.resize(static_cast<size_t>(count));
  parallel_for(count, [&](int64_t i) {
    std::vector<int> block(kFamilyCount);
    std::iota(block.begin(), block.end(), 0);
    Rng block_rng(derive_seed(seed, "family_block", static_cast<uint64_t>(i / kFamilyCount)));
    block_rng.shuffle(block);
    Rng rng(derive_seed(seed, "shape", static_cast<uint64_t>(i)));
    const auto family = static_cast<Family>(block[static_cast<size_t>(i % kFamilyCount)]);
    ds.specs[static_cast<size_t>(i)] = sample_spec(family, rng);
    ds.grids[static_cast<size_t>(i)] = rasterize_tsdf(compose_scene(ds.specs[static_cast<size_t>(i)]), D, tau);
  });
  return ds;
}

std::string spec_to_jsonl(int64_t index, const ShapeSpec& spec) {
  nlohmann::json j;
  j["index"] = index;
  j["family"] = family_name(spec.family);
  j["label"] = spec.label;
  j["params"] = spec.params;
  j["attributes"] = spec.attributes;
  return j.dump();
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "silhouettes", ec);
  if (ec) throw IoError((dir / "silhouettes").string() + ": " + ec.message());
  write_tsdf_file(dir / "shapes.tsdf", ds.grids);
  const auto meta_path = dir / "shapes.jsonl";
  std::ofstream meta(meta_path, std::ios::trunc);
  if (!meta) throw IoError(meta_path.string() + ": cannot open for writing");
  for (int64_t i = 0; i < ds.count(); ++i) {
    meta << spec_to_jsonl(i, ds.specs[static_cast<size_t>(i)]) << "\n";
    for (Axis axis : {Axis::x, Axis::y, Axis::z}) {
      Silhouette s = silhouette_project(ds.grids[static_cast<size_t>(i)], axis);
      for (uint8_t& p : s.pixels) p = p ? 255 : 0;
      char name[64];
      std::snprintf(name, sizeof(name), "%05lld_%s.pgm", static_cast<long long>(i), axis_name(axis));
      write_pgm(dir / "silhouettes" / name, s.D, s.D, s.pixels);
    }
  }
  if (!meta) throw IoError(meta_path.string() + ": write failed");
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.grids = read_tsdf_file(dir / "shapes.tsdf");
  if (!ds.grids.empty()) {
    ds.D = ds.grids.front().D;
    ds.tau = ds.grids.front().tau;
  }
  const auto meta_path = dir / "shapes.jsonl";
  std::ifstream meta(meta_path);
  if (!meta) throw IoError(meta_path.string() + ": cannot open for reading");
  std::string line;
  while (std::getline(meta, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(meta_path.string() + ": " + e.what());
    }
    ShapeSpec spec;
    spec.family = family_from_name(j.at("family").get<std::string>());
    spec.label = j.at("label").get<int>();
    spec.params = j.at("params").get<std::map<std::string, double>>();
    spec.attributes = j.at("attributes").get<std::array<float, kAttributeCount>>();
    if (j.at("index").get<int64_t>() != static_cast<int64_t>(ds.specs.size())) {
      throw DataError(meta_path.string() + ": records out of index order");
    }
    ds.specs.push_back(std::move(spec));
  }
  if (ds.specs.size() != ds.grids.size()) {
    throw DataError(meta_path.string() + ": " + std::to_string(ds.specs.size()) + " records for " +
                    std::to_string(ds.grids.size()) + " grids");
  }
  return ds;
}

}  // namespace voxprior::shapegen
