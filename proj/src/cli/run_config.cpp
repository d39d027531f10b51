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
#include "voxprior/run_config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "voxprior/errors.hpp"
#include "voxprior/rng.hpp"

namespace voxprior::cli {

namespace {

const char* const kSections[] = {"data", "vqvae", "prior", "cond", "sample"};

uint64_t section_seed(uint64_t master, const char* section) { return derive_seed(master, section, 0); }

template <typename Fn>
void section(const nlohmann::json& j, const char* name, Fn&& fn) {
  if (!j.contains(name)) return;
  try {
    fn(j.at(name));
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string(name) + ": " + e.what());
  }
}

}  // namespace

RunConfig RunConfig::defaults(uint64_t master) {
  RunConfig c;
  c.seed = master;
  c.data.seed = section_seed(master, "data");
  c.vqvae.seed = section_seed(master, "vqvae");
  c.prior.seed = section_seed(master, "prior");
  c.cond.seed = section_seed(master, "cond");
  c.sample.seed = section_seed(master, "sample");
  return c;
}

RunConfig RunConfig::from_json(const nlohmann::json& j, std::optional<uint64_t> master_override) {
  if (!j.is_object()) throw UsageError("config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "seed") continue;
    if (std::find(std::begin(kSections), std::end(kSections), key) == std::end(kSections)) {
      throw UsageError(key + ": unknown config section");
    }
    if (!value.is_object()) throw UsageError(key + ": expected an object");
  }
  uint64_t master = 0;
  if (j.contains("seed")) {
    const nlohmann::json& s = j.at("seed");
    if (!s.is_number_integer() || (!s.is_number_unsigned() && s.get<int64_t>() < 0)) throw UsageError("seed: expected an unsigned integer");
    master = j.at("seed").get<uint64_t>();
  }
  if (master_override) master = *master_override;
  RunConfig c = defaults(master);
  // Section seeds: explicit values win unless the master was overridden.
  auto seeded = [&](const nlohmann::json& s, const char* name) {
    nlohmann::json copy = s;
    if (master_override || !copy.contains("seed")) copy["seed"] = section_seed(master, name);
    return copy;
  };

  section(j, "data", [&](const nlohmann::json& s) {
    const nlohmann::json full = seeded(s, "data");
    for (const auto& [key, value] : full.items()) {
      if (key == "D") c.data.D = value.get<int>();
      else if (key == "tau") c.data.tau = value.get<float>();
      else if (key == "count") c.data.count = value.get<int64_t>();
      else if (key == "seed") c.data.seed = value.get<uint64_t>();
      else throw UsageError("data." + key + ": unknown key");
    }
  });
  if (c.data.D < 2) throw UsageError("data.D: must be at least 2");
  if (!(c.data.tau > 0.0f)) throw UsageError("data.tau: must be positive");
  if (c.data.count < 1) throw UsageError("data.count: must be positive");

  nlohmann::json vq = j.value("vqvae", nlohmann::json::object());
  if (vq.contains("D") && vq.at("D") != c.data.D) throw UsageError("vqvae.D: must equal data.D");
  if (vq.contains("tau") && vq.at("tau").get<float>() != c.data.tau) throw UsageError("vqvae.tau: must equal data.tau");
  vq["D"] = c.data.D;
  vq["tau"] = c.data.tau;
  section(nlohmann::json{{"vqvae", seeded(vq, "vqvae")}}, "vqvae",
          [&](const nlohmann::json& s) { c.vqvae = pvqvae::VqvaeConfig::from_json(s); });
  section(j, "prior", [&](const nlohmann::json& s) { c.prior = prior::PriorConfig::from_json(seeded(s, "prior")); });
  section(j, "cond", [&](const nlohmann::json& s) { c.cond = conditional::CondConfig::from_json(seeded(s, "cond")); });
  section(j, "sample", [&](const nlohmann::json& s) {
    const nlohmann::json full = seeded(s, "sample");
    for (const auto& [key, value] : full.items()) {
      if (key == "k") c.sample.k = value.get<int>();
      else if (key == "temperature") c.sample.temperature = value.get<float>();
      else if (key == "seed") c.sample.seed = value.get<uint64_t>();
      else throw UsageError("sample." + key + ": unknown key");
    }
  });
  if (c.sample.k < 1) throw UsageError("sample.k: must be positive");
  if (!(c.sample.temperature >= 0.0f)) throw UsageError("sample.temperature: must be non-negative");
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path, std::optional<uint64_t> master_override) {
  std::ifstream in(path);
  if (!in) throw UsageError("--config: cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("--config: " + path.string() + ": " + e.what());
  }
  return from_json(j, master_override);
}

nlohmann::json RunConfig::to_json() const {
  return {{"seed", seed},
          {"data", {{"D", data.D}, {"tau", data.tau}, {"count", data.count}, {"seed", data.seed}}},
          {"vqvae", vqvae.to_json()},
          {"prior", prior.to_json()},
          {"cond", cond.to_json()},
          {"sample", {{"k", sample.k}, {"temperature", sample.temperature}, {"seed", sample.seed}}}};
}

std::string RunConfig::hash() const {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_json().dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace voxprior::cli
