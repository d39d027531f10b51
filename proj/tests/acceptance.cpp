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
// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--work DIR] [--skip-training]
//
// Criteria 9 to 12 train the default desk-scale pipeline through the command
// line entry point (about an hour and a half on one core); --skip-training
// reports them as SKIP.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxprior/checkpoint.hpp"
#include "voxprior/cli.hpp"
#include "voxprior/conditional.hpp"
#include "voxprior/gradsuite.hpp"
#include "voxprior/metrics.hpp"
#include "voxprior/ops.hpp"
#include "voxprior/prior.hpp"
#include "voxprior/pvqvae.hpp"
#include "voxprior/rng.hpp"
#include "voxprior/shapegen.hpp"

using namespace voxprior;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  int id = 0;
  std::string status;  // PASS, FAIL or SKIP
  std::string detail;
};

std::vector<Outcome> g_outcomes;

void report(int id, bool pass, const std::string& detail) {
  g_outcomes.push_back({id, pass ? "PASS" : "FAIL", detail});
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

void skip(int id, const std::string& why) {
  g_outcomes.push_back({id, "SKIP", why});
  std::printf("criterion %2d: SKIP  %s\n", id, why.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

NdArray random_codebook(int K, int e, uint64_t seed) {
  Rng rng(seed);
  NdArray cb({K, e});
  for (float& v : cb.data()) v = rng.uniform(-1.0f, 1.0f);
  return cb;
}

prior::PriorConfig toy_prior_config(prior::OrderMode mode) {
  prior::PriorConfig c;
  c.L = 2;
  c.h = 2;
  c.w = 16;
  c.F = 2;
  c.batch = 8;
  c.lr = 1e-2f;
  c.epochs = 20;
  c.order_mode = mode;
  c.seed = 31;
  return c;
}

LatentGrid random_latent(int d, int K, Rng& rng) {
  LatentGrid g(d, 0);
  for (int32_t& t : g.tokens) t = static_cast<int32_t>(rng.below(K));
  return g;
}

// ---------------------------------------------------------------------------

int nearest_oracle(const std::vector<float>& z, const NdArray& cb) {
  const int64_t K = cb.dim(0), e = cb.dim(1);
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int64_t k = 0; k < K; ++k) {
    double d = 0.0;
    for (int64_t j = 0; j < e; ++j) {
      const double diff = static_cast<double>(z[static_cast<size_t>(j)]) - cb[k * e + j];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

void criterion_vq_oracle() {
  Rng rng(2);
  int agree = 0, ties = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const int K = 2 + static_cast<int>(rng.below(63));
    const int e = 1 + static_cast<int>(rng.below(16));
    NdArray cb = random_codebook(K, e, rng.below(1u << 30));
    std::vector<float> z(static_cast<size_t>(e));
    for (float& v : z) v = rng.uniform(-1.0f, 1.0f);
    if (draw % 3 == 0) {
      // Duplicate the nearest row at a random second index: an exact tie.
      const int near = nearest_oracle(z, cb);
      const int other = static_cast<int>(rng.below(K));
      if (other != near) {
        for (int j = 0; j < e; ++j) cb[static_cast<int64_t>(other) * e + j] = cb[static_cast<int64_t>(near) * e + j];
        ++ties;
      }
    } else if (draw % 3 == 1) {
      // Mirror pair around a query at the origin: equal distances.
      std::fill(z.begin(), z.end(), 0.0f);
      const int a = static_cast<int>(rng.below(K));
      const int b = static_cast<int>(rng.below(K));
      for (int j = 0; j < e; ++j) cb[static_cast<int64_t>(b) * e + j] = -cb[static_cast<int64_t>(a) * e + j];
      ties += a != b;
    }
    agree += pvqvae::vector_quantize(z, cb) == nearest_oracle(z, cb);
  }
  report(2, agree == 1000,
         "vector_quantize matches exhaustive search on " + std::to_string(agree) + "/1000 draws (" +
             std::to_string(ties) + " with exact ties)");
}

void criterion_gradients() {
  const auto start = Clock::now();
  const std::vector<cli::GradSuiteRow> rows = cli::run_gradient_suite();
  const double t = seconds_since(start);
  double worst = 0.0;
  std::string worst_block;
  for (const cli::GradSuiteRow& r : rows) {
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_block = r.block;
    }
  }
  report(3, worst < 1e-3 && t < 120.0,
         std::to_string(rows.size()) + " blocks, max relative error " + fmt("%.3e", worst) + " (" + worst_block +
             "), " + fmt("%.1f", t) + " s");
}

double chain_total(const prior::PriorModel& m, const prior::PermutationOrder& order) {
  double total = 0.0;
  LatentGrid g(2, 0);
  for (int code = 0; code < 6561; ++code) {
    int c = code;
    for (int32_t& t : g.tokens) {
      t = c % 3;
      c /= 3;
    }
    total += std::exp(-8.0 * prior::prior_nll(m, g, order));
  }
  return total;
}

void criterion_chain_normalization() {
  const auto start = Clock::now();
  const NdArray cb = random_codebook(3, 4, 5);
  std::vector<LatentGrid> train, val;
  Rng rng(9);
  for (int i = 0; i < 48; ++i) {
    // Structured data: the token at cell i leans towards (i + shift) mod 3.
    LatentGrid g(2, 0);
    const int shift = static_cast<int>(rng.below(3));
    for (int c = 0; c < 8; ++c) g.tokens[static_cast<size_t>(c)] = rng.uniform() < 0.8 ? (c + shift) % 3 : static_cast<int32_t>(rng.below(3));
    (i < 40 ? train : val).push_back(g);
  }
  const prior::PriorModel untrained(toy_prior_config(prior::OrderMode::random), 2, cb);
  const prior::PriorModel trained = prior::train_prior(train, val, cb, toy_prior_config(prior::OrderMode::random));
  double worst = 0.0;
  int orders = 0;
  for (const prior::PriorModel* m : {&untrained, &trained}) {
    for (uint64_t s = 0; s < 3; ++s) {
      worst = std::max(worst, std::abs(chain_total(*m, prior::sample_order(2, 100 + s)) - 1.0));
      ++orders;
    }
    worst = std::max(worst, std::abs(chain_total(*m, prior::raster_order(2)) - 1.0));
    ++orders;
  }
  const double t = seconds_since(start);
  report(4, worst <= 1e-4 && t < 60.0,
         "sum over 3^8 grids, " + std::to_string(orders) + " fixed orders (untrained and trained): max |total - 1| = " +
             fmt("%.2e", worst) + ", " + fmt("%.1f", t) + " s");
}

void criterion_causal_mask() {
  const int d = 3, K = 6, n = d * d * d;
  const prior::PriorModel m(toy_prior_config(prior::OrderMode::random), d, random_codebook(K, 4, 6));
  Rng rng(12);
  int64_t clean = 0, compared = 0;
  const int trials = 10000;
  for (int trial = 0; trial < trials; ++trial) {
    const prior::PermutationOrder order = prior::sample_order(d, rng.below(1u << 30));
    std::vector<int32_t> tokens(static_cast<size_t>(n));
    for (int32_t& t : tokens) t = static_cast<int32_t>(rng.below(K));
    const int j = static_cast<int>(rng.below(n));
    std::vector<int32_t> changed = tokens;
    // Every entry from position j on is redrawn; rows 0..j may not move.
    for (int s = j; s < n; ++s) changed[static_cast<size_t>(s)] = static_cast<int32_t>((tokens[static_cast<size_t>(s)] + 1 + rng.below(K - 1)) % K);
    diff::Tape t;
    const NdArray a = m.chain_logits(t, {&order, 1}, {&tokens, 1}).value();
    const NdArray b = m.chain_logits(t, {&order, 1}, {&changed, 1}).value();
    bool same = true;
    for (int64_t i = 0; i < static_cast<int64_t>(j + 1) * K; ++i) same = same && a[i] == b[i];
    clean += same;
    ++compared;
  }
  report(5, clean == compared,
         std::to_string(clean) + "/" + std::to_string(compared) +
             " perturbation trials left every earlier-position logit bit-identical");
}

void criterion_completion_keeps_observations() {
  const int d = 3, K = 8;
  const NdArray cb = random_codebook(K, 4, 8);
  const prior::PriorModel random_mode(toy_prior_config(prior::OrderMode::random), d, cb);
  const prior::PriorModel raster_mode(toy_prior_config(prior::OrderMode::raster), d, cb);
  conditional::CategoricalField field;
  field.d = d;
  field.K = K;
  Rng rng(21);
  for (int i = 0; i < d * d * d * K; ++i) field.values.push_back(rng.uniform(-2.0f, 2.0f));
  int kept = 0;
  const int runs = 1000;
  for (int run = 0; run < runs; ++run) {
    const LatentGrid truth = random_latent(d, K, rng);
    ObservationSet obs;
    const double keep = rng.uniform();
    for (const Observation& o : observe_all(truth)) {
      if (rng.uniform() < keep) obs.push_back(o);
    }
    rng.shuffle(obs);
    const prior::PriorModel& m = run % 2 == 0 ? random_mode : raster_mode;
    const float temperature = run % 5 == 0 ? 0.0f : 1.0f;
    LatentGrid out;
    if (run % 4 == 3) {
      out = conditional::sample_conditional(m, field, obs, {0.75, temperature, static_cast<uint64_t>(run)});
    } else {
      out = prior::sample_completion(m, obs, static_cast<uint64_t>(run), temperature);
    }
    bool ok = true;
    for (const Observation& o : obs) ok = ok && out.at(o.loc) == o.token;
    kept += ok;
  }
  report(6, kept == runs,
         std::to_string(kept) + "/" + std::to_string(runs) +
             " completions kept every observed token (random and raster chains, prior and product of experts)");
}

void criterion_poe() {
  Rng rng(33);
  bool endpoints = true;
  for (int draw = 0; draw < 1000; ++draw) {
    const int K = 2 + static_cast<int>(rng.below(30));
    std::vector<float> logits(static_cast<size_t>(K));
    for (float& v : logits) v = rng.uniform(-4.0f, 4.0f);
    std::vector<double> cond(static_cast<size_t>(K));
    double sum = 0.0;
    for (double& v : cond) sum += v = rng.uniform() + 1e-3;
    for (double& v : cond) v /= sum;
    endpoints = endpoints && conditional::poe_step_distribution(logits, cond, 0.0) == diff::softmax_row(logits);
    endpoints = endpoints && conditional::poe_step_distribution(logits, cond, 1.0) == cond;
  }

  // Sampler level: alpha = 0 is the prior's chain, alpha = 1 with a one-hot
  // field is the field.
  const int d = 2, K = 4;
  const prior::PriorModel m(toy_prior_config(prior::OrderMode::random), d, random_codebook(K, 4, 3));
  conditional::CategoricalField field;
  field.d = d;
  field.K = K;
  field.normalized = true;
  std::vector<int32_t> argmax;
  for (int c = 0; c < d * d * d; ++c) {
    const int hot = static_cast<int>(rng.below(K));
    argmax.push_back(hot);
    for (int k = 0; k < K; ++k) field.values.push_back(k == hot ? 1.0f : 0.0f);
  }
  bool samplers = true;
  for (uint64_t s = 0; s < 200; ++s) {
    samplers = samplers && conditional::sample_conditional(m, field, {}, {0.0, 1.0f, s}) == prior::sample_completion(m, {}, s);
    samplers = samplers && conditional::sample_conditional(m, field, {}, {1.0, 1.0f, s}).tokens == argmax;
  }

  const std::vector<float> even{0.0f, 0.0f};
  const std::vector<double> q{0.9, 0.1};
  const std::vector<double> p = conditional::poe_step_distribution(even, q, 0.5);
  const double err = std::max(std::abs(p[0] - 0.75), std::abs(p[1] - 0.25));
  report(7, endpoints && samplers && err <= 1e-9,
         std::string("alpha 0 and 1 exact on 1000 random steps: ") + (endpoints ? "yes" : "no") +
             ", samplers: " + (samplers ? "yes" : "no") + ", worked example (" + fmt("%.12f", p[0]) + ", " +
             fmt("%.12f", p[1]) + ")");
}

double chamfer_oracle(const metrics::PointCloud& a, const metrics::PointCloud& b) {
  auto one_way = [](const metrics::PointCloud& from, const metrics::PointCloud& to) {
    double s = 0.0;
    for (size_t i = 0; i < from.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (size_t j = 0; j < to.size(); ++j) {
        double d = 0.0;
        for (int c = 0; c < 3; ++c) d += (from[i][c] - to[j][c]) * (from[i][c] - to[j][c]);
        if (d < best) best = d;
      }
      s += best;
    }
    return s / static_cast<double>(from.size());
  };
  return one_way(a, b) + one_way(b, a);
}

void criterion_metrics() {
  const shapegen::Dataset ds = shapegen::make_dataset(10, 4, 32, 0.2f);
  bool ok = true;
  int checks = 0;
  Rng rng(44);
  for (int i = 0; i < ds.count(); ++i) {
    const TsdfGrid& g = ds.grids[static_cast<size_t>(i)];
    const metrics::PointCloud b = metrics::surface_points(g, metrics::kEvalPoints, static_cast<uint64_t>(i));
    metrics::PointCloud a;
    for (const metrics::Point& p : b) {
      if (rng.uniform() < 0.3) a.push_back(p);
    }
    if (a.empty()) a.push_back(b.front());
    const std::vector<metrics::PointCloud> same(4, b);
    ok = ok && metrics::uhd(a, b) == 0.0 && metrics::chamfer(b, b) == 0.0 && metrics::tmd(same) == 0.0 &&
         metrics::occupancy_iou(g, g) == 1.0 && metrics::fscore(b, b) == 1.0;
    checks += 5;
  }
  for (int s = 0; s < 100; ++s) {
    metrics::PointCloud x, y;
    const int nx = 1 + static_cast<int>(rng.below(50)), ny = 1 + static_cast<int>(rng.below(50));
    for (int i = 0; i < nx; ++i) x.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
    for (int i = 0; i < ny; ++i) y.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
    ok = ok && metrics::chamfer(x, y) == chamfer_oracle(x, y);
    ++checks;
  }
  report(8, ok, std::to_string(checks) + " exact identities and brute-force chamfer comparisons");
}

// ---------------------------------------------------------------------------

int invoke(const std::vector<std::string>& args, std::ostream& log) {
  std::ostringstream err;
  log << "$ voxprior";
  for (const std::string& a : args) log << ' ' << a;
  log << std::endl;
  const int code = cli::run(args, log, err);
  log << err.str() << std::flush;
  if (code != 0) std::printf("  command failed (%d): %s", code, err.str().c_str());
  return code;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::string bytes{std::istreambuf_iterator<char>(in), {}};
    if (entry.path().filename() == "manifest.json") {
      // Wall time is the one field that cannot repeat.
      json m = json::parse(bytes);
      m.erase("wall_time_seconds");
      bytes = m.dump();
    }
    files[fs::relative(entry.path(), root).string()] = std::move(bytes);
  }
  return files;
}

void criterion_reproducibility(const fs::path& work) {
  const fs::path root = work / "repro";
  const auto start = Clock::now();
  std::ofstream log(work / "repro.log");
  auto pass = [&]() {
    fs::remove_all(root);
    fs::create_directories(root);
    std::ofstream(root / "tiny.json") << R"({"seed": 17, "data": {"D": 16, "count": 20},
      "vqvae": {"epochs": 1, "enc_channels": [8, 8, 8, 16], "dec_channels": [16, 8, 8, 8], "K": 32, "e": 16},
      "prior": {"epochs": 2, "L": 1, "w": 32, "F": 2},
      "cond": {"epochs": 2, "width": 8, "lift": 4, "groups": 2},
      "sample": {"k": 3}})";
    const std::string cfg = (root / "tiny.json").string();
    auto p = [&](const std::string& s) { return (root / s).string(); };
    const std::vector<std::vector<std::string>> commands{
        {"gen-data", "--out", p("data")},
        {"train-vqvae", "--data", p("data"), "--out", p("vq")},
        {"train-prior", "--data", p("data"), "--vqvae", p("vq/vqvae.vxpr"), "--out", p("prior")},
        {"train-cond", "--data", p("data"), "--vqvae", p("vq/vqvae.vxpr"), "--out", p("cond")},
        {"reconstruct", "--data", p("data"), "--vqvae", p("vq/vqvae.vxpr"), "--out", p("recon")},
        {"complete", "--data", p("data"), "--vqvae", p("vq/vqvae.vxpr"), "--prior", p("prior/prior.vxpr"), "--cond",
         p("cond/cond.vxpr"), "--mode", "octant", "--out", p("complete")},
        {"generate", "--vqvae", p("vq/vqvae.vxpr"), "--prior", p("prior/prior.vxpr"), "--out", p("generate")},
        {"evaluate", "--data", p("data"), "--vqvae", p("vq/vqvae.vxpr"), "--prior", p("prior/prior.vxpr"), "--cond",
         p("cond/cond.vxpr"), "--shapes", "2", "--out", p("evaluate")},
        {"export", "--input", p("generate/samples.tsdf"), "--format", "obj_voxels", "--out", p("export_obj")},
        {"export", "--input", p("generate/samples.tsdf"), "--format", "pgm_slices", "--out", p("export_pgm")},
        {"export", "--input", p("generate/samples.tsdf"), "--format", "raw", "--out", p("export_raw")},
        {"gradcheck", "--out", p("gradcheck")},
    };
    std::set<std::string> names;
    for (std::vector<std::string> c : commands) {
      names.insert(c.front());
      c.insert(c.begin() + 1, {"--config", cfg});
      if (invoke(c, log) != 0) return std::make_pair(std::map<std::string, std::string>{}, names);
    }
    return std::make_pair(snapshot(root), names);
  };
  const auto [a, names] = pass();
  const auto [b, names_b] = pass();
  int differ = 0;
  for (const auto& [name, bytes] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second != bytes) {
      ++differ;
      std::printf("  differs: %s\n", name.c_str());
    }
  }
  differ += static_cast<int>(b.size()) - static_cast<int>(a.size());
  report(13, !a.empty() && differ == 0,
         std::to_string(names.size()) + " subcommands run twice, " + std::to_string(a.size()) + " files, " +
             std::to_string(differ) + " differ (manifest wall time excluded), " + fmt("%.0f", seconds_since(start)) +
             " s");
}

// ---------------------------------------------------------------------------

void criterion_patch_independence(const fs::path& data, const fs::path& vq_path) {
  const shapegen::Dataset ds = shapegen::read_dataset(data);
  const pvqvae::PVqvae vq = pvqvae::PVqvae::from_checkpoint(load_checkpoint(vq_path));
  const int P = vq.config().P, d = vq.config().d();
  Rng rng(55);
  int64_t shared = 0, agree = 0;
  for (int pair = 0; pair < 50; ++pair) {
    const int64_t a = static_cast<int64_t>(rng.below(static_cast<uint64_t>(ds.count())));
    int64_t b = static_cast<int64_t>(rng.below(static_cast<uint64_t>(ds.count() - 1)));
    if (b >= a) ++b;
    const TsdfGrid& x = ds.grids[static_cast<size_t>(a)];
    TsdfGrid y = ds.grids[static_cast<size_t>(b)];
    // Transplant one to three patches of x into y.
    const int copies = 1 + static_cast<int>(rng.below(3));
    for (int c = 0; c < copies; ++c) {
      const Location l = location_of(static_cast<int64_t>(rng.below(static_cast<uint64_t>(d * d * d))), d);
      for (int i = 0; i < P; ++i) {
        for (int j = 0; j < P; ++j) {
          for (int k = 0; k < P; ++k) y.at(l.x * P + i, l.y * P + j, l.z * P + k) = x.at(l.x * P + i, l.y * P + j, l.z * P + k);
        }
      }
    }
    const LatentGrid zx = vq.encode_shape(x), zy = vq.encode_shape(y);
    const pvqvae::PatchBatch px = pvqvae::split_patches(x, P), py = pvqvae::split_patches(y, P);
    for (int64_t n = 0; n < px.count(); ++n) {
      const auto sx = px.patch(n), sy = py.patch(n);
      if (!std::equal(sx.begin(), sx.end(), sy.begin(), sy.end())) continue;
      ++shared;
      agree += zx.at(px.locations[static_cast<size_t>(n)]) == zy.at(py.locations[static_cast<size_t>(n)]);
    }
  }
  report(1, shared > 0 && agree == shared,
         "50 shape pairs, " + std::to_string(agree) + "/" + std::to_string(shared) +
             " identical patches received identical tokens (trained model)");
}

struct Stage {
  bool ok = false;
  double seconds = 0.0;
};

Stage stage(const std::vector<std::string>& args, const fs::path& out, std::ostream& log) {
  std::printf("  running %s ...\n", args.front().c_str());
  std::fflush(stdout);
  Stage s;
  s.ok = invoke(args, log) == 0;
  if (s.ok) s.seconds = read_json(out / "manifest.json")["wall_time_seconds"].get<double>();
  return s;
}

void desk_scale(const fs::path& work) {
  const fs::path root = work / "desk";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream log(work / "desk.log");
  auto p = [&](const std::string& s) { return (root / s).string(); };

  if (!stage({"gen-data", "--out", p("data")}, root / "data", log).ok) {
    for (int id : {1, 9, 10, 11, 12}) report(id, false, "gen-data failed");
    return;
  }
  const Stage vq = stage({"train-vqvae", "--data", p("data"), "--out", p("vq")}, root / "vq", log);
  if (!vq.ok) {
    for (int id : {1, 9, 10, 11, 12}) report(id, false, "train-vqvae failed");
    return;
  }
  const json vqm = read_json(root / "vq" / "metrics.json");
  const double iou = vqm["test_iou"].get<double>();
  report(9, iou >= 0.8 && vq.seconds <= 36 * 60,
         "held-out reconstruction IoU " + fmt("%.4f", iou) + " (target 0.8), trained in " + fmt("%.1f", vq.seconds / 60) +
             " min (budget ~30)");
  criterion_patch_independence(root / "data", root / "vq" / "vqvae.vxpr");

  const Stage pr = stage({"train-prior", "--data", p("data"), "--vqvae", p("vq/vqvae.vxpr"), "--out", p("prior")},
                         root / "prior", log);
  const Stage cd = stage({"train-cond", "--data", p("data"), "--vqvae", p("vq/vqvae.vxpr"), "--kind", "silhouette",
                          "--out", p("cond")},
                         root / "cond", log);
  if (!pr.ok || !cd.ok) {
    for (int id : {10, 11, 12}) report(id, false, "training failed");
    return;
  }
  const Stage ev = stage({"evaluate", "--data", p("data"), "--vqvae", p("vq/vqvae.vxpr"), "--prior", p("prior/prior.vxpr"),
                          "--cond", p("cond/cond.vxpr"), "--alpha", "0.75", "--shapes", "20", "--k", "10", "--out",
                          p("evaluate")},
                         root / "evaluate", log);
  if (!ev.ok) {
    for (int id : {10, 11, 12}) report(id, false, "evaluate failed");
    return;
  }
  const json m = read_json(root / "evaluate" / "metrics.json");
  const int shapes = static_cast<int>(m["shapes"].size());
  const double nll = m["test_nll"].get<double>();
  const double margin = std::log(128.0) - nll;
  const double cu = m["completion_uhd"].get<double>(), uu = m["unconditional_uhd"].get<double>();
  report(10, margin >= 0.5 && cu < uu && shapes >= 20 && pr.seconds <= 36 * 60,
         "test NLL " + fmt("%.4f", nll) + " (margin " + fmt("%.3f", margin) + " below ln 128), prior trained in " +
             fmt("%.1f", pr.seconds / 60) + " min; bottom-half completion UHD " + fmt("%.4f", cu) + " vs unconditional " +
             fmt("%.4f", uu) + " over " + std::to_string(shapes) + " shapes");
  const double diverse = m["diverse_fraction"].get<double>();
  report(11, diverse >= 0.9 && shapes >= 20,
         fmt("%.0f", diverse * 100) + "% of " + std::to_string(shapes) +
             " held-out shapes have k=10 completions with TMD > 0 and >= 2 distinct grids");
  const json& c = m["sign_test"];
  const double ci = m["conditional_iou"].get<double>(), ui = m["unconditional_iou"].get<double>();
  const double sp = c["p"].get<double>();
  report(12, ci > ui && sp < 0.05,
         "silhouette-conditioned IoU " + fmt("%.4f", ci) + " vs unconditional " + fmt("%.4f", ui) + ", " +
             std::to_string(c["wins"].get<int>()) + " wins / " + std::to_string(c["losses"].get<int>()) +
         " losses, sign test p = " + fmt("%.2e", sp));
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "voxprior_acceptance";
  bool skip_training = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--skip-training") {
      skip_training = true;
    } else {
      std::fprintf(stderr, "usage: acceptance [--work DIR] [--skip-training]\n");
      return 2;
    }
  }
  fs::create_directories(work);
  const fs::path report_path = work / "report.txt";
  fs::remove(report_path);
  const auto start = Clock::now();
  try {
    criterion_vq_oracle();
    criterion_gradients();
    criterion_chain_normalization();
    criterion_causal_mask();
    criterion_completion_keeps_observations();
    criterion_poe();
    criterion_metrics();
    criterion_reproducibility(work);
    if (skip_training) {
      for (int id : {1, 9, 10, 11, 12}) skip(id, "--skip-training");
    } else {
      desk_scale(work);
    }
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }

  std::sort(g_outcomes.begin(), g_outcomes.end(), [](const Outcome& a, const Outcome& b) { return a.id < b.id; });
  int passed = 0, failed = 0;
  std::ostringstream summary;
  char line[64];
  std::snprintf(line, sizeof line, "acceptance summary (%.0f s)\n", seconds_since(start));
  summary << line;
  for (const Outcome& o : g_outcomes) {
    std::snprintf(line, sizeof line, "criterion %2d: %s  ", o.id, o.status.c_str());
    summary << line << o.detail << '\n';
    passed += o.status == "PASS";
    failed += o.status == "FAIL";
  }
  summary << passed << " passed, " << failed << " failed, " << g_outcomes.size() - passed - failed << " skipped\n";
  std::printf("\n%s", summary.str().c_str());
  std::ofstream(report_path) << summary.str();
  // Failing criteria are reported above, not through the exit status; see
  // the README for the ones that miss at desk scale.
  return 0;
}
