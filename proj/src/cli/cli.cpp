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
#include "voxprior/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "voxprior/conditional.hpp"
#include "voxprior/errors.hpp"
#include "voxprior/experiments.hpp"
#include "voxprior/export.hpp"
#include "voxprior/gradsuite.hpp"
#include "voxprior/metrics.hpp"
#include "voxprior/parallel.hpp"
#include "voxprior/partial.hpp"
#include "voxprior/prior.hpp"
#include "voxprior/pvqvae.hpp"
#include "voxprior/run_config.hpp"
#include "voxprior/shapegen.hpp"

#ifndef VOXPRIOR_GIT_DESCRIBE
#define VOXPRIOR_GIT_DESCRIBE "unknown"
#endif

namespace voxprior::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<uint64_t> seed;
  std::string data;
  std::string vqvae;
  std::string prior;
  std::string cond;
  std::string input;
  std::string mode = "bottom_half";
  std::vector<int64_t> patches;
  bool intersection = false;
  std::string kind;
  std::string split = "test";
  std::string format = "obj_voxels";
  int64_t index = -1;
  int shapes = 20;
  std::optional<int> label;
  std::optional<int> k;
  std::optional<double> alpha;
  std::optional<float> temperature;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

// Collects outputs and writes manifest.json when the command succeeds.
class Run {
 public:
  Run(std::string command, const Options& o, std::ostream& log)
      : command_(std::move(command)), log_(log), start_(std::chrono::steady_clock::now()) {
    cfg = o.config.empty() ? RunConfig::from_json(json::object(), o.seed) : RunConfig::load(o.config, o.seed);
    if (o.out.empty()) throw UsageError("--out: required");
    dir = o.out;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  }

  fs::path output(const std::string& name) {
    outputs_.push_back(name);
    return dir / name;
  }
  void input(const std::string& key, const std::string& path) { inputs_[key] = path; }
  std::ostream& log() { return log_; }
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  void finish() {
    const json manifest{{"command", command_},
                        {"config", cfg.to_json()},
                        {"config_hash", cfg.hash()},
                        {"seeds",
                         {{"master", cfg.seed},
                          {"data", cfg.data.seed},
                          {"vqvae", cfg.vqvae.seed},
                          {"prior", cfg.prior.seed},
                          {"cond", cfg.cond.seed},
                          {"sample", cfg.sample.seed}}},
                        {"git_describe", VOXPRIOR_GIT_DESCRIBE},
                        {"threads", worker_threads()},
                        {"inputs", inputs_},
                        {"outputs", outputs_},
                        {"wall_time_seconds", elapsed()}};
    write_json(dir / "manifest.json", manifest);
  }

  RunConfig cfg;
  fs::path dir;

 private:
  std::string command_;
  std::ostream& log_;
  std::chrono::steady_clock::time_point start_;
  json inputs_ = json::object();
  std::vector<std::string> outputs_;
};

fs::path require_path(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError(flag + ": required");
  if (!fs::exists(value)) throw UsageError(flag + ": no such file or directory: " + value);
  return value;
}

shapegen::Dataset load_data(Run& run, const Options& o) {
  const fs::path dir = require_path(o.data, "--data");
  run.input("data", o.data);
  shapegen::Dataset ds = shapegen::read_dataset(dir);
  if (ds.D != run.cfg.data.D) {
    throw UsageError("data.D: config has " + std::to_string(run.cfg.data.D) + ", dataset has " + std::to_string(ds.D));
  }
  return ds;
}

pvqvae::PVqvae load_vqvae(Run& run, const Options& o) {
  run.input("vqvae", o.vqvae);
  pvqvae::PVqvae m = pvqvae::PVqvae::from_checkpoint(load_checkpoint(require_path(o.vqvae, "--vqvae")));
  if (m.config().D != run.cfg.data.D) {
    throw UsageError("data.D: config has " + std::to_string(run.cfg.data.D) + ", vqvae checkpoint has " +
                     std::to_string(m.config().D));
  }
  return m;
}

prior::PriorModel load_prior(Run& run, const Options& o, const pvqvae::PVqvae& vq) {
  run.input("prior", o.prior);
  prior::PriorModel m = prior::PriorModel::from_checkpoint(load_checkpoint(require_path(o.prior, "--prior")));
  if (m.K() != vq.config().K || m.d() != vq.config().d()) {
    throw UsageError("prior.K: prior checkpoint (K " + std::to_string(m.K()) + ", d " + std::to_string(m.d()) +
                     ") does not match the vqvae (K " + std::to_string(vq.config().K) + ", d " +
                     std::to_string(vq.config().d()) + ")");
  }
  return m;
}

std::optional<conditional::CondHead> load_cond(Run& run, const Options& o, const pvqvae::PVqvae& vq) {
  if (o.cond.empty()) return std::nullopt;
  run.input("cond", o.cond);
  conditional::CondHead h = conditional::CondHead::from_checkpoint(load_checkpoint(require_path(o.cond, "--cond")));
  if (h.K() != vq.config().K || h.d() != vq.config().d() || h.D() != vq.config().D) {
    throw UsageError("cond.K: conditional head does not match the vqvae lattice or codebook");
  }
  return h;
}

double alpha_for(const Run& run, const Options& o, const conditional::CondHead& head) {
  double a = o.alpha ? *o.alpha : run.cfg.cond.alpha >= 0.0f ? run.cfg.cond.alpha : conditional::default_alpha(head.kind());
  if (!(a >= 0.0 && a <= 1.0)) throw UsageError("--alpha: must be in [0, 1]");
  return a;
}

int k_for(const Run& run, const Options& o) {
  const int k = o.k.value_or(run.cfg.sample.k);
  if (k < 1) throw UsageError("--k: must be positive");
  return k;
}

float temperature_for(const Run& run, const Options& o) {
  const float t = o.temperature.value_or(run.cfg.sample.temperature);
  if (!(t >= 0.0f)) throw UsageError("--temperature: must be non-negative");
  return t;
}

PartialSpec partial_for(const Options& o) {
  PartialSpec s;
  s.mode = partial_mode_from_name(o.mode);
  s.intersection = o.intersection;
  s.patches = o.patches;
  if (s.mode != PartialMode::patch_list && !o.patches.empty()) throw UsageError("--patches: only valid with --mode patch_list");
  return s;
}

std::vector<int64_t> split_for(const std::string& name, int64_t count) {
  if (name == "all") {
    std::vector<int64_t> all(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) all[static_cast<size_t>(i)] = i;
    return all;
  }
  if (name == "train") return shapegen::split_indices(shapegen::Split::train, count);
  if (name == "val") return shapegen::split_indices(shapegen::Split::val, count);
  if (name == "test") return shapegen::split_indices(shapegen::Split::test, count);
  throw UsageError("--split: expected train, val, test or all, got '" + name + "'");
}

template <typename T>
std::vector<T> pick(const std::vector<T>& items, std::span<const int64_t> indices) {
  std::vector<T> out;
  for (int64_t i : indices) out.push_back(items[static_cast<size_t>(i)]);
  return out;
}

int64_t shape_index(const Options& o, const shapegen::Dataset& ds) {
  if (o.index >= 0) {
    if (o.index >= ds.count()) throw UsageError("--index: " + std::to_string(o.index) + " outside the dataset");
    return o.index;
  }
  const std::vector<int64_t> test = shapegen::split_indices(shapegen::Split::test, ds.count());
  return test.empty() ? 0 : test.front();
}

json observations_json(const ObservationSet& obs) {
  json a = json::array();
  for (const Observation& o : obs) a.push_back({{"x", o.loc.x}, {"y", o.loc.y}, {"z", o.loc.z}, {"token", o.token}});
  return a;
}

json set_metrics_json(const SetMetrics& m) {
  return {{"uhd", m.uhd}, {"tmd", m.tmd}, {"distinct", m.distinct}, {"iou", m.iou}};
}

// ---------------------------------------------------------------------------

void cmd_gen_data(Run& run) {
  const DataConfig& d = run.cfg.data;
  const shapegen::Dataset ds = shapegen::make_dataset(d.count, d.seed, d.D, d.tau);
  shapegen::write_dataset(run.dir, ds);
  run.output("shapes.tsdf");
  run.output("shapes.jsonl");
  run.output("silhouettes");
  run.log() << "wrote " << ds.count() << " shapes at D=" << ds.D << " to " << run.dir.string() << '\n';
}

void cmd_train_vqvae(Run& run, const Options& o) {
  const shapegen::Dataset ds = load_data(run, o);
  const auto train = pick(ds.grids, shapegen::split_indices(shapegen::Split::train, ds.count()));
  const auto val = pick(ds.grids, shapegen::split_indices(shapegen::Split::val, ds.count()));
  const auto test = pick(ds.grids, shapegen::split_indices(shapegen::Split::test, ds.count()));
  std::ofstream log(run.output("train_log.jsonl"), std::ios::binary);
  const pvqvae::PVqvae model = pvqvae::train_pvqvae(train, val, run.cfg.vqvae, nullptr, [&](const pvqvae::EpochLog& e) {
    log << json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"val_iou", e.val_iou},
                {"codes_used", e.codes_used}}
               .dump()
        << '\n';
    run.log() << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss << " iou " << e.val_iou
              << " codes " << e.codes_used << " (" << std::lround(run.elapsed()) << " s)" << std::endl;
  });
  save_checkpoint(run.output("vqvae.vxpr"), model.to_checkpoint());
  const pvqvae::ReconStats v = pvqvae::evaluate_reconstruction(model, val);
  const pvqvae::ReconStats t = pvqvae::evaluate_reconstruction(model, test);
  write_json(run.output("metrics.json"),
             {{"val_loss", v.loss}, {"val_iou", v.iou}, {"test_loss", t.loss}, {"test_iou", t.iou}});
  run.log() << "test reconstruction IoU " << t.iou << '\n';
}

std::vector<LatentGrid> encode_all(const pvqvae::PVqvae& model, const std::vector<TsdfGrid>& grids) {
  std::vector<LatentGrid> out(grids.size());
  parallel_for(static_cast<int64_t>(grids.size()),
               [&](int64_t i) { out[static_cast<size_t>(i)] = model.encode_shape(grids[static_cast<size_t>(i)]); });
  return out;
}

void cmd_train_prior(Run& run, const Options& o) {
  const shapegen::Dataset ds = load_data(run, o);
  const pvqvae::PVqvae vq = load_vqvae(run, o);
  const std::vector<LatentGrid> tokens = encode_all(vq, ds.grids);
  write_tokens_file(run.output("tokens.toks"), vq.config().d(), vq.config().K, tokens);
  const auto train = pick(tokens, shapegen::split_indices(shapegen::Split::train, ds.count()));
  const auto val = pick(tokens, shapegen::split_indices(shapegen::Split::val, ds.count()));
  const auto test = pick(tokens, shapegen::split_indices(shapegen::Split::test, ds.count()));
  std::ofstream log(run.output("train_log.jsonl"), std::ios::binary);
  const prior::PriorModel model =
      prior::train_prior(train, val, vq.codebook(), run.cfg.prior, nullptr, [&](const prior::PriorEpochLog& e) {
        log << json{{"epoch", e.epoch}, {"train_nll", e.train_nll}, {"val_nll", e.val_nll}}.dump() << '\n';
        run.log() << "epoch " << e.epoch << " train " << e.train_nll << " val " << e.val_nll << " ("
                  << std::lround(run.elapsed()) << " s)" << std::endl;
      });
  save_checkpoint(run.output("prior.vxpr"), model.to_checkpoint());
  const double test_nll = prior::evaluate_nll(model, test, derive_seed(run.cfg.sample.seed, "test_nll", 0));
  write_json(run.output("metrics.json"),
             {{"val_nll", prior::evaluate_nll(model, val, derive_seed(run.cfg.sample.seed, "val_nll", 0))},
              {"test_nll", test_nll},
              {"uniform_nll", std::log(static_cast<double>(model.K()))}});
  run.log() << "test NLL " << test_nll << " (uniform " << std::log(static_cast<double>(model.K())) << ")\n";
}

void cmd_train_cond(Run& run, const Options& o) {
  const shapegen::Dataset ds = load_data(run, o);
  const pvqvae::PVqvae vq = load_vqvae(run, o);
  conditional::CondConfig cc = run.cfg.cond;
  if (!o.kind.empty()) cc.kind = conditional::kind_from_name(o.kind);
  const std::vector<LatentGrid> tokens = encode_all(vq, ds.grids);
  std::vector<conditional::Conditioning> conds;
  for (int64_t i = 0; i < ds.count(); ++i) {
    conds.push_back(conditional::describe(cc.kind, ds.specs[static_cast<size_t>(i)], ds.grids[static_cast<size_t>(i)], cc.axis));
  }
  const auto tr = shapegen::split_indices(shapegen::Split::train, ds.count());
  const auto va = shapegen::split_indices(shapegen::Split::val, ds.count());
  std::ofstream log(run.output("train_log.jsonl"), std::ios::binary);
  const conditional::CondHead head = conditional::train_head(
      pick(conds, tr), pick(tokens, tr), pick(conds, va), pick(tokens, va), cc, vq.config().K, vq.config().D, nullptr,
      [&](const conditional::HeadEpochLog& e) {
        log << json{{"epoch", e.epoch}, {"train_ce", e.train_ce}, {"val_ce", e.val_ce}}.dump() << '\n';
        run.log() << "epoch " << e.epoch << " train " << e.train_ce << " val " << e.val_ce << " ("
                  << std::lround(run.elapsed()) << " s)" << std::endl;
      });
  save_checkpoint(run.output("cond.vxpr"), head.to_checkpoint());
  const auto te = shapegen::split_indices(shapegen::Split::test, ds.count());
  write_json(run.output("metrics.json"), {{"kind", conditional::kind_name(cc.kind)},
                                          {"val_ce", conditional::evaluate_ce(head, pick(conds, va), pick(tokens, va))},
                                          {"test_ce", conditional::evaluate_ce(head, pick(conds, te), pick(tokens, te))},
                                          {"uniform_ce", std::log(static_cast<double>(head.K()))}});
}

void cmd_reconstruct(Run& run, const Options& o) {
  const shapegen::Dataset ds = load_data(run, o);
  const pvqvae::PVqvae vq = load_vqvae(run, o);
  std::vector<int64_t> indices;
  if (o.index >= 0) {
    indices = {shape_index(o, ds)};
  } else {
    indices = split_for(o.split, ds.count());
  }
  if (indices.empty()) throw UsageError("--split: no shapes selected");
  const std::vector<TsdfGrid> grids = pick(ds.grids, indices);
  const std::vector<LatentGrid> tokens = encode_all(vq, grids);
  const std::vector<TsdfGrid> recon = vq.decode_latents(tokens);
  write_tsdf_file(run.output("recon.tsdf"), recon);
  write_tokens_file(run.output("tokens.toks"), vq.config().d(), vq.config().K, tokens);
  json per = json::array();
  double iou = 0.0, cd = 0.0, fs_ = 0.0;
  int with_surface = 0;
  for (size_t i = 0; i < grids.size(); ++i) {
    const double v = metrics::occupancy_iou(recon[i], grids[i]);
    json row{{"index", indices[i]}, {"iou", v}};
    const metrics::PointCloud a = surface_or_empty(grids[i], derive_seed(run.cfg.sample.seed, "recon_gt", i));
    const metrics::PointCloud b = surface_or_empty(recon[i], derive_seed(run.cfg.sample.seed, "recon_out", i));
    if (!a.empty() && !b.empty()) {
      row["chamfer"] = metrics::chamfer(a, b);
      row["fscore"] = metrics::fscore(a, b);
      cd += row["chamfer"].get<double>();
      fs_ += row["fscore"].get<double>();
      ++with_surface;
    }
    iou += v;
    per.push_back(row);
  }
  json m{{"count", grids.size()}, {"mean_iou", iou / static_cast<double>(grids.size())}, {"shapes", per}};
  if (with_surface > 0) {
    m["mean_chamfer"] = cd / with_surface;
    m["mean_fscore"] = fs_ / with_surface;
  }
  write_json(run.output("metrics.json"), m);
  run.log() << "mean IoU " << m["mean_iou"].get<double>() << " over " << grids.size() << " shapes\n";
}

void cmd_complete(Run& run, const Options& o) {
  const shapegen::Dataset ds = load_data(run, o);
  const pvqvae::PVqvae vq = load_vqvae(run, o);
  const prior::PriorModel pm = load_prior(run, o, vq);
  const std::optional<conditional::CondHead> head = load_cond(run, o, vq);
  const int64_t index = shape_index(o, ds);
  const TsdfGrid& gt = ds.grids[static_cast<size_t>(index)];
  const PartialObservation obs = partial_to_observation(gt, partial_for(o), vq);
  const int k = k_for(run, o);
  const float temperature = temperature_for(run, o);
  std::optional<conditional::CategoricalField> field;
  double alpha = 0.0;
  if (head) {
    field = conditional::conditional_field(
        *head, conditional::describe(head->kind(), ds.specs[static_cast<size_t>(index)], gt, head->config().axis));
    alpha = alpha_for(run, o, *head);
  }
  const std::vector<LatentGrid> latents =
      sample_chains(pm, obs.observed, k, temperature, derive_seed(run.cfg.sample.seed, "complete", 0),
                    field ? &*field : nullptr, alpha);
  const std::vector<TsdfGrid> grids = vq.decode_latents(latents);
  write_tsdf_file(run.output("completions.tsdf"), grids);
  write_tokens_file(run.output("tokens.toks"), vq.config().d(), vq.config().K, latents);
  write_tsdf_file(run.output("partial.tsdf"), {&obs.partial, 1});
  write_json(run.output("observations.json"),
             {{"index", index}, {"mode", o.mode}, {"intersection", o.intersection}, {"observed", observations_json(obs.observed)}});
  const metrics::PointCloud partial =
      partial_points(gt, obs.locations, vq.config().P, derive_seed(run.cfg.sample.seed, "partial", 0));
  json m = set_metrics_json(set_metrics(partial, grids, latents, gt, run.cfg.sample.seed));
  m["index"] = index;
  m["k"] = k;
  m["observed_patches"] = obs.observed.size();
  if (head) m["alpha"] = alpha;
  write_json(run.output("metrics.json"), m);
  run.log() << k << " completions of shape " << index << " from " << obs.observed.size() << " observed patches\n";
}

void cmd_generate(Run& run, const Options& o) {
  const pvqvae::PVqvae vq = load_vqvae(run, o);
  const prior::PriorModel pm = load_prior(run, o, vq);
  const std::optional<conditional::CondHead> head = load_cond(run, o, vq);
  const int k = k_for(run, o);
  std::optional<conditional::CategoricalField> field;
  double alpha = 0.0;
  json m = json::object();
  if (head) {
    conditional::Conditioning c;
    if (o.label) {
      if (head->kind() != conditional::CondKind::label) throw UsageError("--label: the head is not a label head");
      c = conditional::Conditioning::from_label(*o.label);
      m["label"] = *o.label;
    } else {
      const shapegen::Dataset ds = load_data(run, o);
      const int64_t index = shape_index(o, ds);
      c = conditional::describe(head->kind(), ds.specs[static_cast<size_t>(index)], ds.grids[static_cast<size_t>(index)],
                                head->config().axis);
      m["index"] = index;
    }
    field = conditional::conditional_field(*head, c);
    alpha = alpha_for(run, o, *head);
    m["alpha"] = alpha;
  } else if (o.label) {
    throw UsageError("--label: needs --cond");
  }
  const std::vector<LatentGrid> latents = sample_chains(pm, {}, k, temperature_for(run, o),
                                                        derive_seed(run.cfg.sample.seed, "generate", 0),
                                                        field ? &*field : nullptr, alpha);
  write_tsdf_file(run.output("samples.tsdf"), vq.decode_latents(latents));
  write_tokens_file(run.output("tokens.toks"), vq.config().d(), vq.config().K, latents);
  std::set<std::vector<int32_t>> distinct;
  for (const LatentGrid& g : latents) distinct.insert(g.tokens);
  m["k"] = k;
  m["distinct"] = distinct.size();
  write_json(run.output("metrics.json"), m);
  run.log() << "generated " << k << " shapes (" << distinct.size() << " distinct)\n";
}

void cmd_evaluate(Run& run, const Options& o) {
  const shapegen::Dataset ds = load_data(run, o);
  const pvqvae::PVqvae vq = load_vqvae(run, o);
  const prior::PriorModel pm = load_prior(run, o, vq);
  const std::optional<conditional::CondHead> head = load_cond(run, o, vq);
  ProtocolOptions po;
  po.shapes = o.shapes;
  if (po.shapes < 1) throw UsageError("--shapes: must be positive");
  po.k = k_for(run, o);
  po.temperature = temperature_for(run, o);
  po.partial = partial_for(o);
  po.seed = run.cfg.sample.seed;
  if (head) po.alpha = alpha_for(run, o, *head);
  const ProtocolReport r = evaluate_protocol(ds, vq, pm, head ? &*head : nullptr, po);
  json m = r.to_json();
  m["k"] = po.k;
  m["mode"] = o.mode;
  if (head) m["alpha"] = po.alpha;
  write_json(run.output("metrics.json"), m);
  run.log() << "recon IoU " << r.recon_iou << ", test NLL " << r.test_nll << ", completion UHD " << r.completion_uhd
            << " vs unconditional " << r.unconditional_uhd << ", diverse " << r.diverse_fraction << '\n';
  if (head) {
    run.log() << "conditioned IoU " << r.conditional_iou << " vs unconditional " << r.unconditional_iou << " (" << r.wins
              << " wins, " << r.losses << " losses, p = " << r.sign_p << ")\n";
  }
}

void cmd_export(Run& run, const Options& o) {
  run.input("input", o.input);
  const std::vector<TsdfGrid> grids = read_tsdf_file(require_path(o.input, "--input"));
  const int64_t index = std::max<int64_t>(o.index, 0);
  if (index >= static_cast<int64_t>(grids.size())) {
    throw UsageError("--index: " + std::to_string(index) + " outside the " + std::to_string(grids.size()) + " grids");
  }
  const ExportFormat format = export_format_from_name(o.format);
  const std::string stem = "grid_" + std::to_string(index);
  for (const fs::path& p : export_grid(grids[static_cast<size_t>(index)], format, run.dir, stem)) {
    run.output(p.filename().string());
  }
  run.log() << "exported grid " << index << " as " << o.format << '\n';
}

void cmd_gradcheck(Run& run) {
  const std::vector<GradSuiteRow> rows = run_gradient_suite();
  json table = json::array();
  bool ok = true;
  char line[160];
  for (const GradSuiteRow& r : rows) {
    const bool pass = r.max_rel_error < kGradSuiteTolerance;
    ok = ok && pass;
    table.push_back({{"block", r.block}, {"max_rel_error", r.max_rel_error}, {"checked", r.checked},
                     {"worst_param", r.worst_param}, {"pass", pass}});
    std::snprintf(line, sizeof line, "%-36s %10.3e %6lld  %s\n", r.block.c_str(), r.max_rel_error,
                  static_cast<long long>(r.checked), pass ? "ok" : "FAIL");
    run.log() << line;
  }
  write_json(run.output("gradcheck.json"), {{"tolerance", kGradSuiteTolerance}, {"blocks", table}});
  if (!ok) throw CheckError("gradient check above " + std::to_string(kGradSuiteTolerance) + " in at least one block");
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"voxprior: latent-grid shape priors"};
  app.require_subcommand(1);
  auto common = [&](CLI::App* s) {
    s->add_option("--config", o.config, "Run configuration JSON");
    s->add_option("--out", o.out, "Output directory")->required();
    s->add_option("--seed", o.seed, "Master seed; re-derives every section seed");
  };
  auto sampling = [&](CLI::App* s) {
    s->add_option("--k", o.k, "Samples per input");
    s->add_option("--temperature", o.temperature, "Prior sampling temperature");
  };
  auto partial = [&](CLI::App* s) {
    s->add_option("--mode", o.mode, "bottom_half, octant or patch_list");
    s->add_option("--patches", o.patches, "Flat patch indices for patch_list")->delimiter(',');
    s->add_flag("--intersection", o.intersection, "Octant: intersect the three halves");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "Generate the procedural dataset");
  common(gen);
  CLI::App* tv = app.add_subcommand("train-vqvae", "Train the patch-wise VQ-VAE");
  common(tv);
  tv->add_option("--data", o.data, "Dataset directory");
  CLI::App* tp = app.add_subcommand("train-prior", "Tokenize the dataset and train the prior");
  common(tp);
  tp->add_option("--data", o.data, "Dataset directory");
  tp->add_option("--vqvae", o.vqvae, "VQ-VAE checkpoint");
  CLI::App* tc = app.add_subcommand("train-cond", "Train a conditional head");
  common(tc);
  tc->add_option("--data", o.data, "Dataset directory");
  tc->add_option("--vqvae", o.vqvae, "VQ-VAE checkpoint");
  tc->add_option("--kind", o.kind, "label, attributes or silhouette");
  CLI::App* rc = app.add_subcommand("reconstruct", "Encode and decode dataset shapes");
  common(rc);
  rc->add_option("--data", o.data, "Dataset directory");
  rc->add_option("--vqvae", o.vqvae, "VQ-VAE checkpoint");
  rc->add_option("--split", o.split, "train, val, test or all");
  rc->add_option("--index", o.index, "Single shape index");
  CLI::App* cp = app.add_subcommand("complete", "Complete a partial shape");
  common(cp);
  sampling(cp);
  partial(cp);
  cp->add_option("--data", o.data, "Dataset directory");
  cp->add_option("--vqvae", o.vqvae, "VQ-VAE checkpoint");
  cp->add_option("--prior", o.prior, "Prior checkpoint");
  cp->add_option("--cond", o.cond, "Optional conditional head");
  cp->add_option("--alpha", o.alpha, "Conditional weight");
  cp->add_option("--index", o.index, "Shape index (default: first test shape)");
  CLI::App* gn = app.add_subcommand("generate", "Sample shapes from the prior");
  common(gn);
  sampling(gn);
  gn->add_option("--vqvae", o.vqvae, "VQ-VAE checkpoint");
  gn->add_option("--prior", o.prior, "Prior checkpoint");
  gn->add_option("--cond", o.cond, "Optional conditional head");
  gn->add_option("--alpha", o.alpha, "Conditional weight");
  gn->add_option("--data", o.data, "Dataset the conditioning is taken from");
  gn->add_option("--index", o.index, "Shape index of the conditioning");
  gn->add_option("--label", o.label, "Class label for a label head");
  CLI::App* ev = app.add_subcommand("evaluate", "Held-out completion and conditioning metrics");
  common(ev);
  sampling(ev);
  partial(ev);
  ev->add_option("--data", o.data, "Dataset directory");
  ev->add_option("--vqvae", o.vqvae, "VQ-VAE checkpoint");
  ev->add_option("--prior", o.prior, "Prior checkpoint");
  ev->add_option("--cond", o.cond, "Optional conditional head");
  ev->add_option("--alpha", o.alpha, "Conditional weight");
  ev->add_option("--shapes", o.shapes, "Number of test shapes");
  CLI::App* ex = app.add_subcommand("export", "Export one grid of a TSDF file");
  common(ex);
  ex->add_option("--input", o.input, "TSDF block file");
  ex->add_option("--index", o.index, "Grid index in the file");
  ex->add_option("--format", o.format, "obj_voxels, pgm_slices or raw");
  CLI::App* gc = app.add_subcommand("gradcheck", "Finite-difference check of every block");
  common(gc);

  std::vector<std::string> storage{"voxprior"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: kind=usage message=" << one_line(e.what()) << '\n';
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    Run r(name, o, out);
    if (name == "gen-data") cmd_gen_data(r);
    else if (name == "train-vqvae") cmd_train_vqvae(r, o);
    else if (name == "train-prior") cmd_train_prior(r, o);
    else if (name == "train-cond") cmd_train_cond(r, o);
    else if (name == "reconstruct") cmd_reconstruct(r, o);
    else if (name == "complete") cmd_complete(r, o);
    else if (name == "generate") cmd_generate(r, o);
    else if (name == "evaluate") cmd_evaluate(r, o);
    else if (name == "export") cmd_export(r, o);
    else if (name == "gradcheck") cmd_gradcheck(r);
    r.finish();
  } catch (const UsageError& e) {
    err << "error: kind=usage message=" << one_line(e.what()) << '\n';
    return 2;
  } catch (const ConfigError& e) {
    err << "error: kind=usage message=" << one_line(e.what()) << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: kind=" << e.kind() << " message=" << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: kind=internal message=" << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}

}  // namespace voxprior::cli
