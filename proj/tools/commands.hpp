#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "giplab.hpp"
#include "json.hpp"

namespace giplab::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::uint64_t kFnvBasis = 0xcbf29ce484222325ULL;

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Content hash over node counts, edges, feature bits and labels.
inline std::string dataset_fingerprint(const std::vector<Graph>& graphs) {
  std::uint64_t h = kFnvBasis;
  for (const Graph& g : graphs) {
    const std::uint64_t head[3] = {g.num_nodes, g.label, g.edges.size()};
    h = fnv1a(h, head, sizeof head);
    for (const Edge& e : g.edges) {
      const std::uint32_t uv[2] = {e.u, e.v};
      h = fnv1a(h, uv, sizeof uv);
    }
    h = fnv1a(h, g.features.data().data(), g.features.size() * sizeof(double));
  }
  return hex64(h);
}

inline std::string hash_text(const std::string& s) { return hex64(fnv1a(kFnvBasis, s.data(), s.size())); }

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

inline void set_view_probability(ViewSpec& view, double p) {
  for (AugSpec& s : view) s.p = p;
}

struct PretrainOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> dataset;
  std::optional<double> p1, p2;
  std::string out_dir = "runs/out";
};

struct PretrainOutput {
  fs::path checkpoint;
  fs::path loss_trace;
  fs::path manifest;
  std::string run_id;
  PretrainResult result;
  TrainConfig config;
};

// Resolves the run config against flag overrides and the dataset's feature
// dimension.
inline TrainConfig resolve_train_config(RunConfig& run, const Dataset& data, std::optional<std::uint64_t> seed,
                                        std::optional<double> p1, std::optional<double> p2) {
  TrainConfig c = run.train;
  if (seed) c.seed = *seed;
  if (p1) set_view_probability(c.view1, *p1);
  if (p2) set_view_probability(c.view2, *p2);
  if (c.encoder.input_dim == 0) c.encoder.input_dim = data.feature_dim();
  if (c.encoder.input_dim != data.feature_dim())
    throw CompatibilityError("encoder.input_dim " + std::to_string(c.encoder.input_dim) +
                             " does not match dataset feature dim " + std::to_string(data.feature_dim()));
  c.validate();
  return c;
}

inline PretrainOutput cmd_pretrain(const PretrainOptions& opt) {
  const auto started = std::chrono::steady_clock::now();
  RunConfig run = load_run_config(opt.config_path);
  if (opt.dataset) run.dataset = *opt.dataset;
  const Dataset data = load_dataset(run.dataset);
  PretrainOutput out;
  out.config = resolve_train_config(run, data, opt.seed, opt.p1, opt.p2);
  out.result = pretrain(data.graphs, out.config);

  const fs::path dir(opt.out_dir);
  fs::create_directories(dir);
  out.checkpoint = dir / "checkpoint.ckpt";
  out.loss_trace = dir / "loss_trace.csv";
  out.manifest = dir / "manifest.json";
  save_checkpoint(out.result.model, out.config, out.checkpoint.string());
  {
    std::ofstream f(out.loss_trace, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + out.loss_trace.string());
    f << "step,epoch,loss\n";
    for (const LossRecord& r : out.result.trace) f << r.step << ',' << r.epoch << ',' << fmt17(r.loss) << '\n';
  }
  const std::string fingerprint = dataset_fingerprint(data.graphs);
  out.run_id = hash_text("pretrain|" + config_echo(out.config) + "|" + fingerprint);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  write_json(out.manifest, json{{"run_id", out.run_id},
                                {"command", "pretrain"},
                                {"config", config_echo(out.config)},
                                {"seed", out.config.seed},
                                {"dataset", run.dataset},
                                {"dataset_fingerprint", fingerprint},
                                {"artifacts",
                                 {{"checkpoint", out.checkpoint.string()}, {"loss_trace", out.loss_trace.string()}}},
                                {"steps", out.result.trace.size()},
                                {"started_utc", utc_now()},
                                {"wall_clock_seconds", wall}});
  return out;
}

struct MetricsRecord {
  std::string run_id;
  std::string objective;
  std::string view1, view2;
  double p1 = 0.0, p2 = 0.0;
  std::uint64_t seed = 0;
  std::size_t folds = 0;
  double acc_mean = 0.0, acc_std = 0.0;
  double cmsp = 0.0;
  bool cmsp_degenerate = false;
  // mean loss over the last ten steps of the pretraining trace, when known
  std::optional<double> final_loss;

  static std::string header() {
    return "run_id,objective,view1,p1,view2,p2,seed,folds,acc_mean,acc_std,cmsp,cmsp_degenerate,final_loss";
  }
  std::string row() const {
    std::ostringstream s;
    s << run_id << ',' << objective << ',' << view1 << ',' << fmt17(p1) << ',' << view2 << ',' << fmt17(p2)
      << ',' << seed << ',' << folds << ',' << fmt17(acc_mean) << ',' << fmt17(acc_std) << ',' << fmt17(cmsp)
      << ',' << (cmsp_degenerate ? "true" : "false") << ',' << (final_loss ? fmt17(*final_loss) : "");
    return s.str();
  }
};

// Appends under a single writer; writes the header on first use.
inline void append_csv_row(const fs::path& path, const std::string& header, const std::string& row) {
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream f(path, std::ios::binary | std::ios::app);
  if (!f) throw IoError("cannot append to " + path.string());
  if (fresh) f << header << '\n';
  f << row << '\n';
}

struct Evaluation {
  EmbeddingTable table;
  ProbeResult probe;
  CmspResult cmsp;
};

inline Evaluation evaluate(const Dataset& data, const Model& model, const TrainConfig& config, std::size_t folds,
                           std::uint64_t seed) {
  if (config.encoder.input_dim != data.feature_dim())
    throw CompatibilityError("checkpoint expects feature dim " + std::to_string(config.encoder.input_dim) +
                             ", dataset has " + std::to_string(data.feature_dim()));
  Evaluation e;
  e.table = embed_dataset(data.graphs, model.online, config.encoder);
  e.probe = linear_probe(e.table, folds, seed);
  e.cmsp = cmsp(e.table);
  return e;
}

inline std::optional<double> tail_mean(const std::vector<LossRecord>& trace, std::size_t k = 10) {
  if (trace.empty()) return std::nullopt;
  const std::size_t n = std::min(k, trace.size());
  double s = 0.0;
  for (std::size_t i = trace.size() - n; i < trace.size(); ++i) s += trace[i].loss;
  return s / static_cast<double>(n);
}

inline MetricsRecord make_record(const TrainConfig& c, const Evaluation& e, std::size_t folds) {
  MetricsRecord m;
  m.objective = to_string(c.objective.kind);
  m.view1 = view_kinds(c.view1);
  m.view2 = view_kinds(c.view2);
  m.p1 = c.view1.empty() ? 0.0 : c.view1.back().p;
  m.p2 = c.view2.empty() ? 0.0 : c.view2.back().p;
  m.seed = c.seed;
  m.folds = folds;
  m.acc_mean = e.probe.mean_accuracy;
  m.acc_std = e.probe.std_accuracy;
  m.cmsp = e.cmsp.value;
  m.cmsp_degenerate = e.cmsp.degenerate;
  return m;
}

struct ProbeOptions {
  std::string checkpoint;
  std::string dataset = "synth-2M";
  std::size_t folds = 10;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "runs/out";
};

inline MetricsRecord cmd_probe(const ProbeOptions& opt) {
  const auto started = std::chrono::steady_clock::now();
  if (!fs::exists(opt.checkpoint)) throw IoError("checkpoint not found: " + opt.checkpoint);
  const Checkpoint ck = load_checkpoint(opt.checkpoint);
  const Dataset data = load_dataset(opt.dataset);
  const std::uint64_t seed = opt.seed.value_or(ck.config.seed);
  const Evaluation e = evaluate(data, ck.model, ck.config, opt.folds, seed);

  const fs::path dir(opt.out_dir);
  fs::create_directories(dir);
  const fs::path emb = dir / "embeddings.csv";
  write_embedding_csv(e.table, emb.string());
  MetricsRecord m = make_record(ck.config, e, opt.folds);
  m.seed = seed;
  const fs::path trace = fs::path(opt.checkpoint).parent_path() / "loss_trace.csv";
  if (fs::exists(trace)) {
    std::ifstream f(trace);
    std::string line;
    std::vector<LossRecord> records;
    std::getline(f, line);
    while (std::getline(f, line)) {
      const auto last = line.rfind(',');
      if (last != std::string::npos) records.push_back({0, 0, std::strtod(line.c_str() + last + 1, nullptr)});
    }
    m.final_loss = tail_mean(records);
  }
  const std::string fingerprint = dataset_fingerprint(data.graphs);
  m.run_id = hash_text("probe|" + serialize_checkpoint(ck.model, ck.config) + "|" + fingerprint + "|" +
                       std::to_string(opt.folds) + "|" + std::to_string(seed));
  append_csv_row(dir / "metrics.csv", MetricsRecord::header(), m.row());
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  write_json(dir / "probe_manifest.json",
             json{{"run_id", m.run_id},
                  {"command", "probe"},
                  {"config", config_echo(ck.config)},
                  {"seed", seed},
                  {"folds", opt.folds},
                  {"dataset", opt.dataset},
                  {"dataset_fingerprint", fingerprint},
                  {"artifacts",
                   {{"checkpoint", opt.checkpoint},
                    {"embeddings", emb.string()},
                    {"metrics", (dir / "metrics.csv").string()}}},
                  {"started_utc", utc_now()},
                  {"wall_clock_seconds", wall}});
  return m;
}

struct SweepCell {
  double p1 = 0.0, p2 = 0.0;
  std::uint64_t seed = 0;
  double accuracy = std::nan("");
  double cmsp = std::nan("");
  std::string status = "pending";
};

inline std::size_t sweep_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("GIPLAB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) n = static_cast<std::size_t>(v);
  }
  return n;
}

// Runs `fn(i)` for i in [0, n) on up to `threads` workers.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

// One grid cell: pretrain then probe, entirely in memory.
inline SweepCell run_cell(const Dataset& data, TrainConfig base, double p1, double p2, std::uint64_t seed,
                          std::size_t folds) {
  SweepCell cell{p1, p2, seed};
  try {
    base.seed = seed;
    set_view_probability(base.view1, p1);
    set_view_probability(base.view2, p2);
    base.validate();
    const PretrainResult r = pretrain(data.graphs, base);
    const Evaluation e = evaluate(data, r.model, base, folds, seed);
    cell.accuracy = e.probe.mean_accuracy;
    cell.cmsp = e.cmsp.value;
    cell.status = "ok";
  } catch (const std::exception& ex) {
    cell.status = std::string("error: ") + ex.what();
  }
  return cell;
}

struct SweepOptions {
  std::string config_path;
  std::vector<double> grid;
  std::vector<std::uint64_t> seeds;
  std::optional<std::string> dataset;
  std::string out_dir = "runs/sweep";
  std::size_t threads = 0;  // 0: GIPLAB_THREADS or hardware concurrency
};

inline std::vector<SweepCell> cmd_sweep(const SweepOptions& opt) {
  const auto started = std::chrono::steady_clock::now();
  for (double p : opt.grid)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("sweep grid value outside [0,1]: " + fmt17(p));
  if (opt.seeds.empty()) throw ConfigError("sweep needs at least one seed");
  RunConfig run = load_run_config(opt.config_path);
  if (opt.dataset) run.dataset = *opt.dataset;
  const Dataset data = load_dataset(run.dataset);
  const TrainConfig base = resolve_train_config(run, data, std::nullopt, std::nullopt, std::nullopt);

  std::vector<SweepCell> cells;
  for (double p1 : opt.grid)
    for (double p2 : opt.grid)
      for (std::uint64_t s : opt.seeds) cells.push_back({p1, p2, s});
  parallel_for(cells.size(), opt.threads ? opt.threads : sweep_threads(), [&](std::size_t i) {
    cells[i] = run_cell(data, base, cells[i].p1, cells[i].p2, cells[i].seed, run.folds);
  });

  const fs::path dir(opt.out_dir);
  fs::create_directories(dir);
  const fs::path csv = dir / "sweep.csv";
  std::ofstream f(csv, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + csv.string());
  f << "p1,p2,seed,accuracy,cmsp,status\n";
  for (const SweepCell& c : cells) {
    std::string status = c.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    f << fmt17(c.p1) << ',' << fmt17(c.p2) << ',' << c.seed << ',' << fmt17(c.accuracy) << ',' << fmt17(c.cmsp)
      << ',' << status << '\n';
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  write_json(dir / "sweep_manifest.json",
             json{{"run_id", hash_text("sweep|" + config_echo(base) + "|" + dataset_fingerprint(data.graphs))},
                  {"command", "sweep"},
                  {"config", config_echo(base)},
                  {"grid", opt.grid},
                  {"seeds", opt.seeds},
                  {"dataset", run.dataset},
                  {"dataset_fingerprint", dataset_fingerprint(data.graphs)},
                  {"artifacts", {{"sweep", csv.string()}}},
                  {"started_utc", utc_now()},
                  {"wall_clock_seconds", wall}});
  return cells;
}

inline constexpr double kLemmaTolerance = 1e-10;

inline json lemma_report_json(const Lemma1Report& r) {
  json j{{"depth", r.depth}, {"p", r.p}, {"inter_edges", r.inter_edges}, {"residual_defined", r.residual_defined}};
  if (r.residual_defined) {
    j["max_residual"] = r.max_residual;
    j["max_relative_residual"] = r.max_relative_residual;
    j["residuals"] = r.residuals;
  } else {
    j["max_residual"] = nullptr;
  }
  if (r.alpha) {
    json rows = json::array();
    for (std::size_t i = 0; i < r.alpha->rows(); ++i) {
      auto row = r.alpha->row(i);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j["alpha"] = rows;
    j["reconstruction_error"] = *r.reconstruction_error;
  } else {
    j["alpha"] = "undefined";
  }
  j["tolerance"] = kLemmaTolerance;
  j["note"] = r.note;
  return j;
}

struct LemmaOptions {
  std::string config_path;
  double p = 0.5;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> dataset;
  std::optional<std::string> checkpoint;
};

struct LemmaOutcome {
  Lemma1Report report;
  int exit_code = 0;
};

// Lemma check on the first batch of the dataset, printing the report as JSON.
inline LemmaOutcome cmd_lemma_check(const LemmaOptions& opt, std::ostream& out) {
  RunConfig run = load_run_config(opt.config_path);
  if (opt.dataset) run.dataset = *opt.dataset;
  const Dataset data = load_dataset(run.dataset);
  const TrainConfig config = resolve_train_config(run, data, opt.seed, std::nullopt, std::nullopt);
  EncoderParams params;
  if (opt.checkpoint) {
    params = load_checkpoint(*opt.checkpoint).model.online;
  } else {
    SeededRng init = SeededRng(config.seed).substream({streams::kInit, 0});
    params = init_params(config.encoder, init);
  }
  const std::size_t n = std::min(config.batch_size, data.graphs.size());
  std::vector<const Graph*> first;
  for (std::size_t i = 0; i < n; ++i) first.push_back(&data.graphs[i]);
  SeededRng rng = SeededRng(config.seed).substream({streams::kViews, 0, 0});
  LemmaOutcome o;
  o.report = lemma1_verify(disjoint_union(first), params, config.encoder, opt.p, rng);
  const bool bad_residual = o.report.residual_defined && o.report.max_relative_residual > kLemmaTolerance;
  const bool bad_alpha = o.report.reconstruction_error && *o.report.reconstruction_error > kLemmaTolerance;
  o.exit_code = (bad_residual || bad_alpha) ? 1 : 0;
  out << lemma_report_json(o.report).dump(2) << '\n';
  return o;
}

}  // namespace giplab::cli
