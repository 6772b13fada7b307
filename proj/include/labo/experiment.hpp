#pragma once

// Experiment configuration (a JSON document) and the mode x seed comparison runner.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "labo/data.hpp"
#include "labo/io.hpp"
#include "labo/model.hpp"
#include "labo/train.hpp"

namespace labo {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetSpec {
  std::string kind = "blobs";  // blobs | idx | csv
  // blobs
  std::size_t classes = 3;
  std::size_t per_class = 2000;
  std::size_t dim = 2;
  double stddev = 1.0;
  std::uint64_t seed = 7;
  // idx
  std::string images;
  std::string labels;
  // csv
  std::string path;
  std::string label_column = "label";

  bool operator==(const DatasetSpec&) const = default;
};

struct SmoothingSpec {
  /// Fixed alpha for ls and kd (and for labo when labo_adaptive is false).
  double alpha = kDefaultLsAlpha;
  bool labo_adaptive = true;
  double rho = kDefaultRho;
  double tau = kDefaultTau;
  double cp_beta = 0.1;

  bool operator==(const SmoothingSpec&) const = default;
};

struct TrainSpec {
  int steps = 4000;
  /// Warm-up steps for labo runs; -1 means steps / 8. Baselines never warm up.
  int warmup = -1;
  int batch_size = 128;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double warmup_alpha = kDefaultLsAlpha;
  int eval_every = 250;

  bool operator==(const TrainSpec&) const = default;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<std::size_t> hidden = {32};
  TrainSpec train;
  SmoothingSpec smoothing;
  std::vector<Regularizer> modes = {Regularizer::none, Regularizer::ls, Regularizer::labo};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string teacher_checkpoint;
  std::string output_dir = "labo_out";
  int jobs = 1;

  bool operator==(const ExperimentConfig&) const = default;

  void validate() const {
    if (modes.empty()) throw ConfigError("config: 'modes' must list at least one regularizer");
    if (seeds.empty()) throw ConfigError("config: 'seeds' must list at least one seed");
    if (output_dir.empty()) throw ConfigError("config: 'output_dir' must not be empty");
    if (jobs < 1) throw ConfigError("config: 'jobs' must be >= 1");
    if (dataset.kind != "blobs" && dataset.kind != "idx" && dataset.kind != "csv") {
      throw ConfigError("config: dataset.kind must be blobs, idx or csv");
    }
    for (auto h : hidden) {
      if (h == 0) throw ConfigError("config: hidden layer widths must be positive");
    }
    try {
      for (auto m : modes) (void)train_config(m, seeds.front());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }

  TrainConfig train_config(Regularizer mode, std::uint64_t seed) const {
    TrainConfig cfg = TrainConfig::for_regularizer(mode, train.steps);
    cfg.batch_size = train.batch_size;
    cfg.learning_rate = train.learning_rate;
    cfg.momentum = train.momentum;
    cfg.weight_decay = train.weight_decay;
    cfg.warmup_alpha = train.warmup_alpha;
    cfg.eval_every = train.eval_every;
    cfg.cp_beta = smoothing.cp_beta;
    cfg.seed = seed;
    if (mode == Regularizer::labo) {
      cfg.warmup = train.warmup < 0 ? train.steps / 8 : train.warmup;
      const AlphaRule rule = smoothing.labo_adaptive ? AlphaRule{AdaptiveAlpha{smoothing.rho}}
                                                     : AlphaRule{FixedAlpha{smoothing.alpha}};
      cfg.smoothing = SmoothingConfig(SmoothingMode::labo, rule, smoothing.tau);
    } else {
      cfg.warmup = 0;
      cfg.smoothing = SmoothingConfig(smoothing_mode_for(mode), FixedAlpha{smoothing.alpha},
                                      smoothing.tau);
    }
    cfg.validate();
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// JSON mapping

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json ds = {{"kind", c.dataset.kind}};
  if (c.dataset.kind == "blobs") {
    ds["classes"] = c.dataset.classes;
    ds["per_class"] = c.dataset.per_class;
    ds["dim"] = c.dataset.dim;
    ds["std"] = c.dataset.stddev;
    ds["seed"] = c.dataset.seed;
  } else if (c.dataset.kind == "idx") {
    ds["images"] = c.dataset.images;
    ds["labels"] = c.dataset.labels;
    ds["seed"] = c.dataset.seed;
  } else {
    ds["path"] = c.dataset.path;
    ds["label_column"] = c.dataset.label_column;
    ds["seed"] = c.dataset.seed;
  }
  std::vector<std::string> modes;
  for (auto m : c.modes) modes.push_back(to_string(m));
  return {
      {"dataset", ds},
      {"model", {{"hidden", c.hidden}}},
      {"train",
       {{"steps", c.train.steps},
        {"warmup", c.train.warmup},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"momentum", c.train.momentum},
        {"weight_decay", c.train.weight_decay},
        {"warmup_alpha", c.train.warmup_alpha},
        {"eval_every", c.train.eval_every}}},
      {"smoothing",
       {{"alpha", c.smoothing.alpha},
        {"labo_adaptive", c.smoothing.labo_adaptive},
        {"rho", c.smoothing.rho},
        {"tau", c.smoothing.tau},
        {"cp_beta", c.smoothing.cp_beta}}},
      {"modes", modes},
      {"seeds", c.seeds},
      {"teacher_checkpoint", c.teacher_checkpoint},
      {"output_dir", c.output_dir},
      {"jobs", c.jobs},
  };
}

namespace detail {

// Reads j[key] into out when present; rejects keys not in `allowed`.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string where, std::set<std::string> allowed)
      : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError("config: '" + where_ + "' must be an object");
    for (const auto& [key, _] : j_.items()) {
      if (!allowed.count(key)) throw ConfigError("config: unknown key '" + where_ + "." + key + "'");
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) const {
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config: bad value for '" + where_ + "." + key + "': " + e.what());
    }
  }

  const nlohmann::json* child(const std::string& key) const {
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
};

}  // namespace detail

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  const detail::ObjectReader root(j, "root",
                                  {"dataset", "model", "train", "smoothing", "modes", "seeds",
                                   "teacher_checkpoint", "output_dir", "jobs"});
  if (const auto* ds = root.child("dataset")) {
    const detail::ObjectReader r(*ds, "dataset",
                                 {"kind", "classes", "per_class", "dim", "std", "seed", "images",
                                  "labels", "path", "label_column"});
    r.get("kind", c.dataset.kind);
    r.get("classes", c.dataset.classes);
    r.get("per_class", c.dataset.per_class);
    r.get("dim", c.dataset.dim);
    r.get("std", c.dataset.stddev);
    r.get("seed", c.dataset.seed);
    r.get("images", c.dataset.images);
    r.get("labels", c.dataset.labels);
    r.get("path", c.dataset.path);
    r.get("label_column", c.dataset.label_column);
  }
  if (const auto* m = root.child("model")) {
    const detail::ObjectReader r(*m, "model", {"hidden"});
    r.get("hidden", c.hidden);
  }
  if (const auto* t = root.child("train")) {
    const detail::ObjectReader r(*t, "train",
                                 {"steps", "warmup", "batch_size", "learning_rate", "momentum",
                                  "weight_decay", "warmup_alpha", "eval_every"});
    r.get("steps", c.train.steps);
    r.get("warmup", c.train.warmup);
    r.get("batch_size", c.train.batch_size);
    r.get("learning_rate", c.train.learning_rate);
    r.get("momentum", c.train.momentum);
    r.get("weight_decay", c.train.weight_decay);
    r.get("warmup_alpha", c.train.warmup_alpha);
    r.get("eval_every", c.train.eval_every);
  }
  if (const auto* s = root.child("smoothing")) {
    const detail::ObjectReader r(*s, "smoothing", {"alpha", "labo_adaptive", "rho", "tau", "cp_beta"});
    r.get("alpha", c.smoothing.alpha);
    r.get("labo_adaptive", c.smoothing.labo_adaptive);
    r.get("rho", c.smoothing.rho);
    r.get("tau", c.smoothing.tau);
    r.get("cp_beta", c.smoothing.cp_beta);
  }
  std::vector<std::string> modes;
  root.get("modes", modes);
  if (root.child("modes")) {
    c.modes.clear();
    for (const auto& m : modes) {
      try {
        c.modes.push_back(regularizer_from_string(m));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
    }
  }
  root.get("seeds", c.seeds);
  root.get("teacher_checkpoint", c.teacher_checkpoint);
  root.get("output_dir", c.output_dir);
  root.get("jobs", c.jobs);
  c.validate();
  return c;
}

/// Parses a config document. Syntax errors carry the line and column.
inline ExperimentConfig parse_experiment_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("config: syntax error at line " + std::to_string(line) + ", column " +
                      std::to_string(col) + ": " + e.what());
  }
  return experiment_from_json(j);
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

inline Dataset load_dataset(const DatasetSpec& spec) {
  Dataset d;
  if (spec.kind == "blobs") {
    d = gaussian_blobs(spec.classes, spec.per_class, spec.dim, spec.stddev, spec.seed);
  } else if (spec.kind == "idx") {
    d = load_idx(spec.images, spec.labels);
    d.splits = stratified_split(d.labels, d.num_classes, spec.seed);
  } else if (spec.kind == "csv") {
    d = load_csv(spec.path, spec.label_column);
    d.splits = stratified_split(d.labels, d.num_classes, spec.seed);
  } else {
    throw ConfigError("config: unknown dataset kind '" + spec.kind + "'");
  }
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// Runs

struct RunOutcome {
  Regularizer mode = Regularizer::none;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double test_accuracy = 0.0;
  double test_confidence = 0.0;
  double test_entropy = 0.0;
  int best_step = 0;
  ConfidenceHistogram histogram;
  std::vector<EpochReport> reports;
  Mlp model;
};

inline std::vector<std::size_t> architecture(const ExperimentConfig& cfg, const Dataset& data) {
  std::vector<std::size_t> sizes = {data.dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(data.num_classes);
  return sizes;
}

/// One training run, evaluated on the test split with the best-validation checkpoint.
inline RunOutcome run_single(const ExperimentConfig& cfg, const Dataset& data, Regularizer mode,
                             std::uint64_t seed, const Mlp* teacher) {
  RunOutcome out;
  out.mode = mode;
  out.seed = seed;
  try {
    const TrainConfig tc = cfg.train_config(mode, seed);
    const Mlp init = Mlp::he_uniform(architecture(cfg, data), seed);
    auto result = run_training(init, data, tc, teacher);
    const auto& split = data.splits.test.empty() ? data.splits.val : data.splits.test;
    const auto ev = evaluate(result.best_model, data, split);
    out.test_accuracy = ev.accuracy;
    out.test_confidence = ev.mean_confidence;
    out.test_entropy = ev.mean_entropy;
    out.histogram = ev.histogram;
    out.best_step = result.best_step;
    out.reports = std::move(result.reports);
    out.model = std::move(result.best_model);
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

struct ModeSummary {
  Regularizer mode = Regularizer::none;
  int runs = 0;
  int failed = 0;
  double acc_mean = 0.0;
  double acc_std = 0.0;
  double conf_mean = 0.0;
  double conf_std = 0.0;
};

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

inline std::vector<ModeSummary> summarize(const std::vector<Regularizer>& modes,
                                          const std::vector<RunOutcome>& runs) {
  std::vector<ModeSummary> out;
  for (auto m : modes) {
    ModeSummary s;
    s.mode = m;
    std::vector<double> acc, conf;
    for (const auto& r : runs) {
      if (r.mode != m) continue;
      if (!r.ok) {
        ++s.failed;
        continue;
      }
      ++s.runs;
      acc.push_back(r.test_accuracy);
      conf.push_back(r.test_confidence);
    }
    std::tie(s.acc_mean, s.acc_std) = mean_std(acc);
    std::tie(s.conf_mean, s.conf_std) = mean_std(conf);
    out.push_back(s);
  }
  return out;
}

inline std::string fixed2(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

/// Accuracy is reported in percent, mean +- sample std, 2 decimals.
inline std::string summary_table(const std::vector<ModeSummary>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "mode" << std::setw(6) << "runs" << std::setw(8) << "failed"
     << std::setw(20) << "test_acc(%)" << "confidence\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(8) << to_string(r.mode) << std::setw(6) << r.runs << std::setw(8)
       << r.failed << std::setw(20) << (fixed2(100 * r.acc_mean) + " +- " + fixed2(100 * r.acc_std))
       << fixed2(r.conf_mean) << " +- " << fixed2(r.conf_std) << '\n';
  }
  return os.str();
}

inline nlohmann::json summary_json(const ExperimentConfig& cfg, const std::vector<ModeSummary>& rows,
                                   const std::vector<RunOutcome>& runs) {
  nlohmann::json j;
  j["config"] = to_json(cfg);
  auto& modes = j["modes"] = nlohmann::json::array();
  for (const auto& r : rows) {
    modes.push_back({{"mode", to_string(r.mode)},
                     {"runs", r.runs},
                     {"failed", r.failed},
                     {"test_accuracy_pct", {{"mean", fixed2(100 * r.acc_mean)},
                                            {"std", fixed2(100 * r.acc_std)}}},
                     {"mean_confidence", {{"mean", fixed2(r.conf_mean)},
                                          {"std", fixed2(r.conf_std)}}}});
  }
  auto& list = j["runs"] = nlohmann::json::array();
  for (const auto& r : runs) {
    nlohmann::json e = {{"mode", to_string(r.mode)}, {"seed", r.seed}, {"ok", r.ok}};
    if (r.ok) {
      e["test_accuracy"] = r.test_accuracy;
      e["test_confidence"] = r.test_confidence;
      e["best_step"] = r.best_step;
    } else {
      e["error"] = r.error;
    }
    list.push_back(e);
  }
  return j;
}

inline std::string run_stem(Regularizer mode, std::uint64_t seed) {
  return to_string(mode) + "_seed" + std::to_string(seed);
}

struct ExperimentResult {
  std::vector<RunOutcome> runs;
  std::vector<ModeSummary> summary;
};

/// Checks that a kd comparison has a readable teacher before any run starts.
inline std::optional<Mlp> load_teacher_for(const ExperimentConfig& cfg) {
  if (std::find(cfg.modes.begin(), cfg.modes.end(), Regularizer::kd) == cfg.modes.end()) {
    return std::nullopt;
  }
  if (cfg.teacher_checkpoint.empty()) {
    throw ConfigError("config: mode 'kd' needs 'teacher_checkpoint' (run `labo teacher` first)");
  }
  if (!std::filesystem::exists(cfg.teacher_checkpoint)) {
    throw ConfigError("config: teacher checkpoint not found: " + cfg.teacher_checkpoint);
  }
  return load_checkpoint(cfg.teacher_checkpoint);
}

/// Runs every (mode, seed) pair, `cfg.jobs` at a time, then writes per-run CSV,
/// checkpoint and histogram files plus summary.json / summary.txt into output_dir.
/// A failed run is recorded in the summary; the others still run.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& data,
                                       std::ostream* log = nullptr) {
  const auto teacher = load_teacher_for(cfg);
  std::vector<std::pair<Regularizer, std::uint64_t>> jobs;
  for (auto m : cfg.modes) {
    for (auto s : cfg.seeds) jobs.emplace_back(m, s);
  }
  ExperimentResult result;
  result.runs.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      result.runs[i] = run_single(cfg, data, jobs[i].first, jobs[i].second,
                                  teacher ? &*teacher : nullptr);
      if (log != nullptr) {
        const std::lock_guard lock(log_mutex);
        const auto& r = result.runs[i];
        *log << run_stem(r.mode, r.seed) << ": "
             << (r.ok ? "test_acc=" + fixed2(100 * r.test_accuracy) +
                            "% confidence=" + fixed2(r.test_confidence)
                      : "FAILED " + r.error)
             << '\n';
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const int n = std::min<int>(cfg.jobs, static_cast<int>(jobs.size()));
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  }

  const std::filesystem::path out_dir = cfg.output_dir;
  for (const auto& r : result.runs) {
    if (!r.ok) continue;
    const auto stem = run_stem(r.mode, r.seed);
    write_file_atomic(out_dir / (stem + ".csv"), reports_to_csv(r.reports));
    save_checkpoint(r.model, out_dir / (stem + ".ckpt.json"));
    write_file_atomic(out_dir / (stem + ".hist.json"), histogram_to_json(r.histogram).dump(1) + "\n");
  }
  result.summary = summarize(cfg.modes, result.runs);
  write_file_atomic(out_dir / "summary.json", summary_json(cfg, result.summary, result.runs).dump(2) + "\n");
  write_file_atomic(out_dir / "summary.txt", summary_table(result.summary));
  return result;
}

}  // namespace labo
