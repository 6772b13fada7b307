// labo: verify / train / smooth / hist / teacher

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "labo/data.hpp"
#include "labo/experiment.hpp"
#include "labo/io.hpp"
#include "labo/model.hpp"
#include "labo/objectives.hpp"
#include "labo/smoothing.hpp"
#include "labo/train.hpp"
#include "labo/verify.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --out wins over LABO_OUT, which wins over `fallback`.
fs::path output_dir(const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("LABO_OUT"); env != nullptr && *env != '\0') return env;
  return fallback;
}

std::vector<double> to_vector(const labo::ProbVec& p) {
  return {p.values().begin(), p.values().end()};
}

int cmd_verify(bool quick, std::optional<std::uint64_t> seed) {
  labo::VerifyOptions opt;
  opt.quick = quick;
  if (seed) opt.seed = *seed;
  const auto results = labo::run_verify_suite(opt);
  labo::print_results(std::cout, results);
  const bool ok = labo::all_passed(results);
  std::cout << (ok ? "verify: all checks passed\n" : "verify: FAILED\n");
  return ok ? kExitOk : kExitFailure;
}

int cmd_train(const std::string& config_path, const std::string& out_flag,
              std::optional<std::uint64_t> seed, std::optional<int> jobs) {
  auto cfg = labo::load_experiment_config(config_path);
  cfg.output_dir = output_dir(out_flag, cfg.output_dir).string();
  if (seed) cfg.seeds = {*seed};
  if (jobs) cfg.jobs = *jobs;
  cfg.validate();
  const auto data = labo::load_dataset(cfg.dataset);
  const auto result = labo::run_experiment(cfg, data, &std::cerr);
  std::cout << labo::summary_table(result.summary);
  std::cout << "wrote " << (fs::path(cfg.output_dir) / "summary.json").string() << '\n';
  for (const auto& s : result.summary) {
    if (s.failed > 0) return kExitFailure;
  }
  return kExitOk;
}

int cmd_smooth(const std::vector<double>& logits, double tau, std::optional<double> alpha,
               double rho, std::size_t target) {
  const labo::LogitVec z(logits);
  if (target >= z.size()) throw UsageError("smooth: --target out of range");
  const auto p = labo::softmax(z);
  const auto p_star = labo::labo_from_logits(z, tau);
  const double ada = labo::adaptive_alpha(p, rho);
  const double a = alpha.value_or(ada);
  const auto label = labo::mix_label(target, p_star, a);
  const auto obj = labo::unified_objective(target, z, p_star, a, a * tau);
  const nlohmann::json doc = {
      {"logits", logits},
      {"tau", tau},
      {"p", to_vector(p)},
      {"p_star", to_vector(p_star)},
      {"adaptive_alpha", {{"rho", rho}, {"alpha", ada}}},
      {"alpha", a},
      {"beta", a * tau},
      {"target", target},
      {"label", to_vector(label.dist)},
      {"objective", {{"ce_term", obj.ce_term}, {"kl_term", obj.kl_term}, {"total", obj.total}}},
  };
  std::cout << doc.dump(2) << '\n';
  return kExitOk;
}

struct DatasetFlags {
  std::string config;
  std::string csv;
  std::string label_column = "label";
  std::vector<std::string> idx;
};

labo::Dataset dataset_from_flags(const DatasetFlags& f) {
  const int given = !f.config.empty() + !f.csv.empty() + !f.idx.empty();
  if (given != 1) throw UsageError("hist: give exactly one of --config, --csv, --idx");
  if (!f.config.empty()) return labo::load_dataset(labo::load_experiment_config(f.config).dataset);
  if (!f.csv.empty()) return labo::load_csv(f.csv, f.label_column);
  return labo::load_idx(f.idx.at(0), f.idx.at(1));
}

int cmd_hist(const std::string& checkpoint, const DatasetFlags& flags, const std::string& out_flag) {
  const auto model = labo::load_checkpoint(checkpoint);
  const auto data = dataset_from_flags(flags);
  const auto& split = data.splits.test.empty() ? data.splits.val : data.splits.test;
  const auto ev = labo::evaluate(model, data, split);
  const fs::path dir = output_dir(out_flag, ".");
  const auto stem = fs::path(checkpoint).filename().string();
  auto doc = labo::histogram_to_json(ev.histogram);
  doc["checkpoint"] = checkpoint;
  doc["accuracy"] = ev.accuracy;
  doc["mean_confidence"] = ev.mean_confidence;
  labo::write_file_atomic(dir / (stem + ".hist.json"), doc.dump(1) + "\n");
  labo::write_file_atomic(dir / (stem + ".hist.dat"), labo::histogram_plot_data(ev.histogram));
  std::cout << doc.dump(1) << '\n';
  return kExitOk;
}

int cmd_teacher(const std::string& config_path, const std::string& out_flag,
                std::optional<std::uint64_t> seed) {
  const auto cfg = labo::load_experiment_config(config_path);
  const auto data = labo::load_dataset(cfg.dataset);
  auto tc = cfg.train_config(labo::Regularizer::ls, seed.value_or(cfg.seeds.front()));
  const auto teacher = labo::train_teacher(data, tc);
  const fs::path dir = output_dir(out_flag, cfg.output_dir);
  const fs::path path = cfg.teacher_checkpoint.empty() ? dir / "teacher.ckpt.json"
                                                      : fs::path(cfg.teacher_checkpoint);
  labo::save_checkpoint(teacher, path);
  const auto ev = labo::evaluate(teacher, data, data.splits.test);
  std::cout << "teacher test accuracy " << labo::fixed2(100 * ev.accuracy) << "%, wrote "
            << path.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label smoothing experiments and checks"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config;

  auto* verify = app.add_subcommand("verify", "Run the property and oracle checks");
  bool quick = false;
  verify->add_flag("--quick", quick, "100-instance sweeps instead of 1000");
  verify->add_option("--seed", seed, "Base seed for the random instances");

  auto* train = app.add_subcommand("train", "Run every mode x seed in a config and summarize");
  std::optional<int> jobs;
  train->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "Output directory (overrides LABO_OUT and the config)");
  train->add_option("--seed", seed, "Run a single seed instead of the config's list");
  train->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);

  auto* smooth = app.add_subcommand("smooth", "Print the smoothing quantities for one instance");
  std::vector<double> logits;
  double tau = labo::kDefaultTau;
  std::optional<double> alpha;
  double rho = labo::kDefaultRho;
  std::size_t target = 0;
  smooth->add_option("--logits", logits, "Comma-separated logits")->required()->delimiter(',');
  smooth->add_option("--tau", tau, "Temperature beta/alpha")->capture_default_str();
  smooth->add_option("--alpha", alpha, "Mixing weight (default: adaptive alpha)");
  smooth->add_option("--rho", rho, "Adaptive-alpha rho")->capture_default_str();
  smooth->add_option("--target", target, "Target class index")->capture_default_str();

  auto* hist = app.add_subcommand("hist", "Confidence histogram of a checkpoint on a dataset");
  std::string checkpoint;
  DatasetFlags ds;
  hist->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  hist->add_option("--config", ds.config, "Take the dataset from an experiment config");
  hist->add_option("--csv", ds.csv, "CSV dataset");
  hist->add_option("--label-column", ds.label_column, "CSV label column")->capture_default_str();
  hist->add_option("--idx", ds.idx, "IDX images and labels files")->expected(2);
  hist->add_option("--out", out, "Output directory");

  auto* teacher = app.add_subcommand("teacher", "Train the KD teacher for a config");
  teacher->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  teacher->add_option("--out", out, "Output directory");
  teacher->add_option("--seed", seed, "Teacher seed (default: first config seed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (verify->parsed()) return cmd_verify(quick, seed);
    if (train->parsed()) return cmd_train(config, out, seed, jobs);
    if (smooth->parsed()) return cmd_smooth(logits, tau, alpha, rho, target);
    if (hist->parsed()) return cmd_hist(checkpoint, ds, out);
    if (teacher->parsed()) return cmd_teacher(config, out, seed);
  } catch (const labo::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
