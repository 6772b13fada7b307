#pragma once

// Two-stage training: uniform label smoothing for the first `warmup` steps,
// then labels from the configured regularizer. One outer gradient step per
// freshly computed set of labels; no label state survives between steps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "labo/data.hpp"
#include "labo/model.hpp"
#include "labo/numerics.hpp"
#include "labo/objectives.hpp"
#include "labo/smoothing.hpp"

namespace labo {

enum class Regularizer { none, ls, cp, kd, labo };

inline std::string to_string(Regularizer r) {
  switch (r) {
    case Regularizer::none: return "none";
    case Regularizer::ls: return "ls";
    case Regularizer::cp: return "cp";
    case Regularizer::kd: return "kd";
    case Regularizer::labo: return "labo";
  }
  return "?";
}

inline Regularizer regularizer_from_string(const std::string& s) {
  if (s == "none") return Regularizer::none;
  if (s == "ls") return Regularizer::ls;
  if (s == "cp") return Regularizer::cp;
  if (s == "kd") return Regularizer::kd;
  if (s == "labo") return Regularizer::labo;
  throw std::invalid_argument("unknown regularizer '" + s + "' (expected none|ls|cp|kd|labo)");
}

/// Smoothing mode that produces the labels for a regularizer. CP trains on one-hot labels.
inline SmoothingMode smoothing_mode_for(Regularizer r) {
  switch (r) {
    case Regularizer::none:
    case Regularizer::cp: return SmoothingMode::none;
    case Regularizer::ls: return SmoothingMode::uniform_ls;
    case Regularizer::kd: return SmoothingMode::kd_teacher;
    case Regularizer::labo: return SmoothingMode::labo;
  }
  return SmoothingMode::none;
}

struct TrainConfig {
  int steps = 4000;
  int warmup = 500;
  int batch_size = 128;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;
  Regularizer regularizer = Regularizer::labo;
  SmoothingConfig smoothing{SmoothingMode::labo, AdaptiveAlpha{kDefaultRho}, kDefaultTau};
  /// alpha of the uniform-LS labels used during warm-up.
  double warmup_alpha = kDefaultLsAlpha;
  double cp_beta = 0.1;
  int eval_every = 250;

  /// Defaults for each regularizer: LS/KD alpha 0.1, LABO adaptive rho 0.5 with tau 1.25,
  /// warm-up of steps/8 for LABO and none for the baselines.
  static TrainConfig for_regularizer(Regularizer r, int steps = 4000) {
    TrainConfig cfg;
    cfg.steps = steps;
    cfg.regularizer = r;
    cfg.warmup = r == Regularizer::labo ? steps / 8 : 0;
    switch (r) {
      case Regularizer::labo:
        cfg.smoothing = SmoothingConfig(SmoothingMode::labo, AdaptiveAlpha{kDefaultRho}, kDefaultTau);
        break;
      default:
        cfg.smoothing = SmoothingConfig(smoothing_mode_for(r), FixedAlpha{kDefaultLsAlpha});
        break;
    }
    return cfg;
  }

  void validate() const {
    if (steps < 1) throw std::invalid_argument("TrainConfig: steps must be >= 1");
    if (warmup < 0 || warmup > steps) throw std::invalid_argument("TrainConfig: need 0 <= warmup <= steps");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (!(warmup_alpha >= 0.0 && warmup_alpha <= 1.0)) {
      throw std::invalid_argument("TrainConfig: warmup_alpha must lie in [0, 1]");
    }
    if (!(cp_beta >= 0.0)) throw std::invalid_argument("TrainConfig: cp_beta must be >= 0");
    if (smoothing.mode() != smoothing_mode_for(regularizer)) {
      throw std::invalid_argument("TrainConfig: smoothing mode " + to_string(smoothing.mode()) +
                                  " does not match regularizer " + to_string(regularizer));
    }
  }
};

struct EpochReport {
  int step = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double mean_confidence = 0.0;
  double mean_entropy = 0.0;
  double mean_alpha = 0.0;

  bool operator==(const EpochReport&) const = default;
};

/// Histogram of predicted-class probability over 20 equal bins on [0, 1].
struct ConfidenceHistogram {
  static constexpr std::size_t kBins = 20;
  std::vector<double> edges = make_edges();
  std::vector<std::size_t> counts = std::vector<std::size_t>(kBins, 0);

  static std::vector<double> make_edges() {
    std::vector<double> e(kBins + 1);
    for (std::size_t b = 0; b <= kBins; ++b) e[b] = static_cast<double>(b) / kBins;
    return e;
  }

  static std::size_t bin_of(double confidence) {
    const auto b = static_cast<std::size_t>(std::floor(confidence * kBins));
    return std::min(b, kBins - 1);
  }

  void add(double confidence) { ++counts[bin_of(confidence)]; }

  std::size_t total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }

  std::size_t mode_bin() const { return argmax_count(); }

 private:
  std::size_t argmax_count() const {
    return static_cast<std::size_t>(
        std::distance(counts.begin(), std::max_element(counts.begin(), counts.end())));
  }
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_confidence = 0.0;
  double mean_entropy = 0.0;
  ConfidenceHistogram histogram;
};

struct TrainingError : std::runtime_error {
  TrainingError(int step_index, const std::string& what)
      : std::runtime_error("step " + std::to_string(step_index) + ": " + what), step(step_index) {}
  int step;
};

/// Accuracy, confidence histogram and mean predictive entropy over `indices`.
inline EvalResult evaluate(const Mlp& model, const Dataset& data,
                           const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("evaluate: empty evaluation split");
  if (data.dim != model.input_dim()) {
    throw std::invalid_argument("evaluate: model expects " + std::to_string(model.input_dim()) +
                                " features, dataset has " + std::to_string(data.dim));
  }
  if (data.num_classes != model.num_classes()) {
    throw std::invalid_argument("evaluate: model has " + std::to_string(model.num_classes()) +
                                " classes, dataset has " + std::to_string(data.num_classes));
  }
  EvalResult r;
  std::size_t correct = 0;
  double conf = 0.0;
  double ent = 0.0;
  for (auto i : indices) {
    const ProbVec p = softmax(model.logits(data.row(i)));
    const auto pred = argmax(p.values());
    if (pred == data.labels[i]) ++correct;
    conf += p[pred];
    ent += entropy(p);
    r.histogram.add(p[pred]);
  }
  const auto n = static_cast<double>(indices.size());
  r.accuracy = static_cast<double>(correct) / n;
  r.mean_confidence = conf / n;
  r.mean_entropy = ent / n;
  return r;
}

/// Shuffle-once-per-epoch sampling without replacement.
class EpochSampler {
 public:
  EpochSampler(std::vector<std::size_t> pool, std::uint64_t seed)
      : pool_(std::move(pool)), rng_(seed) {
    if (pool_.empty()) throw std::invalid_argument("EpochSampler: empty training split");
    reshuffle();
  }

  std::vector<std::size_t> next(std::size_t n) {
    std::vector<std::size_t> batch;
    batch.reserve(n);
    while (batch.size() < n) {
      if (pos_ == pool_.size()) reshuffle();
      batch.push_back(pool_[pos_++]);
    }
    return batch;
  }

 private:
  void reshuffle() {
    std::shuffle(pool_.begin(), pool_.end(), rng_);
    pos_ = 0;
  }

  std::vector<std::size_t> pool_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

struct RunResult {
  /// Parameters with the best validation accuracy seen at an evaluation point.
  Mlp best_model;
  Mlp final_model;
  int best_step = 0;
  std::vector<EpochReport> reports;
};

/// Called after each parameter update with the 0-based step index.
using StepObserver = std::function<void(int step, const Mlp& model)>;

inline RunResult run_training(Mlp model, const Dataset& data, const TrainConfig& cfg,
                              const Mlp* teacher = nullptr, const StepObserver& observer = {}) {
  cfg.validate();
  if (cfg.regularizer == Regularizer::kd && teacher == nullptr) {
    throw std::invalid_argument("run_training: kd regularizer needs a teacher model");
  }
  if (teacher != nullptr && (teacher->input_dim() != data.dim ||
                             teacher->num_classes() != data.num_classes)) {
    throw std::invalid_argument("run_training: teacher shape does not match the dataset");
  }
  if (model.input_dim() != data.dim || model.num_classes() != data.num_classes) {
    throw std::invalid_argument("run_training: model shape does not match the dataset");
  }
  const auto& eval_split = data.splits.val.empty() ? data.splits.train : data.splits.val;

  OptimizerState opt(model, cfg.learning_rate, cfg.momentum, cfg.weight_decay);
  EpochSampler sampler(data.splits.train, cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const SmoothingConfig warmup_cfg(SmoothingMode::uniform_ls, FixedAlpha{cfg.warmup_alpha});

  RunResult result;
  double best_acc = -1.0;
  double loss_acc = 0.0;
  double alpha_acc = 0.0;
  int window = 0;
  ForwardCache cache;
  ParamBuffers grads = ParamBuffers::zeros_like(model.params().layers);
  const double inv_n = 1.0 / static_cast<double>(cfg.batch_size);

  for (int step = 0; step < cfg.steps; ++step) {
    const bool warm = step < cfg.warmup;
    const auto batch = sampler.next(static_cast<std::size_t>(cfg.batch_size));
    for (auto& layer : grads.layers) {
      std::fill(layer.weights.data.begin(), layer.weights.data.end(), 0.0);
      std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    }
    double batch_loss = 0.0;
    double batch_alpha = 0.0;
    try {
      for (auto i : batch) {
        const auto k = data.labels[i];
        const LogitVec z = model.forward(data.row(i), cache);
        std::vector<double> gz;
        if (warm) {
          const auto label = build_label(k, z, warmup_cfg);
          batch_loss += smoothed_ce(label, z);
          batch_alpha += label.alpha_used;
          gz = grad_wrt_logits(label, z);
        } else if (cfg.regularizer == Regularizer::cp) {
          batch_loss += cp_loss(k, z, cfg.cp_beta);
          gz = cp_grad_wrt_logits(k, z, cfg.cp_beta);
        } else {
          std::optional<ProbVec> teacher_p;
          if (cfg.regularizer == Regularizer::kd) teacher_p = softmax(teacher->logits(data.row(i)));
          const auto label = build_label(k, z, cfg.smoothing, teacher_p);
          batch_alpha += label.alpha_used;
          switch (cfg.regularizer) {
            case Regularizer::kd:
              batch_loss += kd_loss(k, z, *teacher_p, label.alpha_used);
              break;
            case Regularizer::labo: {
              const double beta = cfg.smoothing.beta_for(label.alpha_used);
              batch_loss +=
                  smoothed_ce(label, z) +
                  beta * kl_div(labo_from_logits(z, cfg.smoothing.tau()), ProbVec::uniform(z.size()));
              break;
            }
            default:
              batch_loss += smoothed_ce(label, z);
              break;
          }
          gz = grad_wrt_logits(label, z);
        }
        model.backward_into(cache, gz, grads);
      }
    } catch (const std::invalid_argument& e) {
      throw TrainingError(step, std::string("numeric failure: ") + e.what());
    }
    grads *= inv_n;
    sgd_step(model, grads, opt);
    if (!std::isfinite(batch_loss)) throw TrainingError(step, "non-finite training loss");

    loss_acc += batch_loss * inv_n;
    alpha_acc += batch_alpha * inv_n;
    ++window;
    if (observer) observer(step, model);

    const bool last = step + 1 == cfg.steps;
    if ((step + 1) % cfg.eval_every == 0 || last) {
      EvalResult ev;
      try {
        ev = evaluate(model, data, eval_split);
      } catch (const std::invalid_argument& e) {
        throw TrainingError(step, std::string("evaluation failed: ") + e.what());
      }
      result.reports.push_back(EpochReport{step + 1, loss_acc / window, ev.accuracy,
                                           ev.mean_confidence, ev.mean_entropy,
                                           alpha_acc / window});
      loss_acc = alpha_acc = 0.0;
      window = 0;
      if (ev.accuracy > best_acc) {
        best_acc = ev.accuracy;
        result.best_model = model;
        result.best_step = step + 1;
      }
    }
  }
  result.final_model = std::move(model);
  return result;
}

/// Architecture of the KD teacher: one hidden layer of width 64.
inline std::vector<std::size_t> teacher_layers(const Dataset& data) {
  return {data.dim, 64, data.num_classes};
}

/// Trains the wider teacher with uniform label smoothing.
inline Mlp train_teacher(const Dataset& data, TrainConfig cfg) {
  const auto steps = cfg.steps;
  const auto base = cfg;
  cfg = TrainConfig::for_regularizer(Regularizer::ls, steps);
  cfg.batch_size = base.batch_size;
  cfg.learning_rate = base.learning_rate;
  cfg.momentum = base.momentum;
  cfg.weight_decay = base.weight_decay;
  cfg.seed = base.seed;
  cfg.eval_every = base.eval_every;
  const Mlp init = Mlp::he_uniform(teacher_layers(data), cfg.seed);
  return run_training(init, data, cfg).best_model;
}

// ---------------------------------------------------------------------------
// Report serialization

inline constexpr const char* kReportCsvHeader =
    "step,train_loss,val_acc,mean_confidence,mean_entropy,mean_alpha";

inline std::string reports_to_csv(const std::vector<EpochReport>& reports) {
  std::ostringstream out;
  out.precision(17);
  out << kReportCsvHeader << '\n';
  for (const auto& r : reports) {
    out << r.step << ',' << r.train_loss << ',' << r.val_acc << ',' << r.mean_confidence << ','
        << r.mean_entropy << ',' << r.mean_alpha << '\n';
  }
  return out.str();
}

inline nlohmann::json histogram_to_json(const ConfidenceHistogram& h) {
  return {{"bins", ConfidenceHistogram::kBins}, {"edges", h.edges}, {"counts", h.counts},
          {"total", h.total()}};
}

/// Two columns per line: bin centre and count.
inline std::string histogram_plot_data(const ConfidenceHistogram& h) {
  std::ostringstream out;
  out << "# bin_center count\n";
  for (std::size_t b = 0; b < ConfidenceHistogram::kBins; ++b) {
    out << 0.5 * (h.edges[b] + h.edges[b + 1]) << ' ' << h.counts[b] << '\n';
  }
  return out.str();
}

}  // namespace labo
