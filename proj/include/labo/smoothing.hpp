#pragma once

// Smoothing distributions and smoothed training targets.
//
// A smoothed label mixes the one-hot target with a smoothing distribution:
//   dist = (1 - alpha) * onehot(k) + alpha * p_ls.
// LABO picks p_ls as the minimizer of the per-instance objective
//   E_dist[-log p] + beta * KL(p_ls || U),
// which is p^(alpha/beta) renormalized, i.e. softmax(z / tau) with tau = beta/alpha.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "labo/numerics.hpp"

namespace labo {

enum class SmoothingMode { none, uniform_ls, kd_teacher, labo };

struct FixedAlpha {
  double alpha = 0.1;
};

/// alpha = (log K - rho * H(p)) / log K, recomputed per instance.
struct AdaptiveAlpha {
  double rho = 0.5;
};

using AlphaRule = std::variant<FixedAlpha, AdaptiveAlpha>;

inline constexpr double kDefaultTau = 1.25;
inline constexpr double kDefaultRho = 0.5;
inline constexpr double kDefaultLsAlpha = 0.1;

inline std::string to_string(SmoothingMode m) {
  switch (m) {
    case SmoothingMode::none: return "none";
    case SmoothingMode::uniform_ls: return "uniform_ls";
    case SmoothingMode::kd_teacher: return "kd_teacher";
    case SmoothingMode::labo: return "labo";
  }
  return "?";
}

/// Immutable smoothing settings. beta is never stored; it is alpha * tau.
class SmoothingConfig {
 public:
  SmoothingConfig() = default;

  SmoothingConfig(SmoothingMode mode, AlphaRule rule, double tau = kDefaultTau)
      : mode_(mode), rule_(rule), tau_(tau) {
    if (!(tau_ > 0.0) || !std::isfinite(tau_)) {
      throw std::invalid_argument("SmoothingConfig: tau must be positive and finite");
    }
    if (const auto* f = std::get_if<FixedAlpha>(&rule_)) {
      if (!(f->alpha >= 0.0 && f->alpha <= 1.0)) {
        throw std::invalid_argument("SmoothingConfig: fixed alpha must lie in [0, 1]");
      }
    } else {
      const double rho = std::get<AdaptiveAlpha>(rule_).rho;
      if (!(rho >= 0.5 && rho <= 1.0)) {
        throw std::invalid_argument("SmoothingConfig: rho must lie in [0.5, 1]");
      }
    }
  }

  SmoothingMode mode() const { return mode_; }
  const AlphaRule& alpha_rule() const { return rule_; }
  double tau() const { return tau_; }
  double beta_for(double alpha) const { return alpha * tau_; }

 private:
  SmoothingMode mode_ = SmoothingMode::none;
  AlphaRule rule_ = FixedAlpha{};
  double tau_ = kDefaultTau;
};

struct SmoothedLabel {
  std::size_t target = 0;
  double alpha_used = 0.0;
  ProbVec dist = ProbVec::uniform(2);
};

namespace detail {

inline void check_alpha(double alpha, const char* where) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument(std::string(where) + ": alpha must lie in [0, 1]");
  }
}

inline void check_tau(double tau, const char* where) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument(std::string(where) + ": tau must be positive and finite");
  }
}

}  // namespace detail

inline SmoothedLabel mix_label(std::size_t k, const ProbVec& p_ls, double alpha) {
  detail::check_alpha(alpha, "mix_label");
  if (k >= p_ls.size()) throw std::invalid_argument("mix_label: target out of range");
  std::vector<double> d(p_ls.size());
  for (std::size_t j = 0; j < d.size(); ++j) {
    d[j] = alpha * p_ls[j] + (j == k ? 1.0 - alpha : 0.0);
  }
  return SmoothedLabel{k, alpha, ProbVec(std::move(d))};
}

inline SmoothedLabel uniform_smooth(std::size_t k, std::size_t num_classes, double alpha) {
  detail::check_alpha(alpha, "uniform_smooth");
  if (k >= num_classes) throw std::invalid_argument("uniform_smooth: target out of range");
  return mix_label(k, ProbVec::uniform(num_classes), alpha);
}

/// Closed-form inner minimizer p^(1/tau) / sum p^(1/tau), evaluated in log space.
inline ProbVec labo_optimal_smoothing(const ProbVec& p, double tau) {
  detail::check_tau(tau, "labo_optimal_smoothing");
#ifdef LABO_MUTANT_EXPONENT
  // Deliberately wrong exponent; only built into the mutation-test binary.
  tau = 1.0 / tau;
#endif
  std::vector<double> w(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (!(p[j] > 0.0)) {
      throw std::domain_error("labo_optimal_smoothing: p must be strictly positive");
    }
    w[j] = std::log(p[j]) / tau;
  }
  return prob_from_log(log_normalize(w));
}

/// Same distribution as labo_optimal_smoothing(softmax(z), tau), taken straight from logits.
inline ProbVec labo_from_logits(const LogitVec& z, double tau) {
  return tempered_softmax(z, tau);
}

inline double adaptive_alpha(const ProbVec& p, double rho) {
  if (!(rho >= 0.5 && rho <= 1.0)) {
    throw std::invalid_argument("adaptive_alpha: rho must lie in [0.5, 1]");
  }
  const double h_uniform = std::log(static_cast<double>(p.size()));
  const double a = (h_uniform - rho * entropy(p)) / h_uniform;
  return std::clamp(a, 1.0 - rho, 1.0);
}

inline double resolve_alpha(const AlphaRule& rule, const ProbVec& p) {
  if (const auto* f = std::get_if<FixedAlpha>(&rule)) return f->alpha;
  return adaptive_alpha(p, std::get<AdaptiveAlpha>(rule).rho);
}

/// Target for one instance under `cfg`. The result is a constant for gradient
/// purposes; nothing downstream differentiates through it.
inline SmoothedLabel build_label(std::size_t k, const LogitVec& z, const SmoothingConfig& cfg,
                                 const std::optional<ProbVec>& teacher_p = std::nullopt) {
  const std::size_t num_classes = z.size();
  if (k >= num_classes) throw std::invalid_argument("build_label: target out of range");
  switch (cfg.mode()) {
    case SmoothingMode::none:
      return SmoothedLabel{k, 0.0, ProbVec::one_hot(k, num_classes)};
    case SmoothingMode::uniform_ls: {
      const auto* f = std::get_if<FixedAlpha>(&cfg.alpha_rule());
      if (f == nullptr) throw std::invalid_argument("build_label: uniform_ls needs a fixed alpha");
      return uniform_smooth(k, num_classes, f->alpha);
    }
    case SmoothingMode::kd_teacher: {
      if (!teacher_p) throw std::invalid_argument("build_label: kd_teacher mode needs teacher_p");
      if (teacher_p->size() != num_classes) {
        throw std::invalid_argument("build_label: teacher dimension mismatch");
      }
      const auto* f = std::get_if<FixedAlpha>(&cfg.alpha_rule());
      if (f == nullptr) throw std::invalid_argument("build_label: kd_teacher needs a fixed alpha");
      return mix_label(k, *teacher_p, f->alpha);
    }
    case SmoothingMode::labo: {
      const ProbVec p = softmax(z);
      const double alpha = resolve_alpha(cfg.alpha_rule(), p);
      return mix_label(k, labo_from_logits(z, cfg.tau()), alpha);
    }
  }
  throw std::logic_error("build_label: unknown mode");
}

}  // namespace labo
