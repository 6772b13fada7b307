#pragma once

// Property suite behind `labo verify`: closed form vs. solver, the temperature
// identity, the KD decomposition, boundary limits, gradient checks and the
// Hessian structure. Every sweep is seeded, so results are reproducible.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "labo/gradcheck.hpp"
#include "labo/model.hpp"
#include "labo/numerics.hpp"
#include "labo/objectives.hpp"
#include "labo/oracle.hpp"
#include "labo/smoothing.hpp"

namespace labo {

struct CheckResult {
  std::string name;
  bool passed = false;
  /// Worst observed value of the checked quantity.
  double worst = 0.0;
  double threshold = 0.0;
  int instances = 0;
  std::string detail;
};

struct VerifyOptions {
  /// 100-instance sweeps instead of 1000.
  bool quick = false;
  std::uint64_t seed = 20240611;
  /// The closed form under test; swap in a mutant to check the suite catches it.
  ClosedFormFn closed_form = [](const ProbVec& p, double tau) {
    return labo_optimal_smoothing(p, tau);
  };
};

/// Thresholds pinned by the acceptance criteria.
namespace thresholds {
inline constexpr double kClosedFormDistance = 1e-6;
inline constexpr double kClosedFormObjectiveGap = 1e-9;
inline constexpr double kTemperatureIdentity = 1e-12;
inline constexpr double kKdResidual = 1e-10;
inline constexpr double kTauOneIdentity = 1e-12;
inline constexpr double kLargeTauUniform = 1e-5;
inline constexpr double kReducedObjective = 1e-10;
inline constexpr double kHypergradientRelL2 = 1e-4;
inline constexpr double kTangentNorm = 1e-8;
inline constexpr double kHessian = 1e-4;
inline constexpr double kModelGradient = 1e-5;
inline constexpr double kCpGradient = 1e-6;
inline constexpr double kFiniteDifferenceStep = 1e-5;
}  // namespace thresholds

/// Random inputs shared by the sweeps.
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }

  std::size_t num_classes() {
    static constexpr std::size_t kChoices[] = {2, 3, 10, 50};
    return kChoices[index(4)];
  }

  /// Dirichlet(1) draw, rejected until every entry is >= min_entry.
  ProbVec dirichlet(std::size_t k, double min_entry = 1e-6) {
    std::exponential_distribution<double> expo(1.0);
    for (;;) {
      std::vector<double> v(k);
      double s = 0.0;
      for (auto& x : v) s += (x = expo(rng_));
      for (auto& x : v) x /= s;
      if (*std::min_element(v.begin(), v.end()) >= min_entry) return ProbVec(std::move(v));
    }
  }

  LogitVec logits(std::size_t k, double spread = 5.0) {
    std::vector<double> z(k);
    for (auto& v : z) v = uniform(-spread, spread);
    return LogitVec(std::move(z));
  }

  std::vector<double> gaussian(std::size_t n) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng_);
    return v;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

namespace detail {

inline CheckResult finish(std::string name, double worst, double threshold, int n,
                          std::string detail = {}) {
  return CheckResult{std::move(name), worst <= threshold, worst, threshold, n, std::move(detail)};
}

// A [2,8,3] network at a random parameter point (He weights, random biases) whose
// hidden pre-activations stay clear of the ReLU kink for the given batch.
inline Mlp random_small_mlp(Sampler& s, const std::vector<Example>& batch,
                            const std::vector<std::size_t>& sizes) {
  for (;;) {
    Mlp m = Mlp::he_uniform(sizes, s.engine()());
    for (auto& layer : m.params().layers) {
      for (double& b : layer.bias) b = s.uniform(-0.5, 0.5);
    }
    if (min_hidden_margin(m, batch) > 1e-3) return m;
  }
}

inline std::vector<Example> random_batch(Sampler& s, std::size_t n, std::size_t dim,
                                         std::size_t classes) {
  std::vector<Example> batch(n);
  for (auto& ex : batch) {
    ex.x = s.gaussian(dim);
    ex.target = s.index(classes);
  }
  return batch;
}

}  // namespace detail

/// Closed form vs. exponentiated-gradient minimizer over random (p, tau, alpha).
inline CheckResult check_closed_form_vs_solver(const VerifyOptions& opt, int n) {
  Sampler s(opt.seed + 1);
  double worst_dist = 0.0;
  double worst_gap = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const auto k = s.num_classes();
    const ProbVec p = s.dirichlet(k);
    const double tau = s.uniform(1.05, 20.0);
    const double alpha = s.uniform(0.05, 1.0);
    const InnerProblem prob(p, alpha, alpha * tau);
    const auto c = check_closed_form(prob, opt.closed_form);
    worst_dist = std::max(worst_dist, c.distance);
    worst_gap = std::max(worst_gap, c.objective_gap);
  }
  auto r = detail::finish("closed form == simplex solver (L-inf)", worst_dist,
                          thresholds::kClosedFormDistance, n);
  std::ostringstream d;
  d << "worst objective gap " << worst_gap;
  r.detail = d.str();
  if (worst_gap > thresholds::kClosedFormObjectiveGap) r.passed = false;
  return r;
}

/// softmax(z / tau) == closed_form(softmax(z), tau).
inline CheckResult check_temperature_identity(const VerifyOptions& opt, int n) {
  Sampler s(opt.seed + 2);
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const LogitVec z = s.logits(s.num_classes());
    double tau = 0.0;
    switch (i % 3) {
      case 0: tau = 1.15; break;
      case 1: tau = 1.25; break;
      default: tau = s.uniform(1.0, 10.0); break;
    }
    const ProbVec a = labo_from_logits(z, tau);
    const ProbVec b = opt.closed_form(softmax(z), tau);
    worst = std::max(worst, max_abs_diff(a.values(), b.values()));
  }
  return detail::finish("tempered softmax == closed form of softmax", worst,
                        thresholds::kTemperatureIdentity, n);
}

inline CheckResult check_kd_decomposition(const VerifyOptions& opt, int n) {
  Sampler s(opt.seed + 3);
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto k = s.num_classes();
    const LogitVec z = s.logits(k);
    const ProbVec t = s.dirichlet(k);
    const double alpha = s.uniform(0.0, 1.0);
    worst = std::max(worst, kd_decomposition_residual(s.index(k), z, t, alpha));
  }
  return detail::finish("KD loss decomposition residual", worst, thresholds::kKdResidual, n);
}

inline std::vector<CheckResult> check_limits(const VerifyOptions& opt, int n) {
  Sampler s(opt.seed + 4);
  double worst_one = 0.0;
  double worst_large = 0.0;
  for (int i = 0; i < n; ++i) {
    const ProbVec p = s.dirichlet(s.num_classes());
    worst_one = std::max(worst_one, max_abs_diff(opt.closed_form(p, 1.0).values(), p.values()));
    const ProbVec u = ProbVec::uniform(p.size());
    worst_large =
        std::max(worst_large, max_abs_diff(opt.closed_form(p, 1e6).values(), u.values()));
  }
  return {detail::finish("tau = 1 returns p", worst_one, thresholds::kTauOneIdentity, n),
          detail::finish("tau = 1e6 returns uniform", worst_large, thresholds::kLargeTauUniform, n)};
}

/// Direct regularized objective at the optimum vs. its term-by-term expansion.
inline CheckResult check_reduced_objective(const VerifyOptions& opt, int n) {
  Sampler s(opt.seed + 5);
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto k = s.num_classes();
    const LogitVec z = s.logits(k);
    const double tau = s.uniform(1.0, 20.0);
    const double alpha = s.uniform(0.05, 1.0);
    const auto target = s.index(k);
    const ProbVec star = opt.closed_form(softmax(z), tau);
    const auto direct = unified_objective(target, z, star, alpha, alpha * tau);
    const auto expanded = reduced_objective(target, z, alpha, alpha * tau);
    worst = std::max(worst, std::abs(direct.total - expanded.total));
  }
  return detail::finish("regularized objective == reduced expansion", worst,
                        thresholds::kReducedObjective, n);
}

/// Detached-label gradient vs. finite differences of the full objective with the
/// smoothing recomputed under every perturbation, plus the simplex-tangent
/// component of the inner gradient at the optimum.
inline std::vector<CheckResult> check_zero_hypergradient(const VerifyOptions& opt, int points) {
  Sampler s(opt.seed + 6);
  const std::vector<std::size_t> sizes = {2, 8, 3};
  double worst_rel = 0.0;
  double worst_tangent = 0.0;
  for (int i = 0; i < points; ++i) {
    const auto batch = detail::random_batch(s, 8, 2, 3);
    const Mlp model = detail::random_small_mlp(s, batch, sizes);
    const double alpha = s.uniform(0.1, 1.0);
    const double tau = s.uniform(1.05, 5.0);
    const double beta = alpha * tau;

    const auto analytic = analytic_param_gradient(model, batch, [&](std::size_t b, const LogitVec& z) {
      const auto label = mix_label(batch[b].target, labo_from_logits(z, tau), alpha);
      return grad_wrt_logits(label, z);
    });
    const auto numeric = numerical_param_gradient(
        model, [&](const Mlp& m) { return batch_labo_objective(m, batch, alpha, tau); },
        thresholds::kFiniteDifferenceStep);
    worst_rel = std::max(worst_rel, relative_l2_error(analytic, numeric));

    for (const auto& ex : batch) {
      const LogitVec z = model.logits(ex.x);
      const ProbVec p = softmax(z);
      const ProbVec star = labo_from_logits(z, tau);
      const InnerProblem prob(p, alpha, beta);
      worst_tangent = std::max(worst_tangent, tangent_projection_norm(prob.gradient(star.values())));
    }
  }
  return {detail::finish("zero hypergradient: detached grad vs full-objective FD (rel L2)",
                         worst_rel, thresholds::kHypergradientRelL2, points),
          detail::finish("inner gradient at optimum is normal to the simplex", worst_tangent,
                         thresholds::kTangentNorm, points)};
}

inline CheckResult check_hessian(const VerifyOptions& opt, int n) {
  Sampler s(opt.seed + 7);
  double worst = 0.0;
  double min_diag = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    static constexpr std::size_t kChoices[] = {2, 3, 5, 10};
    const auto k = kChoices[s.index(4)];
    const ProbVec q = s.dirichlet(k, 1e-2);
    const ProbVec p = s.dirichlet(k, 1e-6);
    const double beta = s.uniform(0.1, 5.0);
    const auto h = hessian_check(q, beta, p, s.uniform(0.05, 1.0));
    worst = std::max({worst, h.diagonal_error, h.max_off_diagonal});
    min_diag = std::min(min_diag, h.min_diagonal);
  }
  auto r = detail::finish("numerical Hessian == diag(beta / q)", worst, thresholds::kHessian, n);
  r.detail = "min diagonal " + std::to_string(min_diag);
  if (!(min_diag > 0.0)) r.passed = false;
  return r;
}

/// Backprop vs. finite differences of the batch smoothed CE, every parameter.
inline CheckResult check_model_gradient(const VerifyOptions& opt, int points) {
  Sampler s(opt.seed + 8);
  double worst = 0.0;
  for (int i = 0; i < points; ++i) {
    const std::vector<std::size_t> sizes =
        i % 2 == 0 ? std::vector<std::size_t>{2, 8, 3} : std::vector<std::size_t>{4, 6, 5, 3};
    const auto batch = detail::random_batch(s, 6, sizes.front(), sizes.back());
    const Mlp model = detail::random_small_mlp(s, batch, sizes);
    std::vector<SmoothedLabel> labels;
    for (const auto& ex : batch) {
      labels.push_back(mix_label(ex.target, s.dirichlet(sizes.back(), 1e-3), s.uniform(0.0, 1.0)));
    }
    const auto analytic = analytic_param_gradient(
        model, batch, [&](std::size_t b, const LogitVec& z) { return grad_wrt_logits(labels[b], z); });
    const auto numeric = numerical_param_gradient(
        model, [&](const Mlp& m) { return batch_smoothed_ce(m, batch, labels); },
        thresholds::kFiniteDifferenceStep);
    worst = std::max(worst, max_relative_error(analytic, numeric));
  }
  return detail::finish("MLP backprop vs finite differences (per parameter)", worst,
                        thresholds::kModelGradient, points);
}

inline CheckResult check_cp_gradient(const VerifyOptions& opt, int n) {
  Sampler s(opt.seed + 9);
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto k = s.num_classes();
    const LogitVec z = s.logits(k, 3.0);
    const auto target = s.index(k);
    const double beta_cp = s.uniform(0.0, 2.0);
    const auto analytic = cp_grad_wrt_logits(target, z, beta_cp);
    const auto numeric = central_differences(
        [&](std::span<const double> v) {
          return cp_loss(target, LogitVec(std::vector<double>(v.begin(), v.end())), beta_cp);
        },
        std::vector<double>(z.values().begin(), z.values().end()), thresholds::kFiniteDifferenceStep);
    worst = std::max(worst, max_relative_error(analytic, numeric));
  }
  return detail::finish("confidence-penalty gradient vs finite differences", worst,
                        thresholds::kCpGradient, n);
}

inline std::vector<CheckResult> run_verify_suite(const VerifyOptions& opt = {}) {
  const int n = opt.quick ? 100 : 1000;
  const int points = opt.quick ? 10 : 50;
  std::vector<CheckResult> out;
  out.push_back(check_closed_form_vs_solver(opt, n));
  out.push_back(check_temperature_identity(opt, n));
  out.push_back(check_kd_decomposition(opt, n));
  for (auto& r : check_limits(opt, n)) out.push_back(std::move(r));
  out.push_back(check_reduced_objective(opt, n));
  for (auto& r : check_zero_hypergradient(opt, points)) out.push_back(std::move(r));
  out.push_back(check_hessian(opt, opt.quick ? 20 : 100));
  out.push_back(check_model_gradient(opt, points));
  out.push_back(check_cp_gradient(opt, n));
  return out;
}

inline bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

inline void print_results(std::ostream& os, const std::vector<CheckResult>& results) {
  for (const auto& r : results) {
    os << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(64) << r.name << std::right
       << " worst=" << std::setprecision(3) << std::scientific << r.worst
       << " limit=" << r.threshold << " n=" << r.instances << std::defaultfloat;
    if (!r.detail.empty()) os << "  (" << r.detail << ")";
    os << '\n';
  }
}

}  // namespace labo
