#pragma once

// Numerical checks for the inner smoothing problem, independent of the closed form.
//
// For one instance with model probabilities p, the part of the regularized
// objective that depends on the smoothing distribution q is
//   f(q) = -alpha * sum_j q_j log p_j + beta * sum_j q_j log(K q_j).
// Everything else (the one-hot part of the label) is constant in q.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "labo/numerics.hpp"

namespace labo {

struct InnerProblem {
  ProbVec p;
  double alpha = 1.0;
  double beta = 1.0;

  InnerProblem(ProbVec model_p, double a, double b) : p(std::move(model_p)), alpha(a), beta(b) {
    if (!p.strictly_positive()) throw std::domain_error("InnerProblem: p must be strictly positive");
    if (!(beta > 0.0)) throw std::invalid_argument("InnerProblem: beta must be > 0");
    if (!(alpha >= 0.0)) throw std::invalid_argument("InnerProblem: alpha must be >= 0");
  }

  std::size_t size() const { return p.size(); }

  /// f(q) for any positive vector q (not necessarily on the simplex).
  double objective(std::span<const double> q) const {
    const double log_k = std::log(static_cast<double>(size()));
    double f = 0.0;
    for (std::size_t j = 0; j < size(); ++j) {
      f -= alpha * q[j] * std::log(p[j]);
      if (q[j] > 0.0) f += beta * q[j] * (log_k + std::log(q[j]));
    }
    return f;
  }

  /// Unconstrained gradient: -alpha log p_j + beta (log q_j + 1 + log K).
  std::vector<double> gradient(std::span<const double> q) const {
    const double log_k = std::log(static_cast<double>(size()));
    std::vector<double> g(size());
    for (std::size_t j = 0; j < size(); ++j) {
      g[j] = -alpha * std::log(p[j]) + beta * (std::log(q[j]) + 1.0 + log_k);
    }
    return g;
  }
};

/// Euclidean norm of g after removing its component along the all-ones vector,
/// i.e. its projection onto the tangent space of the simplex.
inline double tangent_projection_norm(std::span<const double> g) {
  double mean = 0.0;
  for (double v : g) mean += v;
  mean /= static_cast<double>(g.size());
  double s = 0.0;
  for (double v : g) s += (v - mean) * (v - mean);
  return std::sqrt(s);
}

struct SimplexSolverReport {
  ProbVec argmin = ProbVec::uniform(2);
  double objective_at_argmin = 0.0;
  int iterations = 0;
  bool converged = false;
  /// L-inf norm of step * (g - mean g) at the last iterate (the mirror-descent gradient mapping).
  double projected_gradient = 0.0;
  /// Smallest entry seen across all iterates.
  double min_entry = 0.0;
};

inline constexpr double kSolverTolerance = 1e-10;
inline constexpr int kSolverMaxIter = 100000;

/// Exponentiated-gradient (entropic mirror descent) with step 0.1 / beta.
/// Iterates are carried as log-weights so they never leave the open simplex.
/// Converged once successive iterates and the gradient mapping are both within `tol` (L-inf).
inline SimplexSolverReport solve_inner_numeric(const InnerProblem& prob,
                                               double tol = kSolverTolerance,
                                               int max_iter = kSolverMaxIter,
                                               std::optional<ProbVec> start = std::nullopt) {
  if (!(tol > 0.0)) throw std::invalid_argument("solve_inner_numeric: tol must be > 0");
  const std::size_t k = prob.size();
  const double step = 0.1 / prob.beta;

  std::vector<double> log_q(k, -std::log(static_cast<double>(k)));
  if (start) {
    if (start->size() != k || !start->strictly_positive()) {
      throw std::invalid_argument("solve_inner_numeric: bad starting point");
    }
    for (std::size_t j = 0; j < k; ++j) log_q[j] = std::log((*start)[j]);
    log_q = log_normalize(log_q);
  }
  std::vector<double> q(k);
  for (std::size_t j = 0; j < k; ++j) q[j] = std::exp(log_q[j]);

  SimplexSolverReport report;
  report.min_entry = *std::min_element(q.begin(), q.end());
  std::vector<double> next(k);
  for (int it = 1; it <= max_iter; ++it) {
    const auto g = prob.gradient(q);
    double g_mean = 0.0;
    for (double v : g) g_mean += v;
    g_mean /= static_cast<double>(k);
    double mapping = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      mapping = std::max(mapping, step * std::abs(g[j] - g_mean));
      log_q[j] -= step * g[j];
    }
    log_q = log_normalize(log_q);
    double change = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      next[j] = std::exp(log_q[j]);
      change = std::max(change, std::abs(next[j] - q[j]));
    }
    q.swap(next);
    report.min_entry = std::min(report.min_entry, *std::min_element(q.begin(), q.end()));
    report.iterations = it;
    report.projected_gradient = mapping;
    if (change <= tol && mapping <= tol) {
      report.converged = true;
      break;
    }
  }
  report.argmin = prob_from_log(log_q);
  report.objective_at_argmin = prob.objective(report.argmin.values());
  return report;
}

using ClosedFormFn = std::function<ProbVec(const ProbVec&, double)>;

struct ClosedFormCheck {
  /// L-inf distance between the closed form and the solver's argmin.
  double distance = 0.0;
  /// objective(closed form) - objective(solver argmin); <= 0 means the closed form did no worse.
  double objective_gap = 0.0;
  int solver_iterations = 0;
};

/// Compares `closed_form(p, beta / alpha)` against the numerical minimizer.
/// Throws std::runtime_error if the solver does not converge.
inline ClosedFormCheck check_closed_form(const InnerProblem& prob, const ClosedFormFn& closed_form,
                                       double tol = kSolverTolerance) {
  if (!(prob.alpha > 0.0)) throw std::invalid_argument("check_closed_form: alpha must be > 0");
  const auto report = solve_inner_numeric(prob, tol);
  if (!report.converged) {
    throw std::runtime_error("check_closed_form: solver did not converge in " +
                             std::to_string(report.iterations) + " iterations");
  }
  const ProbVec closed = closed_form(prob.p, prob.beta / prob.alpha);
  ClosedFormCheck out;
  out.distance = max_abs_diff(closed.values(), report.argmin.values());
  out.objective_gap = prob.objective(closed.values()) - report.objective_at_argmin;
  out.solver_iterations = report.iterations;
  return out;
}

struct HessianCheck {
  /// L-inf distance between the numerical diagonal and beta / q_j.
  double diagonal_error = 0.0;
  /// Largest |off-diagonal| entry of the numerical Hessian.
  double max_off_diagonal = 0.0;
  double min_diagonal = 0.0;
  std::vector<double> numerical_diagonal;
};

namespace detail {

// Central second difference along unit directions i and j with step sizes hi, hj.
inline double second_difference(const InnerProblem& prob, std::vector<double> q, std::size_t i,
                                std::size_t j, double hi, double hj) {
  auto f = [&](double di, double dj) {
    auto x = q;
    x[i] += di;
    x[j] += dj;
    return prob.objective(x);
  };
  if (i == j) {
    return (f(hi, 0.0) - 2.0 * prob.objective(q) + f(-hi, 0.0)) / (hi * hi);
  }
  return (f(hi, hj) - f(hi, -hj) - f(-hi, hj) + f(-hi, -hj)) / (4.0 * hi * hj);
}

// Two levels of Richardson extrapolation on steps h, h/2, h/4 cancel the h^2 and h^4 terms.
inline double richardson_second_difference(const InnerProblem& prob, const std::vector<double>& q,
                                           std::size_t i, std::size_t j) {
  const double hi = 0.1 * q[i];
  const double hj = 0.1 * q[j];
  const double d1 = second_difference(prob, q, i, j, hi, hj);
  const double d2 = second_difference(prob, q, i, j, hi / 2, hj / 2);
  const double d4 = second_difference(prob, q, i, j, hi / 4, hj / 4);
  const double r1 = (4.0 * d2 - d1) / 3.0;
  const double r2 = (4.0 * d4 - d2) / 3.0;
  return (16.0 * r2 - r1) / 15.0;
}

}  // namespace detail

/// Numerical Hessian of the inner objective with respect to the entries of
/// `p_ls`, compared with the analytic diag(beta / p_ls(j)).
/// `model_p` and `alpha` only shape the linear term, which has no curvature.
inline HessianCheck hessian_check(const ProbVec& p_ls, double beta, const ProbVec& model_p,
                                  double alpha = 1.0) {
  if (!p_ls.strictly_positive()) throw std::domain_error("hessian_check: p_ls must be > 0");
  if (model_p.size() != p_ls.size()) throw std::invalid_argument("hessian_check: size mismatch");
  const InnerProblem prob(model_p, alpha, beta);
  const std::vector<double> q(p_ls.values().begin(), p_ls.values().end());
  HessianCheck out;
  out.numerical_diagonal.resize(q.size());
  out.min_diagonal = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < q.size(); ++i) {
    for (std::size_t j = i; j < q.size(); ++j) {
      const double h = detail::richardson_second_difference(prob, q, i, j);
      if (i == j) {
        out.numerical_diagonal[i] = h;
        out.diagonal_error = std::max(out.diagonal_error, std::abs(h - beta / q[i]));
        out.min_diagonal = std::min(out.min_diagonal, h);
      } else {
        out.max_off_diagonal = std::max(out.max_off_diagonal, std::abs(h));
      }
    }
  }
  return out;
}

inline HessianCheck hessian_check(const ProbVec& p_ls, double beta) {
  return hessian_check(p_ls, beta, p_ls, 1.0);
}

}  // namespace labo
