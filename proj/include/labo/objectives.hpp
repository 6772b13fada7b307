#pragma once

// Per-instance losses and their gradients with respect to logits.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "labo/numerics.hpp"
#include "labo/smoothing.hpp"

namespace labo {

/// The two summands of the regularized objective. total == ce_term + kl_term.
struct ObjectiveBreakdown {
  double ce_term = 0.0;
  double kl_term = 0.0;
  double total = 0.0;
};

/// -sum_j dist(j) * log softmax(z)_j
inline double smoothed_ce(const SmoothedLabel& label, const LogitVec& z) {
  if (label.dist.size() != z.size()) throw std::invalid_argument("smoothed_ce: dimension mismatch");
  const auto lp = log_softmax(z);
  double loss = 0.0;
  for (std::size_t j = 0; j < lp.size(); ++j) loss -= label.dist[j] * lp[j];
  return loss;
}

/// CE against mix_label(k, p_ls, alpha) plus beta * KL(p_ls || U).
inline ObjectiveBreakdown unified_objective(std::size_t k, const LogitVec& z, const ProbVec& p_ls,
                                            double alpha, double beta) {
  if (!(beta >= 0.0)) throw std::invalid_argument("unified_objective: beta must be >= 0");
  if (p_ls.size() != z.size()) throw std::invalid_argument("unified_objective: dimension mismatch");
  ObjectiveBreakdown out;
  out.ce_term = smoothed_ce(mix_label(k, p_ls, alpha), z);
  out.kl_term = beta == 0.0 ? 0.0 : beta * kl_div(p_ls, ProbVec::uniform(z.size()));
  out.total = out.ce_term + out.kl_term;
  return out;
}

/// The single-stage objective after substituting the closed-form smoothing,
/// expanded term by term:
///   sum_j [ -dist*(j) log p(j) + beta * P*(j) log(K P*(j)) ].
/// Kept as a separate evaluation route from unified_objective.
inline ObjectiveBreakdown reduced_objective(std::size_t k, const LogitVec& z, double alpha,
                                            double beta) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("reduced_objective: alpha must lie in (0, 1]");
  }
  if (!(beta > 0.0)) throw std::invalid_argument("reduced_objective: beta must be > 0");
  if (k >= z.size()) throw std::invalid_argument("reduced_objective: target out of range");
  const auto lp = log_softmax(z);
  const double ratio = alpha / beta;
  std::vector<double> w(lp.size());
  for (std::size_t j = 0; j < lp.size(); ++j) w[j] = ratio * lp[j];
  const auto log_star = log_normalize(w);
  const double log_k = std::log(static_cast<double>(z.size()));

  ObjectiveBreakdown out;
  for (std::size_t j = 0; j < lp.size(); ++j) {
    const double star = std::exp(log_star[j]);
    const double hat = alpha * star + (j == k ? 1.0 - alpha : 0.0);
    out.ce_term -= hat * lp[j];
    out.kl_term += beta * star * (log_k + log_star[j]);
  }
  out.total = out.ce_term + out.kl_term;
  return out;
}

/// Confidence penalty: CE(onehot(k), p) - beta_cp * H(p).
inline double cp_loss(std::size_t k, const LogitVec& z, double beta_cp) {
  if (!(beta_cp >= 0.0)) throw std::invalid_argument("cp_loss: beta_cp must be >= 0");
  if (k >= z.size()) throw std::invalid_argument("cp_loss: target out of range");
  const auto lp = log_softmax(z);
  return -lp[k] - beta_cp * entropy(softmax(z));
}

/// d cp_loss / dz = p - onehot(k) + beta_cp * p * (log p + H(p)).
inline std::vector<double> cp_grad_wrt_logits(std::size_t k, const LogitVec& z, double beta_cp) {
  if (k >= z.size()) throw std::invalid_argument("cp_grad_wrt_logits: target out of range");
  const auto lp = log_softmax(z);
  const ProbVec p = prob_from_log(lp);
  const double h = entropy(p);
  std::vector<double> g(z.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    g[j] = p[j] - (j == k ? 1.0 : 0.0) + beta_cp * p[j] * (lp[j] + h);
  }
  return g;
}

/// (1 - alpha) CE(onehot(k), p) + alpha KL(teacher || p), temperature 1.
inline double kd_loss(std::size_t k, const LogitVec& z, const ProbVec& teacher_p, double alpha) {
  detail::check_alpha(alpha, "kd_loss");
  if (teacher_p.size() != z.size()) throw std::invalid_argument("kd_loss: dimension mismatch");
  if (k >= z.size()) throw std::invalid_argument("kd_loss: target out of range");
  if (!teacher_p.strictly_positive()) {
    throw std::domain_error("kd_loss: teacher distribution must be strictly positive");
  }
  const auto lp = log_softmax(z);
  double kl = 0.0;
  for (std::size_t j = 0; j < lp.size(); ++j) kl += teacher_p[j] * (std::log(teacher_p[j]) - lp[j]);
  return (1.0 - alpha) * -lp[k] + alpha * kl;
}

/// |kd_loss - (CE against the teacher-mixed label + alpha KL(teacher || U) - alpha log K)|
inline double kd_decomposition_residual(std::size_t k, const LogitVec& z, const ProbVec& teacher_p,
                                        double alpha) {
  const double direct = kd_loss(k, z, teacher_p, alpha);
  const double log_k = std::log(static_cast<double>(z.size()));
  const double kl_u = kl_div(teacher_p, ProbVec::uniform(z.size()));
  const double rewritten =
      smoothed_ce(mix_label(k, teacher_p, alpha), z) + alpha * kl_u - alpha * log_k;
  return std::abs(direct - rewritten);
}

/// softmax(z) - label.dist: gradient of smoothed_ce with the label held fixed.
/// With the closed-form smoothing this is also the full gradient of the
/// regularized objective, since the smoothing distribution's own gradient
/// contribution vanishes at the inner optimum.
inline std::vector<double> grad_wrt_logits(const SmoothedLabel& label, const LogitVec& z) {
  if (label.dist.size() != z.size()) {
    throw std::invalid_argument("grad_wrt_logits: dimension mismatch");
  }
  const ProbVec p = softmax(z);
  std::vector<double> g(z.size());
  for (std::size_t j = 0; j < g.size(); ++j) g[j] = p[j] - label.dist[j];
  return g;
}

}  // namespace labo
