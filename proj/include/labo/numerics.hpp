#pragma once

// Probability kernels shared by every other header. Everything runs in the
// log domain and exponentiates last.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace labo {

/// Unnormalized class scores. K >= 2, every entry finite.
class LogitVec {
 public:
  explicit LogitVec(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2) {
      throw std::invalid_argument("LogitVec: need at least 2 classes");
    }
    for (double v : values_) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("LogitVec: non-finite logit");
      }
    }
  }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t j) const { return values_[j]; }
  std::span<const double> values() const { return values_; }

 private:
  std::vector<double> values_;
};

/// A point on the probability simplex. Entries >= 0, |sum - 1| <= 1e-9, K >= 2.
class ProbVec {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit ProbVec(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2) {
      throw std::invalid_argument("ProbVec: need at least 2 classes");
    }
    double sum = 0.0;
    for (double v : values_) {
      if (!std::isfinite(v) || v < 0.0) {
        throw std::invalid_argument("ProbVec: entries must be finite and non-negative");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
      throw std::invalid_argument("ProbVec: entries sum to " + std::to_string(sum));
    }
  }

  static ProbVec uniform(std::size_t k) {
    if (k < 2) throw std::invalid_argument("ProbVec::uniform: need at least 2 classes");
    return ProbVec(std::vector<double>(k, 1.0 / static_cast<double>(k)));
  }

  static ProbVec one_hot(std::size_t index, std::size_t k) {
    if (index >= k) throw std::invalid_argument("ProbVec::one_hot: index out of range");
    std::vector<double> v(k, 0.0);
    v[index] = 1.0;
    return ProbVec(std::move(v));
  }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t j) const { return values_[j]; }
  std::span<const double> values() const { return values_; }

  bool strictly_positive() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v > 0.0; });
  }

 private:
  std::vector<double> values_;
};

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("max_abs_diff: size mismatch");
  double d = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) d = std::max(d, std::abs(a[j] - b[j]));
  return d;
}

inline double log_sum_exp(std::span<const double> x) {
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

/// Normalizes arbitrary finite log-weights: returns x - logsumexp(x).
inline std::vector<double> log_normalize(std::span<const double> x) {
  const double lse = log_sum_exp(x);
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] - lse;
  return out;
}

/// exp of already-normalized log-probabilities, renormalized to absorb rounding.
inline ProbVec prob_from_log(std::span<const double> log_p) {
  std::vector<double> p(log_p.size());
  double s = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    p[j] = std::exp(log_p[j]);
    s += p[j];
  }
  for (double& v : p) v /= s;
  return ProbVec(std::move(p));
}

inline std::vector<double> log_softmax(const LogitVec& z) {
  return log_normalize(z.values());
}

inline ProbVec softmax(const LogitVec& z) {
  const auto lp = log_softmax(z);
  return prob_from_log(lp);
}

inline ProbVec tempered_softmax(const LogitVec& z, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument("tempered_softmax: tau must be positive and finite");
  }
  std::vector<double> scaled(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) scaled[j] = z[j] / tau;
  return prob_from_log(log_normalize(scaled));
}

/// Shannon entropy in nats, with 0 log 0 = 0.
inline double entropy(const ProbVec& p) {
  double h = 0.0;
  for (double v : p.values()) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::clamp(h, 0.0, std::log(static_cast<double>(p.size())));
}

/// KL(p || q) in nats. Throws std::domain_error when q_j = 0 < p_j.
inline double kl_div(const ProbVec& p, const ProbVec& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_div: dimension mismatch");
  double d = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] == 0.0) continue;
    if (q[j] == 0.0) {
      throw std::domain_error("kl_div: p is not absolutely continuous w.r.t. q at class " +
                              std::to_string(j));
    }
    d += p[j] * (std::log(p[j]) - std::log(q[j]));
  }
  return std::max(d, 0.0);
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::distance(v.begin(), std::max_element(v.begin(), v.end())));
}

}  // namespace labo
