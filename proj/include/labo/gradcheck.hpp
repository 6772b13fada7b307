#pragma once

// Central finite-difference checks of the hand-written gradients. The numerical
// side only evaluates losses; it never calls backward or any *_grad function.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "labo/model.hpp"
#include "labo/objectives.hpp"
#include "labo/smoothing.hpp"

namespace labo {

struct Example {
  std::vector<double> x;
  std::size_t target = 0;
};

inline std::vector<double> central_differences(const std::function<double(std::span<const double>)>& f,
                                               std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b||_2 / max(||a||_2, ||b||_2), 0 when both vanish.
inline double relative_l2_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

/// Worst entrywise |a - b| / max(|a|, |b|, floor). The floor keeps entries that are
/// zero up to finite-difference noise (about 1e-10 at h = 1e-5) from dominating.
inline double max_relative_error(std::span<const double> a, std::span<const double> b,
                                 double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

/// Smallest |pre-activation| over hidden ReLU units for the given inputs. Finite
/// differences are only meaningful when this is well above the step size.
inline double min_hidden_margin(const Mlp& model, std::span<const Example> batch) {
  double margin = std::numeric_limits<double>::infinity();
  ForwardCache cache;
  for (const auto& ex : batch) {
    model.forward(ex.x, cache);
    for (std::size_t l = 0; l + 1 < cache.pre.size(); ++l) {
      for (double v : cache.pre[l]) margin = std::min(margin, std::abs(v));
    }
  }
  return margin;
}

/// Mean smoothed CE over the batch with the given (fixed) labels.
inline double batch_smoothed_ce(const Mlp& model, std::span<const Example> batch,
                                std::span<const SmoothedLabel> labels) {
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    loss += smoothed_ce(labels[i], model.logits(batch[i].x));
  }
  return loss / static_cast<double>(batch.size());
}

/// Mean regularized objective with the smoothing distribution recomputed from the
/// current logits: CE against mix(k, softmax(z / tau), alpha) + alpha tau KL(. || U).
inline double batch_labo_objective(const Mlp& model, std::span<const Example> batch, double alpha,
                                   double tau) {
  double loss = 0.0;
  for (const auto& ex : batch) {
    const LogitVec z = model.logits(ex.x);
    loss += unified_objective(ex.target, z, labo_from_logits(z, tau), alpha, alpha * tau).total;
  }
  return loss / static_cast<double>(batch.size());
}

/// Finite-difference gradient of `loss(model)` with respect to every parameter (flat order).
inline std::vector<double> numerical_param_gradient(const Mlp& model,
                                                    const std::function<double(const Mlp&)>& loss,
                                                    double h = 1e-5) {
  Mlp probe = model;
  auto f = [&](std::span<const double> flat) {
    probe.params().assign(flat);
    return loss(probe);
  };
  return central_differences(f, model.params().flatten(), h);
}

/// Backprop gradient of the batch-mean loss whose per-example logit gradient is `grad_fn`.
inline std::vector<double> analytic_param_gradient(
    const Mlp& model, std::span<const Example> batch,
    const std::function<std::vector<double>(std::size_t, const LogitVec&)>& grad_fn) {
  ParamBuffers acc = ParamBuffers::zeros_like(model.params().layers);
  ForwardCache cache;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const LogitVec z = model.forward(batch[i].x, cache);
    model.backward_into(cache, grad_fn(i, z), acc);
  }
  acc *= 1.0 / static_cast<double>(batch.size());
  return acc.flatten();
}

}  // namespace labo
