#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "labo/numerics.hpp"
#include "labo/oracle.hpp"
#include "labo/smoothing.hpp"

using namespace labo;

namespace {

// 40-digit reference values.
constexpr double kStar210Tau2[] = {0.50648039105565403, 0.3071958857184984, 0.18632372322584758};
constexpr double kStar721Tau2[] = {0.52287938300786971, 0.27949078654617094, 0.19762983044595936};
constexpr double kAdaptive721 = 0.63507665041895123;
constexpr double kAdaptive210 = 0.62116044466920885;
constexpr double kLaboLabel210[] = {0.69344514025515599, 0.19081793297345393, 0.11573692677139008};

void expect_vec_near(const ProbVec& p, std::initializer_list<double> want, double tol) {
  ASSERT_EQ(p.size(), want.size());
  std::size_t j = 0;
  for (double w : want) EXPECT_NEAR(p[j++], w, tol) << "entry " << j - 1;
}

}  // namespace

TEST(UniformSmooth, Examples) {
  expect_vec_near(uniform_smooth(0, 4, 0.0).dist, {1, 0, 0, 0}, 0.0);
  expect_vec_near(uniform_smooth(0, 4, 1.0).dist, {0.25, 0.25, 0.25, 0.25}, 1e-16);
  const auto l = uniform_smooth(2, 10, 0.1);
  for (std::size_t j = 0; j < 10; ++j) EXPECT_NEAR(l.dist[j], j == 2 ? 0.91 : 0.01, 1e-15);
  EXPECT_EQ(l.alpha_used, 0.1);
  EXPECT_THROW(uniform_smooth(0, 4, 1.5), std::invalid_argument);
  EXPECT_THROW(uniform_smooth(4, 4, 0.1), std::invalid_argument);
}

TEST(MixLabel, Examples) {
  const ProbVec pls({0.5, 0.3, 0.2});
  expect_vec_near(mix_label(0, pls, 0.4).dist, {0.80, 0.12, 0.08}, 1e-15);
  expect_vec_near(mix_label(1, pls, 0.0).dist, {0, 1, 0}, 0.0);
  const auto a = mix_label(3, ProbVec::uniform(5), 0.3).dist;
  const auto b = uniform_smooth(3, 5, 0.3).dist;
  EXPECT_LE(max_abs_diff(a.values(), b.values()), 1e-16);
}

TEST(LaboOptimalSmoothing, Examples) {
  const ProbVec p({0.7, 0.2, 0.1});
  EXPECT_LE(max_abs_diff(labo_optimal_smoothing(p, 1.0).values(), p.values()), 1e-15);
  EXPECT_LE(max_abs_diff(labo_optimal_smoothing(p, 1e6).values(), ProbVec::uniform(3).values()), 1e-5);
  const auto s = labo_optimal_smoothing(p, 2.0);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(s[j], kStar721Tau2[j], 1e-15);
  // sqrt(0.9) : sqrt(0.1) = 3 : 1
  expect_vec_near(labo_optimal_smoothing(ProbVec({0.9, 0.1}), 2.0), {0.75, 0.25}, 1e-15);
}

TEST(LaboOptimalSmoothing, AgreesWithSolverOnExample) {
  const InnerProblem prob(ProbVec({0.7, 0.2, 0.1}), 1.0, 2.0);
  const auto rep = solve_inner_numeric(prob);
  ASSERT_TRUE(rep.converged);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(rep.argmin[j], kStar721Tau2[j], 1e-6);
}

TEST(LaboOptimalSmoothing, Errors) {
  EXPECT_THROW(labo_optimal_smoothing(ProbVec({1.0, 0.0}), 2.0), std::domain_error);
  EXPECT_THROW(labo_optimal_smoothing(ProbVec::uniform(3), 0.0), std::invalid_argument);
}

TEST(LaboOptimalSmoothing, FlattensAndPreservesOrderProperty) {
  std::mt19937_64 rng(3);
  std::gamma_distribution<double> gam(1.0, 1.0);
  std::uniform_real_distribution<double> tau_d(1.05, 20.0);
  for (int t = 0; t < 300; ++t) {
    const std::size_t k = 2 + t % 12;
    std::vector<double> v(k);
    double s = 0.0;
    for (auto& x : v) s += (x = gam(rng) + 1e-6);
    for (auto& x : v) x /= s;
    const ProbVec p(v);
    const double tau = tau_d(rng);
    const auto star = labo_optimal_smoothing(p, tau);
    EXPECT_GE(entropy(star), entropy(p) - 1e-12);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        if (p[i] > p[j]) {
          EXPECT_GE(star[i], star[j]);
        }
      }
    }
  }
}

TEST(LaboFromLogits, MatchesClosedFormOfSoftmax) {
  const LogitVec z({2.0, 1.0, 0.0});
  const auto a = labo_from_logits(z, 2.0);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a[j], kStar210Tau2[j], 1e-15);
  const auto b = labo_optimal_smoothing(softmax(z), 2.0);
  EXPECT_LE(max_abs_diff(a.values(), b.values()), 1e-15);
  EXPECT_LE(max_abs_diff(labo_from_logits(z, 1.0).values(), softmax(z).values()), 1e-16);
}

TEST(AdaptiveAlpha, Examples) {
  EXPECT_NEAR(adaptive_alpha(ProbVec::uniform(5), 0.5), 0.5, 1e-15);
  EXPECT_NEAR(adaptive_alpha(ProbVec::one_hot(0, 3), 0.7), 1.0, 1e-15);
  EXPECT_NEAR(adaptive_alpha(ProbVec({0.7, 0.2, 0.1}), 0.5), kAdaptive721, 1e-15);
  EXPECT_THROW(adaptive_alpha(ProbVec::uniform(3), 0.4), std::invalid_argument);
}

TEST(AdaptiveAlpha, StaysInRangeProperty) {
  std::mt19937_64 rng(9);
  std::gamma_distribution<double> gam(0.3, 1.0);
  std::uniform_real_distribution<double> rho_d(0.5, 1.0);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> v(2 + t % 7);
    double s = 0.0;
    for (auto& x : v) s += (x = gam(rng) + 1e-12);
    for (auto& x : v) x /= s;
    const double rho = rho_d(rng);
    const double a = adaptive_alpha(ProbVec(v), rho);
    EXPECT_GE(a, 1.0 - rho - 1e-15);
    EXPECT_LE(a, 1.0);
  }
}

TEST(SmoothingConfig, Validation) {
  EXPECT_THROW(SmoothingConfig(SmoothingMode::labo, FixedAlpha{1.2}), std::invalid_argument);
  EXPECT_THROW(SmoothingConfig(SmoothingMode::labo, AdaptiveAlpha{0.3}), std::invalid_argument);
  EXPECT_THROW(SmoothingConfig(SmoothingMode::labo, FixedAlpha{0.1}, 0.0), std::invalid_argument);
  const SmoothingConfig c(SmoothingMode::labo, FixedAlpha{0.2}, 1.25);
  EXPECT_DOUBLE_EQ(c.beta_for(0.2), 0.25);
  EXPECT_EQ(SmoothingConfig().tau(), kDefaultTau);
}

TEST(BuildLabel, Modes) {
  const LogitVec z({2.0, 1.0, 0.0});
  const auto none = build_label(1, z, SmoothingConfig(SmoothingMode::none, FixedAlpha{0.3}));
  expect_vec_near(none.dist, {0, 1, 0}, 0.0);

  const auto zero = build_label(0, LogitVec({5.0, -3.0, 1.0}),
                                SmoothingConfig(SmoothingMode::labo, FixedAlpha{0.0}, 1.25));
  expect_vec_near(zero.dist, {1, 0, 0}, 0.0);

  std::vector<double> z10(10, 0.0);
  z10[4] = 3.0;
  const auto ls = build_label(2, LogitVec(z10), SmoothingConfig(SmoothingMode::uniform_ls, FixedAlpha{0.1}));
  for (std::size_t j = 0; j < 10; ++j) EXPECT_NEAR(ls.dist[j], j == 2 ? 0.91 : 0.01, 1e-15);

  const auto lab = build_label(0, z, SmoothingConfig(SmoothingMode::labo, AdaptiveAlpha{0.5}, 2.0));
  EXPECT_NEAR(lab.alpha_used, kAdaptive210, 1e-15);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(lab.dist[j], kLaboLabel210[j], 1e-15);
}

TEST(BuildLabel, KdNeedsTeacher) {
  const LogitVec z({0.0, 1.0});
  const SmoothingConfig kd(SmoothingMode::kd_teacher, FixedAlpha{0.5});
  EXPECT_THROW(build_label(0, z, kd), std::invalid_argument);
  const auto l = build_label(0, z, kd, ProbVec({0.2, 0.8}));
  expect_vec_near(l.dist, {0.6, 0.4}, 1e-15);
}
