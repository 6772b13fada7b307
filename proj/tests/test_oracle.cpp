#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "labo/oracle.hpp"
#include "labo/smoothing.hpp"
#include "labo/verify.hpp"

using namespace labo;

namespace {

ProbVec closed(const ProbVec& p, double tau) { return labo_optimal_smoothing(p, tau); }

}  // namespace

TEST(InnerProblem, Validation) {
  EXPECT_THROW(InnerProblem(ProbVec({1.0, 0.0}), 1.0, 1.0), std::domain_error);
  EXPECT_THROW(InnerProblem(ProbVec::uniform(3), 1.0, 0.0), std::invalid_argument);
}

TEST(Solver, TauOneGivesP) {
  const ProbVec p({0.6, 0.3, 0.1});
  const auto c = check_closed_form(InnerProblem(p, 1.0, 1.0), closed);
  EXPECT_LE(c.distance, 1e-9);
  EXPECT_LE(max_abs_diff(closed(p, 1.0).values(), p.values()), 1e-12);
}

TEST(Solver, BinaryExample) {
  const auto rep = solve_inner_numeric(InnerProblem(ProbVec({0.9, 0.1}), 0.5, 1.0));
  ASSERT_TRUE(rep.converged);
  EXPECT_NEAR(rep.argmin[0], 0.75, 1e-8);
  EXPECT_NEAR(rep.argmin[1], 0.25, 1e-8);
}

TEST(Solver, ReportInvariant) {
  const InnerProblem prob(ProbVec({0.5, 0.25, 0.15, 0.1}), 0.7, 1.3);
  const auto rep = solve_inner_numeric(prob);
  ASSERT_TRUE(rep.converged);
  EXPECT_GT(rep.min_entry, 0.0);
  EXPECT_LE(rep.projected_gradient, 1e-8);
  EXPECT_NEAR(prob.objective(rep.argmin.values()), rep.objective_at_argmin, 1e-15);
  EXPECT_LE(tangent_projection_norm(prob.gradient(rep.argmin.values())), 1e-6);
}

TEST(Solver, NonConvergenceIsReported) {
  const InnerProblem prob(ProbVec({0.9, 0.05, 0.05}), 1.0, 0.2);
  const auto rep = solve_inner_numeric(prob, 1e-10, 3);
  EXPECT_FALSE(rep.converged);
  EXPECT_EQ(rep.iterations, 3);
}

TEST(ClosedForm, RandomSweepAgainstSolver) {
  std::mt19937_64 rng(17);
  std::gamma_distribution<double> gam(1.0, 1.0);
  std::uniform_real_distribution<double> tau_d(1.05, 20.0), a_d(0.1, 1.0);
  const std::size_t ks[] = {2, 3, 10, 50};
  for (int i = 0; i < 100; ++i) {
    const std::size_t k = ks[i % 4];
    std::vector<double> v(k);
    double s = 0.0;
    for (auto& x : v) s += (x = gam(rng) + 1e-4);
    for (auto& x : v) x /= s;
    const double alpha = a_d(rng);
    const double tau = tau_d(rng);
    const auto c = check_closed_form(InnerProblem(ProbVec(v), alpha, alpha * tau), closed);
    EXPECT_LE(c.distance, 1e-6) << "k=" << k << " tau=" << tau;
    EXPECT_LE(c.objective_gap, 1e-9);
  }
}

TEST(ClosedForm, MutantExponentIsCaught) {
  const ProbVec p({0.7, 0.2, 0.1});
  const auto mutant = [](const ProbVec& q, double tau) { return labo_optimal_smoothing(q, 1.0 / tau); };
  const auto c = check_closed_form(InnerProblem(p, 1.0, 2.0), mutant);
  EXPECT_GT(c.distance, 1e-2);
  EXPECT_GT(c.objective_gap, 1e-3);
}

TEST(Hessian, Examples) {
  const auto u = hessian_check(ProbVec::uniform(4), 1.0);
  for (double d : u.numerical_diagonal) EXPECT_NEAR(d, 4.0, 1e-4);
  EXPECT_LE(u.max_off_diagonal, 1e-4);

  const auto h = hessian_check(ProbVec({0.5, 0.3, 0.2}), 2.0);
  EXPECT_NEAR(h.numerical_diagonal[0], 4.0, 1e-4);
  EXPECT_NEAR(h.numerical_diagonal[1], 2.0 / 0.3, 1e-4);
  EXPECT_NEAR(h.numerical_diagonal[2], 10.0, 1e-4);
  EXPECT_LE(h.diagonal_error, 1e-4);
  EXPECT_LE(h.max_off_diagonal, 1e-4);
  EXPECT_GT(h.min_diagonal, 0.0);
}

TEST(Hessian, LinearTermHasNoCurvature) {
  const ProbVec q({0.4, 0.35, 0.25});
  const auto a = hessian_check(q, 1.5, ProbVec({0.8, 0.1, 0.1}), 0.3);
  const auto b = hessian_check(q, 1.5);
  EXPECT_LE(std::abs(a.diagonal_error - b.diagonal_error), 1e-5);
  EXPECT_LE(a.diagonal_error, 1e-4);
}

TEST(VerifySuite, QuickPasses) {
  VerifyOptions opt;
  opt.quick = true;
  const auto r = run_verify_suite(opt);
  for (const auto& c : r) EXPECT_TRUE(c.passed) << c.name << " worst=" << c.worst;
}

TEST(VerifySuite, QuickFailsUnderExponentMutation) {
  VerifyOptions opt;
  opt.quick = true;
  opt.closed_form = [](const ProbVec& p, double tau) { return labo_optimal_smoothing(p, 1.0 / tau); };
  const auto r = run_verify_suite(opt);
  EXPECT_FALSE(all_passed(r));
  EXPECT_FALSE(r.front().passed);
}
