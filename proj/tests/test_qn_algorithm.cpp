#include "qns/conjugate_reference.hpp"
#include "qns/errors.hpp"
#include "qns/qn_algorithm.hpp"
#include "qns/verification.hpp"
#include "support/fixtures.hpp"
#include "support/rational_trace.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace qns;
using qns::testing::generated;
using qns::testing::Rat;
using qns::testing::running_example;
using qns::testing::vec;

namespace {

namespace rt = qns::testing;

rt::RationalTrace exact_running(const std::function<Rat(int)>& alpha, const std::function<Rat(int)>& sigma) {
  return rt::run_rational(rt::example_hessian(), rt::example_linear(), {Rat(0), Rat(0)}, alpha, sigma, 10);
}

void expect_matches(const IterateTrace& t, const rt::RationalTrace& exact, double tol) {
  ASSERT_TRUE(exact.converged);
  ASSERT_TRUE(t.converged());
  ASSERT_EQ(static_cast<int>(t.iterations.size()), exact.steps);
  for (int k = 0; k <= exact.steps; ++k) {
    EXPECT_LE((t.iterate(k) - rt::to_eigen(exact.x[k])).norm(), tol) << "x_" << k;
  }
  for (int k = 0; k < exact.steps; ++k) {
    EXPECT_LE((t.iterations[k].p - rt::to_eigen(exact.p[k])).norm(), tol) << "p_" << k;
  }
}

RunOptions options(StepPolicy steps, SigmaPolicy sigmas, Mode mode = Mode::oracle) {
  RunOptions o;
  o.steps = std::move(steps);
  o.sigmas = std::move(sigmas);
  o.mode = mode;
  return o;
}

}  // namespace

TEST(RationalOracle, RunningExampleUnitSteps) {
  const auto exact = exact_running([](int) { return Rat(1); }, [](int) { return Rat(1); });
  ASSERT_EQ(exact.steps, 3);
  EXPECT_EQ(exact.x[1], rt::rvec({Rat(1), Rat(1)}));
  EXPECT_EQ(exact.x[2], rt::rvec({Rat(10, 9), Rat(4, 9)}));
  EXPECT_EQ(exact.x[3], rt::rvec({Rat(1), Rat(1, 2)}));
  EXPECT_EQ(exact.q[1], rt::rvec({Rat(4, 9), Rat(-2, 9)}));
}

TEST(RationalOracle, RunningExampleNewtonSigma) {
  const auto exact = exact_running([](int) { return Rat(1); }, [](int k) { return k == 0 ? Rat(4, 3) : Rat(1); });
  ASSERT_EQ(exact.steps, 2);
  EXPECT_EQ(exact.x[2], rt::rvec({Rat(1), Rat(1, 2)}));
}

TEST(Run, RunningExampleUnitStepsMatchesExactTrace) {
  const auto t = run(running_example(), Vector::Zero(2), options(StepPolicy::unit(), SigmaPolicy::constant(1.0)));
  expect_matches(t, exact_running([](int) { return Rat(1); }, [](int) { return Rat(1); }), 1e-12);
  EXPECT_EQ(t.status.iterations, 3);
}

TEST(Run, RunningExampleNewtonSigmaTerminatesInR) {
  const auto t = run(running_example(), Vector::Zero(2), options(StepPolicy::unit(), SigmaPolicy::newton_at(0)));
  expect_matches(t, exact_running([](int) { return Rat(1); }, [](int k) { return k == 0 ? Rat(4, 3) : Rat(1); }),
                 1e-12);
  ASSERT_EQ(t.iterations.size(), 2u);
  EXPECT_NEAR(t.iterations[0].sigma, 4.0 / 3.0, 1e-12);
  EXPECT_LE((t.iterate(2) - vec({1.0, 0.5})).norm(), 1e-12);
}

TEST(Run, ZeroGradientRecordsNoIterations) {
  QuadraticProblem prob(Matrix::Identity(2, 2) * 3.0, Vector::Zero(2));
  const auto t = run(prob, Vector::Zero(2), RunOptions{});
  EXPECT_TRUE(t.converged());
  EXPECT_TRUE(t.iterations.empty());
  EXPECT_EQ(t.status.iterations, 0);
}

TEST(Run, ScheduleTerminatesAtFirstUnitStepPastR) {
  const auto t =
      run(running_example(), Vector::Zero(2), options(StepPolicy::schedule({0.5, 2.0, 1.0}), SigmaPolicy::constant(1.0)));
  const Rat alphas[] = {Rat(1, 2), Rat(2), Rat(1)};
  const auto exact = exact_running([&](int k) { return k < 3 ? alphas[k] : Rat(1); }, [](int) { return Rat(1); });
  expect_matches(t, exact, 1e-12);
  EXPECT_EQ(t.iterations.size(), 3u);
  const Report rep = check_theorem1(t, running_example(), Vector::Zero(2));
  EXPECT_TRUE(rep.passed()) << rep.to_text();
}

TEST(Run, ZeroStepPolicyIsRejected) {
  RunOptions o = options(StepPolicy::constant(0.0), SigmaPolicy::constant(1.0));
  EXPECT_THROW(run(running_example(), Vector::Zero(2), o), InvalidSpec);
  o = options(StepPolicy::unit(), SigmaPolicy::constant(-1.0));
  EXPECT_THROW(run(running_example(), Vector::Zero(2), o), InvalidSpec);
}

TEST(LearnHAction, FirstIterationDifference) {
  const Vector g0 = vec({-1.0, -1.0});
  const Vector g1 = vec({0.0, 1.0});
  const Vector q = vec({1.0, 1.0});
  const auto l = learn_h_action(g1, g0, 1.0, q, Vector::Zero(2));
  EXPECT_EQ(l.Hp, vec({1.0, 2.0}));
  EXPECT_EQ(l.Hq, l.Hp);
  EXPECT_EQ(l.Hp, running_example().apply(q));
  EXPECT_NEAR(l.q_curvature, 3.0, 1e-15);
  // pN_0 = -(g0'q / q'Hq + 1) q = -(1/3) q.
  EXPECT_NEAR(l.keep, 0.0, 0.0);
  EXPECT_NEAR(l.along_q, -1.0 / 3.0, 1e-15);
  EXPECT_LE((l.HpN_next - running_example().apply(-q / 3.0)).norm(), 1e-15);
}

TEST(LearnHAction, ZeroAlphaThrows) {
  EXPECT_THROW(learn_h_action(vec({1.0}), vec({0.0}), 0.0, vec({1.0}), vec({0.0})), InvalidSpec);
}

TEST(LearnHAction, MatrixFreeAuditAgainstOracle) {
  const auto gp = generated(20, 1e3, 10, 61, true);
  RunOptions o = options(StepPolicy::uniform(0.1, 2.0), SigmaPolicy::uniform(0.5, 2.0), Mode::matrix_free);
  o.seed = 5;
  const auto t = run(gp.problem, gp.x0, o);
  ASSERT_GE(t.iterations.size(), 10u);
  for (std::size_t k = 0; k < 10; ++k) {
    const auto& rec = t.iterations[k];
    const Vector exact = gp.problem.apply(rec.q);
    EXPECT_LE((rec.Hq - exact).norm(), 1e-7 * exact.norm()) << "k=" << k;
    const Vector hpn = gp.problem.apply(rec.pN);
    EXPECT_LE((rec.HpN - hpn).norm(), 1e-7 * std::max(hpn.norm(), 1e-300)) << "k=" << k;
  }
}

TEST(CheckTheorem1, UnitStepRunningExample) {
  const auto t = run(running_example(), Vector::Zero(2), options(StepPolicy::unit(), SigmaPolicy::constant(1.0)));
  const Report rep = check_theorem1(t, running_example(), Vector::Zero(2));
  EXPECT_TRUE(rep.passed()) << rep.to_text();
  EXPECT_EQ(rep.iterations, 3);
}

TEST(CheckTheorem1, NonUnitStepsNeverTerminate) {
  const auto gp = generated(10, 100.0, 4, 71, true);
  RunOptions o = options(StepPolicy::constant(0.9), SigmaPolicy::constant(1.0));
  o.max_iter = 12;
  const auto t = run(gp.problem, gp.x0, o);
  EXPECT_EQ(t.status.kind, TraceStatus::Kind::max_iter);
  const Report rep = check_theorem1(t, gp.problem, gp.x0);
  EXPECT_TRUE(rep.passed()) << rep.to_text();
  const Finding* f = rep.find("termination-rule");
  ASSERT_NE(f, nullptr);
  EXPECT_EQ(f->detail, "no unit step taken at k >= r");
}

TEST(CheckTheorem1, ExactLineSearchRecoversBfgs) {
  const auto gp = generated(12, 1e3, 7, 73, true);
  const auto t = run(gp.problem, gp.x0, options(StepPolicy::exact_line_search(), SigmaPolicy::constant(1.0)));
  ASSERT_TRUE(t.converged());
  EXPECT_EQ(t.iterations.size(), 7u);
  EXPECT_TRUE(check_theorem1(t, gp.problem, gp.x0).passed());
  const auto bfgs = qn_exact_ls_solve(gp.problem, gp.x0, QuasiNewtonVariant::bfgs, 1e-9);
  ASSERT_EQ(bfgs.iterations.size(), 7u);
  const double xs = 1.0 + exact_solution(gp.problem).norm();
  for (std::size_t k = 0; k <= 7; ++k) EXPECT_LE((t.iterate(k) - bfgs.iterate(k)).norm(), 1e-8 * xs) << "k=" << k;
}

TEST(CheckCorollary, NewtonAtPolicyGivesR) {
  const auto t = run(running_example(), Vector::Zero(2), options(StepPolicy::unit(), SigmaPolicy::newton_at(0)));
  const Report rep = check_corollary_unit(t, running_example(), Vector::Zero(2));
  EXPECT_TRUE(rep.passed()) << rep.to_text();
  EXPECT_EQ(rep.iterations, 2);
}

TEST(CheckCorollary, IdentityHessianOneStep) {
  QuadraticProblem prob(Matrix::Identity(3, 3), vec({1.0, -1.0, 2.0}));
  const auto t = run(prob, Vector::Zero(3), options(StepPolicy::unit(), SigmaPolicy::constant(1.0)));
  EXPECT_EQ(t.iterations.size(), 1u);
  const Report rep = check_corollary_unit(t, prob, Vector::Zero(3));
  EXPECT_TRUE(rep.passed()) << rep.to_text();
}

TEST(CheckCorollary, NonUnitTraceIsNotApplicable) {
  const auto t =
      run(running_example(), Vector::Zero(2), options(StepPolicy::schedule({0.5, 2.0, 1.0}), SigmaPolicy::constant(1.0)));
  EXPECT_EQ(check_corollary_unit(t, running_example(), Vector::Zero(2)).verdict(), Verdict::not_applicable);
}

// Generic sigma with unit steps: r + 1 steps, one column per build.
class CorollarySweep : public ::testing::TestWithParam<int> {};

TEST_P(CorollarySweep, GenericSigmaNeedsRPlusOne) {
  const int seed = GetParam();
  const int r = 1 + seed % 8;
  // B_0 = I is exact on an eigenvalue of 1, so the spectrum starts at 2.
  ProblemSpec spec;
  spec.n = std::min(r + seed % 9, 16);
  spec.eigenvalues.emplace();
  for (Eigen::Index i = 0; i < spec.n; ++i) spec.eigenvalues->push_back(2.0 + 998.0 * static_cast<double>(i) / 16.0);
  spec.grade = r;
  spec.seed = 900 + seed;
  spec.random_start = seed % 2;
  const auto gp = generate_problem(spec);
  const auto t = run(gp.problem, gp.x0, options(StepPolicy::unit(), SigmaPolicy::constant(1.0)));
  const Report rep = check_corollary_unit(t, gp.problem, gp.x0);
  EXPECT_TRUE(rep.passed()) << rep.to_text();
  EXPECT_EQ(static_cast<int>(t.iterations.size()), r + 1);
  for (const auto& rec : t.iterations) EXPECT_NE(rec.branch, Branch::two_column);
}

INSTANTIATE_TEST_SUITE_P(Sweep, CorollarySweep, ::testing::Range(0, 24));

// Random alpha and sigma: every check_theorem1 finding, step equivalence, and
// agreement between the two H modes.
class TheoremSweep : public ::testing::TestWithParam<int> {};

TEST_P(TheoremSweep, RandomPoliciesSatisfyTheorem) {
  const int seed = GetParam();
  const int r = 1 + seed % 12;
  const auto gp = generated(r + seed % 11, 1e3, r, 1200 + seed, seed % 2);
  RunOptions o = options(StepPolicy::uniform(0.1, 2.0), SigmaPolicy::uniform(0.5, 2.0));
  o.seed = 7 + seed;
  const auto t = run(gp.problem, gp.x0, o);
  const Report th = check_theorem1(t, gp.problem, gp.x0);
  EXPECT_TRUE(th.passed()) << th.to_text();
  const Report eq = check_step_equivalence(t, gp.problem, gp.x0);
  EXPECT_TRUE(eq.passed()) << eq.to_text();

  o.mode = Mode::matrix_free;
  const auto mf = run(gp.problem, gp.x0, o);
  const auto cmp = compare_traces(t, mf);
  EXPECT_TRUE(cmp.same_shape);
  EXPECT_LE(cmp.max_relative, 1e-6) << cmp.worst_field << " at " << cmp.worst_iteration;

  // Conjugacy of the learned directions.
  ConjugateBasis learned;
  for (int k = 0; k < std::min<int>(r, static_cast<int>(t.iterations.size())); ++k) {
    learned.push(t.iterations[k].q, gp.problem.apply(t.iterations[k].q));
  }
  EXPECT_LE(learned.max_conjugacy_defect(), 1e-8);
}

INSTANTIATE_TEST_SUITE_P(Sweep, TheoremSweep, ::testing::Range(0, 30));
