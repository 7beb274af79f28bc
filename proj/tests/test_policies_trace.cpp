#include "qns/errors.hpp"
#include "qns/policies.hpp"
#include "qns/qn_algorithm.hpp"
#include "qns/trace.hpp"
#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qns;
using nlohmann::json;
using qns::testing::generated;

TEST(StepPolicy, UniformExcludesSmallMagnitudes) {
  StepSampler s(StepPolicy::uniform(-1.0, 1.0), 3);
  const Vector g = Vector::Ones(2);
  StepContext ctx{0, &g, &g, [] { return 1.0; }};
  for (int i = 0; i < 5000; ++i) {
    ctx.k = i;
    const double a = s.next(ctx);
    EXPECT_GE(std::abs(a), 0.05);
    EXPECT_LE(std::abs(a), 1.0);
  }
}

TEST(StepPolicy, ValidateRejectsZeroSteps) {
  EXPECT_THROW(StepPolicy::constant(0.0).validate(), InvalidSpec);
  EXPECT_THROW(StepPolicy::schedule({1.0, 0.0}).validate(), InvalidSpec);
  EXPECT_THROW(StepPolicy::uniform(-0.01, 0.01).validate(), InvalidSpec);
  EXPECT_NO_THROW(StepPolicy::uniform(0.1, 2.0).validate());
}

TEST(StepPolicy, ScheduleThenUnit) {
  StepSampler s(StepPolicy::schedule({0.5, 2.0}), 0);
  StepContext ctx;
  const double expect[] = {0.5, 2.0, 1.0, 1.0};
  for (int k = 0; k < 4; ++k) {
    ctx.k = k;
    EXPECT_EQ(s.next(ctx), expect[k]);
  }
}

TEST(StepPolicy, UnitAfter) {
  auto before = std::make_shared<const StepPolicy>(StepPolicy::constant(0.7));
  StepSampler s(StepPolicy::unit_after(2, before), 0);
  StepContext ctx;
  for (int k = 0; k < 4; ++k) {
    ctx.k = k;
    EXPECT_EQ(s.next(ctx), k < 2 ? 0.7 : 1.0);
  }
}

TEST(SigmaPolicy, AlwaysPositive) {
  EXPECT_THROW(SigmaPolicy::constant(0.0).validate(), InvalidSpec);
  EXPECT_THROW(SigmaPolicy::uniform(-1.0, 2.0).validate(), InvalidSpec);
  SigmaSampler s(SigmaPolicy::uniform(0.5, 2.0), 11);
  SigmaContext ctx;
  for (int i = 0; i < 1000; ++i) {
    const double v = s.next(ctx);
    EXPECT_GE(v, 0.5);
    EXPECT_LT(v, 2.0);
  }
}

TEST(Policies, JsonRoundTrip) {
  const StepPolicy steps[] = {StepPolicy::unit(), StepPolicy::constant(0.3), StepPolicy::uniform(0.1, 2.0),
                              StepPolicy::exact_line_search(), StepPolicy::schedule({0.5, 2.0})};
  for (const auto& p : steps) {
    const json j = to_json(p);
    EXPECT_EQ(to_json(step_policy_from_json(j)), j);
  }
  const SigmaPolicy sigmas[] = {SigmaPolicy::constant(1.5), SigmaPolicy::uniform(0.5, 2.0),
                                SigmaPolicy::newton_at(3, 1.0, 1.1)};
  for (const auto& p : sigmas) {
    const json j = to_json(p);
    EXPECT_EQ(to_json(sigma_policy_from_json(j)), j);
  }
  EXPECT_EQ(sigma_policy_from_json(json(2.0)).value, 2.0);
}

TEST(Policies, UnknownKindNamesLocation) {
  try {
    step_policy_from_json(json::parse(R"({"kind": "wobbly"})"), "/methods/0/step");
    FAIL();
  } catch (const InvalidSpec& e) {
    EXPECT_NE(std::string(e.what()).find("/methods/0/step"), std::string::npos) << e.what();
  }
}

TEST(Trace, JsonRoundTripPreservesEveryField) {
  const auto gp = generated(7, 100.0, 4, 3, true);
  RunOptions o;
  o.steps = StepPolicy::uniform(0.1, 2.0);
  o.sigmas = SigmaPolicy::uniform(0.5, 2.0);
  o.mode = Mode::matrix_free;
  o.seed = 9;
  const auto t = run(gp.problem, gp.x0, o);
  const auto back = trace_from_json(json::parse(trace_to_json(t).dump()));
  ASSERT_EQ(back.iterations.size(), t.iterations.size());
  for (std::size_t k = 0; k < t.iterations.size(); ++k) {
    const auto& a = t.iterations[k];
    const auto& b = back.iterations[k];
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.g, b.g);
    EXPECT_EQ(a.p, b.p);
    EXPECT_EQ(a.q, b.q);
    EXPECT_EQ(a.pN, b.pN);
    EXPECT_EQ(a.Hq, b.Hq);
    EXPECT_EQ(a.alpha, b.alpha);
    EXPECT_TRUE(a.sigma == b.sigma || (std::isnan(a.sigma) && std::isnan(b.sigma)));
    EXPECT_EQ(a.branch, b.branch);
  }
  EXPECT_EQ(back.final_x, t.final_x);
  EXPECT_EQ(back.status.kind, t.status.kind);
  EXPECT_EQ(back.config, t.config);
  // The recorded config reruns to the same trace.
  const auto rerun = run(gp.problem, gp.x0, run_options_from_json(back.config));
  EXPECT_EQ(trace_to_json(rerun), trace_to_json(t));
}

TEST(Trace, SchemaMismatchThrows) {
  EXPECT_THROW(trace_from_json(json::parse(R"({"method": "cg"})")), InvalidSpec);
  EXPECT_THROW(trace_from_json(json::array()), InvalidSpec);
}

TEST(Rng, SeedDeterminesStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.uniform(), b.uniform());
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 1));
}
