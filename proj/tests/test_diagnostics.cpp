#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "slrvb/diagnostics.hpp"
#include "slrvb/mcmc.hpp"
#include "slrvb/models/conjugate.hpp"
#include "slrvb/models/sv.hpp"
#include "test_util.hpp"

using namespace slrvb;
using slrvb::test::vec;

namespace {

VariationalState exact_state(const Model& m) {
  return {{VectorXd(exact_posterior_conjugate(m) - vec({0.0, -0.5}))}};
}

}  // namespace

TEST(RSquared, OneAtExactPosterior) {
  const Model m = test::reference_conjugate();
  const ApproximationGraph g = build_approximation(m.spec);
  Rng rng(1);
  const RSquared r = r_squared(m, g, exact_state(m), 1000, rng);
  EXPECT_NEAR(r.value, 1.0, 1e-10);
  EXPECT_EQ(r.n_samples, 1000);
  // log p - log q is the log evidence, a constant
  EXPECT_LE(r.residual_variance, 1e-20);
}

TEST(RSquared, PriorScoresLower) {
  const Model m = test::reference_conjugate();
  const ApproximationGraph g = build_approximation(m.spec);
  Rng r1(1), r2(1);
  EXPECT_LT(r_squared(m, g, init_state(g), 2000, r1).value, r_squared(m, g, exact_state(m), 2000, r2).value);
}

TEST(RSquared, InvariantToConstantShift) {
  Model m = test::reference_conjugate();
  const ApproximationGraph g = build_approximation(m.spec);
  const VariationalState s = init_state(g);
  Rng r1(5), r2(5);
  const double a = r_squared(m, g, s, 1000, r1).value;
  auto lj = m.log_joint;
  m.log_joint = [lj](const Assignment& x) { return lj(x) + 123.0; };
  EXPECT_NEAR(r_squared(m, g, s, 1000, r2).value, a, 1e-9);
}

TEST(RSquared, UndefinedForConstantLogJoint) {
  Model m = test::reference_conjugate();
  m.log_joint = [](const Assignment&) { return 0.0; };
  const ApproximationGraph g = build_approximation(m.spec);
  Rng rng(1);
  EXPECT_THROW(r_squared(m, g, init_state(g), 100, rng), UndefinedQuality);
  EXPECT_THROW(r_squared(m, g, init_state(g), 5, rng), std::invalid_argument);
}

TEST(NatgradNorm, ZeroAtOptimumPositiveAway) {
  const Model m = test::reference_conjugate();
  const ApproximationGraph g = build_approximation(m.spec);
  EXPECT_LE(natgrad_norm(m, g, exact_state(m), 7, 5), 1e-8);
  EXPECT_GT(natgrad_norm(m, g, init_state(g), 7, 5), 0.1);
}

TEST(Summaries, QuantilesOfKnownSample) {
  EXPECT_DOUBLE_EQ(quantile_sorted({1.0, 2.0, 3.0, 4.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile_sorted({1.0, 2.0, 3.0, 4.0}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile_sorted({1.0, 2.0, 3.0, 4.0}, 1.0), 4.0);
  EXPECT_THROW(quantile_sorted({}, 0.5), std::invalid_argument);
  const VariableSummary s = summarize("x", {3.0, 1.0, 2.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.sd, 1.0);
  EXPECT_DOUBLE_EQ(s.q50, 2.0);
}

TEST(Summaries, ExactConjugatePosterior) {
  const Model m = test::reference_conjugate();
  const ApproximationGraph g = build_approximation(m.spec);
  Rng rng(11);
  const auto s = posterior_summaries(g, exact_state(m), 100000, rng);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].name, "mu");
  const double sd = std::sqrt(0.2);
  EXPECT_NEAR(s[0].mean, 0.8, 4.0 * sd / std::sqrt(1e5));
  EXPECT_NEAR(s[0].sd, sd, 0.005);
  EXPECT_NEAR(s[0].q05, 0.8 - 1.6448536 * sd, 0.01);
  EXPECT_NEAR(s[0].q95, 0.8 + 1.6448536 * sd, 0.01);
  EXPECT_LT(s[0].q05, s[0].q50);
  EXPECT_LT(s[0].q50, s[0].q95);
}

TEST(Summaries, SvNamesFollowBlocks) {
  Rng data(2);
  SvParams p;
  p.T = 5;
  const Model m = make_sv_model(SvVariant::A, simulate_sv(p, data).y);
  const ApproximationGraph g = build_approximation(m.spec);
  Rng rng(1);
  const auto s = posterior_summaries(g, default_start(m, g), 50, rng);
  ASSERT_EQ(s.size(), 8u);
  EXPECT_EQ(s[0].name, "mu");
  EXPECT_EQ(s[1].name, "phi");
  EXPECT_EQ(s[2].name, "sigma2");
  for (const auto& v : s) EXPECT_LE(v.q05, v.q95);
  EXPECT_GT(s[1].q05, -1.0);
  EXPECT_LT(s[1].q95, 1.0);
  EXPECT_GT(s[2].q05, 0.0);
}

TEST(QualityReportTest, CombinesPieces) {
  const Model m = test::reference_conjugate();
  const ApproximationGraph g = build_approximation(m.spec);
  const QualityReport q = quality_report(m, g, exact_state(m), 3, 500, 5, {}, 1000);
  EXPECT_NEAR(q.r2.value, 1.0, 1e-10);
  EXPECT_LE(q.natgrad_norm, 1e-8);
  EXPECT_EQ(q.summaries.size(), 1u);
}
