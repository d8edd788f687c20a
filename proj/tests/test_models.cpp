#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "slrvb/approx.hpp"
#include "slrvb/models/conjugate.hpp"
#include "slrvb/models/sv.hpp"
#include "slrvb/zoo.hpp"
#include "test_util.hpp"

using namespace slrvb;
using slrvb::test::vec;

namespace {

double variance_of(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / double(v.size() - 1);
}

std::vector<double> series(int T, std::uint64_t seed) {
  Rng rng(seed);
  SvParams p;
  p.T = T;
  return simulate_sv(p, rng).y;
}

/// A point inside every support, with v drawn around the data level.
Assignment random_point(const Model& m, Rng& rng) {
  Assignment x = m.default_start;
  for (auto& b : x)
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] += 0.02 * rng.normal();
  return x;
}

}  // namespace

TEST(SimulateSv, DegenerateVolatility) {
  SvParams p;
  p.sigma2 = 0.0;
  p.phi = 0.0;
  p.T = 10000;
  Rng rng(3);
  const SvSeries s = simulate_sv(p, rng);
  for (double v : s.v) EXPECT_DOUBLE_EQ(v, p.mu);
  EXPECT_NEAR(variance_of(s.y) / std::exp(p.mu), 1.0, 0.05);
}

TEST(SimulateSv, StationaryVariance) {
  SvParams p;
  p.T = 1000000;
  Rng rng(17);
  const SvSeries s = simulate_sv(p, rng);
  EXPECT_NEAR(variance_of(s.v) / (p.sigma2 / (1.0 - p.phi * p.phi)), 1.0, 0.05);
}

TEST(SimulateSv, SameSeedSameSeries) {
  EXPECT_EQ(series(200, 1), series(200, 1));
  EXPECT_NE(series(200, 1), series(200, 2));
}

TEST(SimulateSv, RejectsBadParameters) {
  SvParams p;
  p.phi = 1.2;
  Rng rng(1);
  EXPECT_THROW(simulate_sv(p, rng), std::invalid_argument);
}

TEST(SvModel, SpecsAAndBAgreeUnderShift) {
  const auto y = series(50, 2);
  const Model a = make_sv_model(SvVariant::A, y);
  const Model b = make_sv_model(SvVariant::B, y);
  Rng rng(6);
  std::optional<double> offset;
  for (int k = 0; k < 100; ++k) {
    const Assignment xa = random_point(a, rng);
    Assignment xb = xa;
    xb[3] = (xa[3].array() - xa[0][0]).matrix();
    const double d = a.log_joint(xa) - b.log_joint(xb);
    if (!offset) offset = d;
    EXPECT_NEAR(d, *offset, 1e-8);
  }
}

TEST(SvModel, SpecAPriorPrecisionIsAr1Tridiagonal) {
  const int T = 6;
  const double phi = 0.7, s2 = 0.3;
  const Model a = make_sv_model(SvVariant::A, series(T, 1));
  const ApproximationGraph g = build_approximation(a.spec);
  const Block& v = g.block(3);
  const Assignment x{vec({0.0}), vec({phi}), vec({s2}), VectorXd()};
  const VectorXd eta = v.prior_link(x);
  const auto& pattern = v.family.pattern();
  for (int t = 0; t < T; ++t) {
    const double diag = (t == 0 || t == T - 1) ? 1.0 : 1.0 + phi * phi;
    EXPECT_NEAR(-2.0 * eta[T + *pattern.find(t, t)], diag / s2, 1e-12);
    if (t + 1 < T) {
      EXPECT_NEAR(-eta[T + *pattern.find(t, t + 1)], -phi / s2, 1e-12);
    }
  }
}

TEST(SvModel, SpecCJointBlockHasDimensionTPlusOne) {
  const int T = 30;
  const Model c = make_sv_model(SvVariant::C, series(T, 1));
  const ApproximationGraph g = build_approximation(c.spec);
  const Block& mv = g.block(2);
  EXPECT_EQ(mv.family.kind(), FamilyKind::gaussian_mv);
  EXPECT_EQ(mv.family.point_dim(), T + 1);
  EXPECT_EQ(mv.element_names.front(), "mu");
  EXPECT_TRUE(mv.family.pattern() == *SparsityPattern::bordered_tridiagonal(T + 1));
}

TEST(SvModel, DerivativesMatchFiniteDifferences) {
  const auto y = series(25, 9);
  for (SvVariant var : {SvVariant::A, SvVariant::B, SvVariant::C}) {
    const Model m = make_sv_model(var, y);
    Rng rng(31);
    for (int k = 0; k < 5; ++k) {
      const Assignment x = random_point(m, rng);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const auto g = m.gradient(x, i);
        if (!g) continue;
        auto f = [&](const VectorXd& xi) {
          Assignment z = x;
          z[i] = xi;
          return m.log_joint(z);
        };
        const VectorXd fd = test::fd_gradient(f, x[i], 1e-6);
        EXPECT_LE((fd - *g).norm(), 1e-4 * std::max(1.0, g->norm())) << to_string(var) << " block " << i;
        const auto h = m.hessian(x, i);
        ASSERT_TRUE(h.has_value());
        auto gi = [&](const VectorXd& xi) {
          Assignment z = x;
          z[i] = xi;
          return *m.gradient(z, i);
        };
        const MatrixXd fdh = test::fd_jacobian(gi, x[i], 1e-6);
        const MatrixXd H(*h);
        EXPECT_LE((fdh - H).norm(), 1e-4 * std::max(1.0, H.norm())) << to_string(var) << " block " << i;
      }
    }
  }
}

TEST(SvModel, OutsideParameterSpaceIsMinusInfinity) {
  const Model a = make_sv_model(SvVariant::A, series(10, 1));
  Assignment x = a.default_start;
  x[1] = vec({1.5});
  EXPECT_EQ(a.log_joint(x), -std::numeric_limits<double>::infinity());
}

TEST(ConjugateModel, ReferencePosterior) {
  const VectorXd eta = exact_posterior_conjugate(test::reference_conjugate());
  EXPECT_NEAR(eta[0], 4.0, 1e-12);
  EXPECT_NEAR(eta[1], -2.5, 1e-12);
  const auto [mean, var] = test::gaussian_moments_of(eta);
  EXPECT_NEAR(mean, 0.8, 1e-12);
  EXPECT_NEAR(var, 0.2, 1e-12);
}

TEST(ConjugateModel, NoDataGivesPrior) {
  const VectorXd eta = exact_posterior_conjugate(make_conjugate_normal(1.5, 2.0, 1.0, {}));
  EXPECT_TRUE(eta.isApprox(vec({0.75, -0.25})));
}

TEST(ConjugateModel, DiffusePriorGivesSampleMean) {
  const VectorXd eta = exact_posterior_conjugate(make_conjugate_normal(0.0, 1e6, 1.0, {1.0, 2.0, 4.5}));
  EXPECT_NEAR(test::gaussian_moments_of(eta).first, 2.5, 1e-5);
}

TEST(ConjugateModel, SymmetricDataCentres) {
  const VectorXd eta = exact_posterior_conjugate(make_conjugate_normal(0.0, 1.0, 2.0, {-3.0, 3.0, -0.5, 0.5}));
  EXPECT_NEAR(test::gaussian_moments_of(eta).first, 0.0, 1e-14);
}

TEST(ConjugateModel, NonConjugateRefused) {
  EXPECT_THROW(exact_posterior_conjugate(make_sv_model(SvVariant::A, series(10, 1))), UnsupportedEstimator);
}

TEST(ConjugateModel, DerivativesMatchFiniteDifferences) {
  const Model m = make_conjugate_normal(0.3, 2.0, 0.5, {0.1, 1.2, -0.4});
  for (double mu : {-1.0, 0.2, 3.0}) {
    const Assignment x{vec({mu})};
    const VectorXd fd = test::fd_gradient([&](const VectorXd& v) { return m.log_joint({v}); }, x[0]);
    EXPECT_NEAR(fd[0], (*m.gradient(x, 0))[0], 1e-6);
    EXPECT_NEAR((*m.hessian(x, 0)).coeff(0, 0), -1.0 / 2.0 - 3.0 / 0.5, 1e-12);
  }
}

TEST(Zoo, NamesAndDispatch) {
  EXPECT_EQ(zoo_names().size(), 4u);
  EXPECT_EQ(make_zoo_model({"sv-b", {}}, series(10, 1)).name, "sv-b");
  EXPECT_EQ(make_zoo_model({"conjugate", {0.0, 1.0, 1.0}}, {1.0}).name, "conjugate");
  EXPECT_THROW(make_zoo_model({"sv-d", {}}, {1.0, 2.0}), std::invalid_argument);
}
