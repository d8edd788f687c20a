#ifndef SLRVB_MODELS_SV_HPP
#define SLRVB_MODELS_SV_HPP

// Stochastic volatility model
//
//   y_t ~ N(0, exp(v_t)),  v_1 ~ N(mu, s2 / (1 - phi^2)),
//   v_{t+1} | v_t ~ N(phi v_t + (1 - phi) mu, s2),
//   p(mu) flat, (phi + 1)/2 ~ Beta(20, 1.5), s2 ~ Inv-Gamma(5, 0.25)
//
// in three specifications:
//   A  blocks mu, phi, s2, v | (mu, phi, s2)
//   B  v' = v - mu with y_t ~ N(0, exp(mu + v'_t)); v' | (phi, s2)
//   C  phi, s2 | phi with features (1, phi, phi^2), (mu, v) | (phi, s2) jointly
//      Gaussian with a diffuse N(0, 1e8) component on mu.

#include <cmath>
#include <limits>
#include <optional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "slrvb/approx.hpp"
#include "slrvb/model.hpp"
#include "slrvb/rng.hpp"

namespace slrvb {

struct SvParams {
  double mu = -1.0;
  double phi = 0.95;
  double sigma2 = 0.05;
  int T = 200;

  /// Simulation accepts sigma2 == 0 (constant volatility).
  void validate() const {
    if (!(std::abs(phi) < 1.0)) throw std::invalid_argument("sv: |phi| must be < 1");
    if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw std::invalid_argument("sv: sigma2 must be >= 0");
    if (T < 2) throw std::invalid_argument("sv: T must be >= 2");
    if (!std::isfinite(mu)) throw std::invalid_argument("sv: mu must be finite");
  }
};

struct SvSeries {
  std::vector<double> y;
  std::vector<double> v;
};

inline SvSeries simulate_sv(const SvParams& p, Rng& rng) {
  p.validate();
  SvSeries s;
  s.y.resize(static_cast<std::size_t>(p.T));
  s.v.resize(static_cast<std::size_t>(p.T));
  double v = p.mu + std::sqrt(p.sigma2 / (1.0 - p.phi * p.phi)) * rng.normal();
  for (int t = 0; t < p.T; ++t) {
    if (t > 0) v = p.phi * v + (1.0 - p.phi) * p.mu + std::sqrt(p.sigma2) * rng.normal();
    s.v[static_cast<std::size_t>(t)] = v;
    s.y[static_cast<std::size_t>(t)] = std::exp(0.5 * v) * rng.normal();
  }
  return s;
}

enum class SvVariant { A, B, C };

inline std::string to_string(SvVariant v) {
  switch (v) {
    case SvVariant::A: return "A";
    case SvVariant::B: return "B";
    case SvVariant::C: return "C";
  }
  return "?";
}

namespace sv_detail {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;
inline constexpr double kPhiA = 20.0;
inline constexpr double kPhiB = 1.5;
inline constexpr double kS2Shape = 5.0;
inline constexpr double kS2Scale = 0.25;
inline constexpr double kDiffusePrecision = 1e-8;

/// Diagonal and off-diagonal of the AR(1) precision times s2.
struct ArQ {
  VectorXd diag;
  double off;  // entry (t, t+1)
  VectorXd row_sums;  // Q 1
};

inline ArQ ar_q(double phi, int T) {
  ArQ q;
  q.diag.resize(T);
  for (int t = 0; t < T; ++t) q.diag[t] = (t == 0 ? 1.0 - phi * phi : 1.0) + (t + 1 < T ? phi * phi : 0.0);
  q.off = -phi;
  q.row_sums = q.diag;
  for (int t = 0; t < T; ++t) q.row_sums[t] += q.off * ((t > 0 ? 1.0 : 0.0) + (t + 1 < T ? 1.0 : 0.0));
  return q;
}

/// Q z for the tridiagonal AR(1) structure.
inline VectorXd q_times(const ArQ& q, const VectorXd& z) {
  const Eigen::Index T = z.size();
  VectorXd out = q.diag.cwiseProduct(z);
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    out[t] += q.off * z[t + 1];
    out[t + 1] += q.off * z[t];
  }
  return out;
}

inline double log_ar(const VectorXd& v, double mu, double phi, double s2) {
  const int T = static_cast<int>(v.size());
  const ArQ q = ar_q(phi, T);
  const VectorXd c = (v.array() - mu).matrix();
  return -0.5 * T * (kLog2Pi + std::log(s2)) + 0.5 * std::log1p(-phi * phi) - 0.5 * c.dot(q_times(q, c)) / s2;
}

inline double log_phi_prior(double phi) {
  const double u = 0.5 * (phi + 1.0);
  return (kPhiA - 1.0) * std::log(u) + (kPhiB - 1.0) * std::log1p(-u) -
         (std::lgamma(kPhiA) + std::lgamma(kPhiB) - std::lgamma(kPhiA + kPhiB)) - std::log(2.0);
}

inline double log_s2_prior(double s2) {
  return kS2Shape * std::log(kS2Scale) - std::lgamma(kS2Shape) - (kS2Shape + 1.0) * std::log(s2) - kS2Scale / s2;
}

/// sum_t log N(y_t | 0, exp(s_t))
inline double log_lik(const std::vector<double>& y, const VectorXd& s) {
  double lp = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const double st = s[static_cast<Eigen::Index>(t)];
    lp += -0.5 * (kLog2Pi + st) - 0.5 * y[t] * y[t] * std::exp(-st);
  }
  return lp;
}

inline VectorXd lik_grad(const std::vector<double>& y, const VectorXd& s) {
  VectorXd g(s.size());
  for (Eigen::Index t = 0; t < s.size(); ++t) {
    const double yt = y[static_cast<std::size_t>(t)];
    g[t] = -0.5 + 0.5 * yt * yt * std::exp(-s[t]);
  }
  return g;
}

inline VectorXd lik_hess_diag(const std::vector<double>& y, const VectorXd& s) {
  VectorXd h(s.size());
  for (Eigen::Index t = 0; t < s.size(); ++t) {
    const double yt = y[static_cast<std::size_t>(t)];
    h[t] = -0.5 * yt * yt * std::exp(-s[t]);
  }
  return h;
}

inline bool params_ok(double phi, double s2) { return std::abs(phi) < 1.0 && s2 > 0.0; }

/// Natural parameters of the AR(1) prior on a tridiagonal pattern.
inline VectorXd ar_naturals(double mu, double phi, double s2, int T) {
  const ArQ q = ar_q(phi, T);
  VectorXd eta(T + T + (T - 1));
  eta.head(T) = mu * q.row_sums / s2;
  eta.segment(T, T) = -0.5 * q.diag / s2;
  eta.tail(T - 1).setConstant(-q.off / s2);
  return eta;
}

/// Natural parameters of the joint (mu, v) prior on a bordered-tridiagonal pattern.
inline VectorXd joint_naturals(double phi, double s2, int T) {
  const ArQ q = ar_q(phi, T);
  const int d = T + 1;
  VectorXd eta = VectorXd::Zero(d + d + T + (T - 1));
  Eigen::Index at = d;
  eta[at++] = -0.5 * (q.row_sums.sum() / s2 + kDiffusePrecision);
  for (int t = 0; t < T; ++t) eta[at++] = -0.5 * q.diag[t] / s2;
  for (int t = 0; t < T; ++t) eta[at++] = q.row_sums[t] / s2;  // -P_{mu,v_t}
  for (int t = 0; t + 1 < T; ++t) eta[at++] = -q.off / s2;
  return eta;
}

inline SparseMatrix tridiagonal_hessian(const ArQ& q, double s2, const VectorXd& extra_diag) {
  const int T = static_cast<int>(q.diag.size());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(3 * static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    trips.emplace_back(t, t, -q.diag[t] / s2 + extra_diag[t]);
    if (t + 1 < T) {
      trips.emplace_back(t, t + 1, -q.off / s2);
      trips.emplace_back(t + 1, t, -q.off / s2);
    }
  }
  SparseMatrix h(T, T);
  h.setFromTriplets(trips.begin(), trips.end());
  return h;
}

inline BlockDecl phi_block() {
  VectorXd eta(2);
  eta << kPhiA - 1.0, kPhiB - 1.0;
  BlockDecl b{"phi", Family::beta(), {}, PriorDecl::exp_family([eta](const Assignment&) { return eta; }),
              std::nullopt, Affine{-1.0, 2.0}, {"phi"}};
  return b;
}

inline BlockDecl s2_block(std::vector<std::size_t> parents, std::optional<FeatureBasis> basis) {
  VectorXd eta(2);
  eta << -kS2Shape - 1.0, -kS2Scale;
  return BlockDecl{"sigma2", Family::inv_gamma(), std::move(parents),
                   PriorDecl::exp_family([eta](const Assignment&) { return eta; }), std::move(basis), {}, {"sigma2"}};
}

inline std::vector<std::string> v_names(int T, bool with_mu) {
  std::vector<std::string> out;
  if (with_mu) out.push_back("mu");
  for (int t = 1; t <= T; ++t) out.push_back("v[" + std::to_string(t) + "]");
  return out;
}

}  // namespace sv_detail

inline Model make_sv_model(SvVariant variant, std::vector<double> y) {
  using namespace sv_detail;
  if (y.size() < 2) throw std::invalid_argument("sv model needs at least two observations");
  const int T = static_cast<int>(y.size());

  Model m;
  m.name = "sv-" + std::string(variant == SvVariant::A ? "a" : variant == SvVariant::B ? "b" : "c");
  m.data = y;

  double ms = 0.0;
  for (double yt : y) ms += yt * yt;
  const double level = std::log(ms / T + 1e-12);

  switch (variant) {
    case SvVariant::A: {
      m.spec.blocks.push_back(BlockDecl{"mu", Family::gaussian_uni(), {}, PriorDecl::flat(), std::nullopt, {}, {"mu"}});
      m.spec.blocks.push_back(phi_block());
      m.spec.blocks.push_back(s2_block({}, std::nullopt));
      m.spec.blocks.push_back(BlockDecl{
          "v", Family::gaussian_mv(SparsityPattern::tridiagonal(T)), {0, 1, 2},
          PriorDecl::exp_family([T](const Assignment& x) { return ar_naturals(x[0][0], x[1][0], x[2][0], T); }),
          std::nullopt, {}, v_names(T, false)});

      m.log_joint = [y](const Assignment& x) {
        const double mu = x[0][0], phi = x[1][0], s2 = x[2][0];
        if (!params_ok(phi, s2)) return -std::numeric_limits<double>::infinity();
        return log_phi_prior(phi) + log_s2_prior(s2) + log_ar(x[3], mu, phi, s2) + log_lik(y, x[3]);
      };
      m.grad = [y](const Assignment& x, std::size_t i) -> std::optional<VectorXd> {
        const double mu = x[0][0], phi = x[1][0], s2 = x[2][0];
        const ArQ q = ar_q(phi, static_cast<int>(y.size()));
        const VectorXd qc = q_times(q, (x[3].array() - mu).matrix());
        if (i == 0) return VectorXd::Constant(1, qc.sum() / s2);
        if (i == 3) return VectorXd(-qc / s2 + lik_grad(y, x[3]));
        return std::nullopt;
      };
      m.hess = [y](const Assignment& x, std::size_t i) -> std::optional<SparseMatrix> {
        const double phi = x[1][0], s2 = x[2][0];
        const ArQ q = ar_q(phi, static_cast<int>(y.size()));
        if (i == 0) {
          SparseMatrix h(1, 1);
          h.insert(0, 0) = -q.row_sums.sum() / s2;
          return h;
        }
        if (i == 3) return tridiagonal_hessian(q, s2, lik_hess_diag(y, x[3]));
        return std::nullopt;
      };
      m.default_start = {VectorXd::Constant(1, level), VectorXd::Constant(1, 0.9), VectorXd::Constant(1, 0.1),
                         VectorXd::Constant(T, level)};
      break;
    }
    case SvVariant::B: {
      m.spec.blocks.push_back(BlockDecl{"mu", Family::gaussian_uni(), {}, PriorDecl::flat(), std::nullopt, {}, {"mu"}});
      m.spec.blocks.push_back(phi_block());
      m.spec.blocks.push_back(s2_block({}, std::nullopt));
      m.spec.blocks.push_back(BlockDecl{
          "v", Family::gaussian_mv(SparsityPattern::tridiagonal(T)), {1, 2},
          PriorDecl::exp_family([T](const Assignment& x) { return ar_naturals(0.0, x[1][0], x[2][0], T); }),
          std::nullopt, {}, v_names(T, false)});

      m.log_joint = [y](const Assignment& x) {
        const double mu = x[0][0], phi = x[1][0], s2 = x[2][0];
        if (!params_ok(phi, s2)) return -std::numeric_limits<double>::infinity();
        return log_phi_prior(phi) + log_s2_prior(s2) + log_ar(x[3], 0.0, phi, s2) +
               log_lik(y, (x[3].array() + mu).matrix());
      };
      m.grad = [y](const Assignment& x, std::size_t i) -> std::optional<VectorXd> {
        const double mu = x[0][0], phi = x[1][0], s2 = x[2][0];
        const VectorXd s = (x[3].array() + mu).matrix();
        if (i == 0) return VectorXd::Constant(1, lik_grad(y, s).sum());
        if (i == 3) {
          const ArQ q = ar_q(phi, static_cast<int>(y.size()));
          return VectorXd(-q_times(q, x[3]) / s2 + lik_grad(y, s));
        }
        return std::nullopt;
      };
      m.hess = [y](const Assignment& x, std::size_t i) -> std::optional<SparseMatrix> {
        const double mu = x[0][0], phi = x[1][0], s2 = x[2][0];
        const VectorXd s = (x[3].array() + mu).matrix();
        if (i == 0) {
          SparseMatrix h(1, 1);
          h.insert(0, 0) = lik_hess_diag(y, s).sum();
          return h;
        }
        if (i == 3) return tridiagonal_hessian(ar_q(phi, static_cast<int>(y.size())), s2, lik_hess_diag(y, s));
        return std::nullopt;
      };
      m.default_start = {VectorXd::Constant(1, level), VectorXd::Constant(1, 0.9), VectorXd::Constant(1, 0.1),
                         VectorXd::Zero(T)};
      break;
    }
    case SvVariant::C: {
      m.spec.blocks.push_back(phi_block());
      m.spec.blocks.push_back(s2_block({0}, FeatureBasis::polynomial(0, 2, "phi")));
      m.spec.blocks.push_back(BlockDecl{
          "mu_v", Family::gaussian_mv(SparsityPattern::bordered_tridiagonal(T + 1)), {0, 1},
          PriorDecl::exp_family([T](const Assignment& x) { return joint_naturals(x[0][0], x[1][0], T); }, true),
          std::nullopt, {}, v_names(T, true)});

      m.log_joint = [y](const Assignment& x) {
        const double phi = x[0][0], s2 = x[1][0];
        if (!params_ok(phi, s2)) return -std::numeric_limits<double>::infinity();
        const double mu = x[2][0];
        const VectorXd v = x[2].tail(static_cast<Eigen::Index>(y.size()));
        return log_phi_prior(phi) + log_s2_prior(s2) - 0.5 * (kLog2Pi - std::log(kDiffusePrecision)) -
               0.5 * kDiffusePrecision * mu * mu + log_ar(v, mu, phi, s2) + log_lik(y, v);
      };
      m.grad = [y](const Assignment& x, std::size_t i) -> std::optional<VectorXd> {
        if (i != 2) return std::nullopt;
        const double phi = x[0][0], s2 = x[1][0];
        const int T = static_cast<int>(y.size());
        const double mu = x[2][0];
        const VectorXd v = x[2].tail(T);
        const VectorXd qc = q_times(ar_q(phi, T), (v.array() - mu).matrix());
        VectorXd g(T + 1);
        g[0] = -kDiffusePrecision * mu + qc.sum() / s2;
        g.tail(T) = -qc / s2 + lik_grad(y, v);
        return g;
      };
      m.hess = [y](const Assignment& x, std::size_t i) -> std::optional<SparseMatrix> {
        if (i != 2) return std::nullopt;
        const double phi = x[0][0], s2 = x[1][0];
        const int T = static_cast<int>(y.size());
        const ArQ q = ar_q(phi, T);
        const VectorXd lh = lik_hess_diag(y, x[2].tail(T));
        std::vector<Eigen::Triplet<double>> trips;
        trips.emplace_back(0, 0, -q.row_sums.sum() / s2 - kDiffusePrecision);
        for (int t = 0; t < T; ++t) {
          trips.emplace_back(0, t + 1, q.row_sums[t] / s2);
          trips.emplace_back(t + 1, 0, q.row_sums[t] / s2);
          trips.emplace_back(t + 1, t + 1, -q.diag[t] / s2 + lh[t]);
          if (t + 1 < T) {
            trips.emplace_back(t + 1, t + 2, -q.off / s2);
            trips.emplace_back(t + 2, t + 1, -q.off / s2);
          }
        }
        SparseMatrix h(T + 1, T + 1);
        h.setFromTriplets(trips.begin(), trips.end());
        return h;
      };
      VectorXd z = VectorXd::Constant(T + 1, level);
      m.default_start = {VectorXd::Constant(1, 0.9), VectorXd::Constant(1, 0.1), z};
      break;
    }
  }
  return m;
}

}  // namespace slrvb

#endif  // SLRVB_MODELS_SV_HPP
