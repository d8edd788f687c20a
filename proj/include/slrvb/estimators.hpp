#ifndef SLRVB_ESTIMATORS_HPP
#define SLRVB_ESTIMATORS_HPP

// Stochastic estimates of the per-block regression statistics (C_i, g_i).
//
// Dense blocks use the analytic conditional variance for C and the centered
// product (T - E[T|pa]) * r for g, with the current coefficients as control
// variate: g = phi (u - b) + C coeff, u = r - phi' coeff. The expectation is
// unchanged and g = C coeff exactly whenever the residual is linear in T.
//
// Gaussian blocks with a single feature can instead use derivatives of
// log p. Their statistics are running sums from which the natural
// parameters (h, P) of the offset are read off directly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "slrvb/approx.hpp"
#include "slrvb/errors.hpp"
#include "slrvb/expfam.hpp"
#include "slrvb/linalg.hpp"
#include "slrvb/model.hpp"

namespace slrvb {

enum class EstimatorTag { sample_cov, gaussian_grad, gaussian_grad_hess };

struct EstimatorKind {
  EstimatorTag tag = EstimatorTag::sample_cov;
  bool precondition = false;
};

inline std::string to_string(EstimatorTag t) {
  switch (t) {
    case EstimatorTag::sample_cov: return "sample-cov";
    case EstimatorTag::gaussian_grad: return "grad";
    case EstimatorTag::gaussian_grad_hess: return "grad-hess";
  }
  return "?";
}

inline std::optional<EstimatorTag> parse_estimator(const std::string& s) {
  if (s == "sample-cov") return EstimatorTag::sample_cov;
  if (s == "grad" || s == "gaussian-grad") return EstimatorTag::gaussian_grad;
  if (s == "grad-hess" || s == "gaussian-grad-hess") return EstimatorTag::gaussian_grad_hess;
  return std::nullopt;
}

struct DenseBlockStats {
  MatrixXd C;
  VectorXd g;
};

/// Sums over draws of G, H (pattern entries), H m(pa) and x - m(pa), where G
/// and H are the gradient and Hessian of log p - T(x).eta_prior(pa).
struct GaussianBlockStats {
  double weight = 0.0;
  VectorXd grad_sum;
  VectorXd hess_sum;
  VectorXd hess_mean_sum;
  VectorXd dev_sum;
};

using BlockStats = std::variant<DenseBlockStats, GaussianBlockStats>;

struct RegressionStats {
  std::vector<BlockStats> blocks;

  RegressionStats& scale(double a) {
    for (auto& b : blocks) {
      if (auto* d = std::get_if<DenseBlockStats>(&b)) {
        d->C *= a;
        d->g *= a;
      } else {
        auto& s = std::get<GaussianBlockStats>(b);
        s.weight *= a;
        s.grad_sum *= a;
        s.hess_sum *= a;
        s.hess_mean_sum *= a;
        s.dev_sum *= a;
      }
    }
    return *this;
  }

  /// this += a * other
  RegressionStats& add(const RegressionStats& other, double a = 1.0) {
    if (blocks.size() != other.blocks.size()) throw std::invalid_argument("RegressionStats: block count mismatch");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (blocks[i].index() != other.blocks[i].index())
        throw std::invalid_argument("RegressionStats: estimator kind mismatch in block " + std::to_string(i));
      if (auto* d = std::get_if<DenseBlockStats>(&blocks[i])) {
        const auto& o = std::get<DenseBlockStats>(other.blocks[i]);
        d->C += a * o.C;
        d->g += a * o.g;
      } else {
        auto& s = std::get<GaussianBlockStats>(blocks[i]);
        const auto& o = std::get<GaussianBlockStats>(other.blocks[i]);
        s.weight += a * o.weight;
        s.grad_sum += a * o.grad_sum;
        s.hess_sum += a * o.hess_sum;
        s.hess_mean_sum += a * o.hess_mean_sum;
        s.dev_sum += a * o.dev_sum;
      }
    }
    return *this;
  }

  /// (1 - w) * this + w * other
  RegressionStats& blend(const RegressionStats& other, double w) {
    scale(1.0 - w);
    return add(other, w);
  }
};

namespace est_detail {

inline bool uses_gaussian_stats(const Block& b, EstimatorTag tag) {
  return tag != EstimatorTag::sample_cov && b.family.is_gaussian() && b.basis.size() == 1;
}

/// Under grad-hess only blocks without children use the Hessian. For a
/// parent block the Hessian with children held fixed drops how the children
/// move with it and shifts the fixed point; the first-derivative form keeps
/// that through the conditional draws.
inline bool uses_hessian(const ApproximationGraph& graph, std::size_t i, EstimatorTag tag) {
  if (tag != EstimatorTag::gaussian_grad_hess) return false;
  for (const auto& b : graph.blocks())
    for (std::size_t p : b.parents)
      if (p == i) return false;
  return true;
}

inline BlockStats empty_block(const Block& b, EstimatorTag tag) {
  if (uses_gaussian_stats(b, tag)) {
    const auto& p = gaussian_pattern(b.family);
    const auto d = static_cast<Eigen::Index>(p.dim());
    return GaussianBlockStats{0.0, VectorXd::Zero(d), VectorXd::Zero(static_cast<Eigen::Index>(p.size())),
                              VectorXd::Zero(d), VectorXd::Zero(d)};
  }
  const int n = b.coeff_dim();
  return DenseBlockStats{MatrixXd::Zero(n, n), VectorXd::Zero(n)};
}

/// psi psi' (x) V, feature-major.
inline MatrixXd kron_features(const VectorXd& psi, const MatrixXd& v) {
  const Eigen::Index J = psi.size(), k = v.rows();
  MatrixXd out(J * k, J * k);
  for (Eigen::Index a = 0; a < J; ++a)
    for (Eigen::Index b = 0; b < J; ++b) out.block(a * k, b * k, k, k) = (psi[a] * psi[b]) * v;
  return out;
}

inline VectorXd kron_features(const VectorXd& psi, const VectorXd& t) {
  const Eigen::Index J = psi.size(), k = t.size();
  VectorXd out(J * k);
  for (Eigen::Index a = 0; a < J; ++a) out.segment(a * k, k) = psi[a] * t;
  return out;
}

/// Dense-block pieces of one draw: C contribution, phi, and u = r - phi' coeff.
struct DenseTerm {
  MatrixXd C;
  VectorXd phi;
  double u = 0.0;
};

inline DenseTerm dense_term(const Block& b, const JointDraw& draw, std::size_t i, const VectorXd& coeffs,
                            double log_p) {
  const VectorXd& eta = draw.naturals[i];
  const VectorXd psi = b.basis.evaluate(draw.x);
  const VectorXd m = mean_parameters(b.family, eta);
  const VectorXd t = block_statistics(b, draw.x[i]);
  const VectorXd offset = offset_naturals(b, draw.x, coeffs);
  DenseTerm out;
  out.C = kron_features(psi, conditional_variance(b.family, eta));
  out.phi = kron_features(psi, VectorXd(t - m));
  // r = log p - log q + T.offset - Z(eta); subtracting phi'coeff = (T - m).offset
  out.u = log_p - draw.log_q + m.dot(offset) - log_normalizer(b.family, eta);
  return out;
}

inline void add_gaussian_term(GaussianBlockStats& s, const Block& b, const Model& model, const JointDraw& draw,
                              std::size_t i, bool use_hessian) {
  const auto& x = draw.x;
  const VectorXd prior = b.prior_link(x);
  const auto mom = gaussian_moments(b.family, draw.naturals[i]);
  const auto& pattern = gaussian_pattern(b.family);

  auto grad = model.gradient(x, i);
  if (!grad) throw UnsupportedEstimator("model '" + model.name + "' provides no gradient for block '" + b.id + "'");
  const VectorXd G = *grad - gaussian_dot_gradient(b.family, x[i], prior);
  const VectorXd dev = x[i] - mom.mean;

  VectorXd H;
  if (use_hessian) {
    auto hess = model.hessian(x, i);
    if (!hess) throw UnsupportedEstimator("model '" + model.name + "' provides no Hessian for block '" + b.id + "'");
    H = pattern.restrict(*hess) - gaussian_dot_hessian(b.family, prior);
  } else {
    // E[grad^2 f] = E[P (x - m) grad f'] under N(m, P^-1), symmetrized on the pattern
    const VectorXd u = mom.precision * dev;
    H.resize(static_cast<Eigen::Index>(pattern.size()));
    for (std::size_t e = 0; e < pattern.size(); ++e) {
      const auto [a, c] = pattern.entries()[e];
      H[static_cast<Eigen::Index>(e)] = 0.5 * (u[a] * G[c] + u[c] * G[a]);
    }
  }
  s.weight += 1.0;
  s.grad_sum += G;
  s.hess_sum += H;
  s.hess_mean_sum += pattern.to_matrix(H) * mom.mean;
  s.dev_sum += dev;
}

inline double finite_log_joint(const Model& model, const Assignment& x) {
  const double lp = model.log_joint(x);
  if (!std::isfinite(lp)) throw NumericError("log joint is not finite at a draw from q");
  return lp;
}

}  // namespace est_detail

/// Baselines b_i for the dense-block control variate. Empty means leave-one-out
/// means over the supplied draws (zero for a single draw).
struct EstimateOptions {
  EstimatorKind kind;
  std::vector<double> baselines;
  /// Per block bound on |u - b| (the residual is clipped to it); empty means
  /// no clipping.
  std::vector<double> clip;
};

struct Estimate {
  RegressionStats stats;
  /// Mean over draws of u_i per block (zero for Gaussian-stat blocks).
  std::vector<double> mean_u;
  /// Mean over draws of (u_i - b_i)^2 before clipping.
  std::vector<double> mean_sq_residual;
};

/// Statistics averaged over the draws (weight 1 per Gaussian block).
inline Estimate estimate_stats(const ApproximationGraph& graph, const Model& model, const VariationalState& state,
                               std::span<const JointDraw> draws, const EstimateOptions& opt) {
  if (draws.empty()) throw std::invalid_argument("estimate_stats needs at least one draw");
  const std::size_t n = graph.size();
  const EstimatorTag tag = opt.kind.tag;
  Estimate out;
  out.stats.blocks.reserve(n);
  for (const auto& b : graph.blocks()) out.stats.blocks.push_back(est_detail::empty_block(b, tag));
  out.mean_u.assign(n, 0.0);
  out.mean_sq_residual.assign(n, 0.0);

  std::vector<double> log_p(draws.size());
  for (std::size_t d = 0; d < draws.size(); ++d) log_p[d] = est_detail::finite_log_joint(model, draws[d].x);

  const double B = static_cast<double>(draws.size());
  for (std::size_t i = 0; i < n; ++i) {
    const Block& b = graph.block(i);
    if (auto* gs = std::get_if<GaussianBlockStats>(&out.stats.blocks[i])) {
      for (const auto& draw : draws)
        est_detail::add_gaussian_term(*gs, b, model, draw, i, est_detail::uses_hessian(graph, i, tag));
      continue;
    }
    auto& ds = std::get<DenseBlockStats>(out.stats.blocks[i]);
    std::vector<est_detail::DenseTerm> terms;
    terms.reserve(draws.size());
    double usum = 0.0;
    for (std::size_t d = 0; d < draws.size(); ++d) {
      terms.push_back(est_detail::dense_term(b, draws[d], i, state.coeffs[i], log_p[d]));
      usum += terms.back().u;
    }
    out.mean_u[i] = usum / B;
    for (const auto& t : terms) {
      double base = 0.0;
      if (!opt.baselines.empty()) {
        base = opt.baselines.at(i);
      } else if (draws.size() > 1) {
        base = (usum - t.u) / (B - 1.0);
      }
      double r = t.u - base;
      out.mean_sq_residual[i] += r * r / B;
      if (!opt.clip.empty()) r = std::clamp(r, -opt.clip.at(i), opt.clip.at(i));
      ds.C += t.C;
      ds.g += t.phi * r + t.C * state.coeffs[i];
    }
  }
  out.stats.scale(1.0 / B);
  return out;
}

inline RegressionStats estimate_sample_cov(const ApproximationGraph& graph, const Model& model,
                                           const VariationalState& state, std::span<const JointDraw> draws) {
  return estimate_stats(graph, model, state, draws, {{EstimatorTag::sample_cov, false}, {}, {}}).stats;
}

/// Gaussian blocks with one feature use derivatives; all others fall back to sample-cov.
inline RegressionStats estimate_gaussian_grad(const ApproximationGraph& graph, const Model& model,
                                              const VariationalState& state, std::span<const JointDraw> draws,
                                              bool use_hessian) {
  const EstimatorTag tag = use_hessian ? EstimatorTag::gaussian_grad_hess : EstimatorTag::gaussian_grad;
  return estimate_stats(graph, model, state, draws, {{tag, false}, {}, {}}).stats;
}

/// Multiplies the dense statistics of every top-level block by
/// K = Var[T]^-1 at the block's current natural parameters.
inline RegressionStats precondition(RegressionStats stats, const ApproximationGraph& graph,
                                    const VariationalState& state, std::vector<std::string>* warnings = nullptr) {
  const Assignment empty(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const Block& b = graph.block(i);
    auto* d = std::get_if<DenseBlockStats>(&stats.blocks[i]);
    if (!d || !b.top_level()) continue;
    const MatrixXd V = conditional_variance(b.family, conditional_naturals(b, empty, state.coeffs[i]));
    Eigen::LDLT<MatrixXd> ldlt(V);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 1e-14 * ldlt.vectorD().maxCoeff()) {
      if (warnings) warnings->push_back("block '" + b.id + "': singular Var[T], preconditioner skipped");
      continue;
    }
    const MatrixXd K = ldlt.solve(MatrixXd::Identity(V.rows(), V.cols()));
    const Eigen::Index k = V.rows();
    const Eigen::Index J = b.feature_count();
    for (Eigen::Index a = 0; a < J; ++a) {
      d->C.middleRows(a * k, k) = (K * d->C.middleRows(a * k, k)).eval();
      d->g.segment(a * k, k) = (K * d->g.segment(a * k, k)).eval();
    }
  }
  return stats;
}

/// Ridge strength on shrunk features: 0.01 * mean(diag C).
inline constexpr double kRidgeFactor = 0.01;

/// The coefficients solving the block's regression, C^-1 g (with ridge).
inline VectorXd solve_block(const Block& b, const BlockStats& bs) {
  if (const auto* gs = std::get_if<GaussianBlockStats>(&bs)) {
    if (!(gs->weight > 0.0)) throw ConditioningError(b.id, "no accumulated draws");
    const auto& pattern = gaussian_pattern(b.family);
    const VectorXd hbar = gs->hess_sum / gs->weight;
    const VectorXd lin =
        (gs->grad_sum - gs->hess_mean_sum - pattern.to_matrix(hbar) * gs->dev_sum) / gs->weight;
    return gaussian_naturals_from(b.family, lin, hbar);
  }
  const auto& ds = std::get<DenseBlockStats>(bs);
  MatrixXd C = ds.C;
  const Eigen::Index k = b.stat_dim();
  bool any_shrunk = false;
  for (std::size_t j = 1; j < b.basis.size(); ++j) any_shrunk = any_shrunk || b.basis.shrink[j];
  if (any_shrunk) {
    const double lambda = kRidgeFactor * C.diagonal().mean();
    for (std::size_t j = 1; j < b.basis.size(); ++j)
      if (b.basis.shrink[j])
        C.diagonal().segment(static_cast<Eigen::Index>(j) * k, k).array() += lambda;
  }
  return robust_solve(C, ds.g, b.id);
}

inline VariationalState solve_stats(const ApproximationGraph& graph, const RegressionStats& stats) {
  VariationalState s;
  s.coeffs.reserve(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) s.coeffs.push_back(solve_block(graph.block(i), stats.blocks[i]));
  return s;
}

/// Starting state from a point x: every single-feature gaussian block whose
/// model supplies grad and Hessian takes the quadratic expansion of log p at
/// x (what gaussian-grad-hess returns from the single draw x). Other blocks,
/// and any block whose expansion is not a valid conditional at x, keep
/// init_state.
inline VariationalState expansion_start(const Model& model, const ApproximationGraph& graph, const Assignment& x) {
  VariationalState s = init_state(graph);
  if (x.size() != graph.size()) return s;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const Block& b = graph.block(i);
    if (!b.family.is_gaussian() || b.basis.size() != 1) continue;
    if (x[i].size() != b.family.point_dim()) return init_state(graph);
    auto grad = model.gradient(x, i);
    auto hess = model.hessian(x, i);
    if (!grad || !hess) continue;
    const VectorXd prior = b.prior_link(x);
    const auto& pattern = gaussian_pattern(b.family);
    const VectorXd G = *grad - gaussian_dot_gradient(b.family, x[i], prior);
    const VectorXd H = pattern.restrict(*hess) - gaussian_dot_hessian(b.family, prior);
    if (!G.allFinite() || !H.allFinite()) continue;
    VectorXd c = gaussian_naturals_from(b.family, VectorXd(G - pattern.to_matrix(H) * x[i]), H);
    if (is_valid(b.family, VectorXd(prior + offset_naturals(b, x, c)))) s.coeffs[i] = std::move(c);
  }
  return s;
}

/// Start used when a fit is given none: the expansion at the model's default
/// point when it has one, the weak default otherwise.
inline VariationalState default_start(const Model& model, const ApproximationGraph& graph) {
  if (model.default_start.empty()) return init_state(graph);
  VariationalState s = expansion_start(model, graph, model.default_start);
  return state_is_valid(graph, s, {}) ? s : init_state(graph);
}

/// f = coeff - C^-1 g, flattened in graph order.
inline VectorXd natural_gradient(const ApproximationGraph& graph, const RegressionStats& stats,
                                 const VariationalState& state) {
  return state.flatten() - solve_stats(graph, stats).flatten();
}

}  // namespace slrvb

#endif  // SLRVB_ESTIMATORS_HPP
