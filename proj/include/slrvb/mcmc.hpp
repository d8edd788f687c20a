#ifndef SLRVB_MCMC_HPP
#define SLRVB_MCMC_HPP

// Adaptive random-walk Metropolis over every unknown of a model, used as the
// reference posterior. Scalar blocks are updated one at a time; gaussian-mv
// blocks get joint proposals over contiguous chunks, with covariances learned
// during burn-in.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "slrvb/approx.hpp"
#include "slrvb/diagnostics.hpp"
#include "slrvb/errors.hpp"
#include "slrvb/model.hpp"
#include "slrvb/rng.hpp"

namespace slrvb {

struct McmcConfig {
  int iterations = 200000;
  int burn_in = 50000;
  int thin = 10;
  std::uint64_t seed = 1;
  /// Starting random-walk scale for every coordinate.
  double initial_scale = 0.1;
  /// Burn-in iterations between refreshes of the learned block covariances.
  int adapt_interval = 200;
  /// gaussian-mv blocks are updated in contiguous chunks of at most this many
  /// coordinates; a single joint move in hundreds of dimensions does not mix.
  int max_joint_dim = 10;
  double target_scalar = 0.44;
  double target_block = 0.234;

  void validate() const {
    if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    if (burn_in < 0 || burn_in >= iterations) throw std::invalid_argument("burn-in must lie in [0, iterations)");
    if (thin < 1) throw std::invalid_argument("thinning must be >= 1");
    if (!(initial_scale > 0.0)) throw std::invalid_argument("initial scale must be > 0");
    if (adapt_interval < 1) throw std::invalid_argument("adaptation interval must be >= 1");
    if (max_joint_dim < 1) throw std::invalid_argument("joint update size must be >= 1");
  }
};

struct McmcResult {
  std::vector<std::string> names;
  /// Retained draws after burn-in and thinning, one row per draw.
  std::vector<std::vector<double>> rows;
  /// Post-burn-in acceptance rate per update (block name for joint updates).
  std::vector<std::pair<std::string, double>> acceptance;
};

inline double acceptance_probability(double delta_log_p) {
  if (std::isnan(delta_log_p)) return 0.0;
  return delta_log_p >= 0.0 ? 1.0 : std::exp(delta_log_p);
}

namespace mcmc_detail {

struct Update {
  std::string name;
  std::size_t block = 0;
  /// Coordinates element .. element + length - 1 of the block.
  int element = 0;
  int length = 1;
  bool joint = false;
  double log_scale = 0.0;
  long accepted = 0;
  long tried = 0;
  // joint updates only
  MatrixXd chol;
  VectorXd mean;
  MatrixXd scatter;
  long n_seen = 0;
};

inline void observe(Update& u, const VectorXd& x) {
  u.n_seen += 1;
  const VectorXd delta = x - u.mean;
  u.mean += delta / static_cast<double>(u.n_seen);
  u.scatter.noalias() += delta * (x - u.mean).transpose();
}

inline void refresh_cholesky(Update& u) {
  const Eigen::Index d = u.mean.size();
  if (u.n_seen < 2 * d + 10) return;
  MatrixXd cov = u.scatter / static_cast<double>(u.n_seen - 1);
  const double jitter = 1e-10 * std::max(cov.trace() / static_cast<double>(d), 1e-300);
  cov.diagonal().array() += jitter;
  Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) u.chol = llt.matrixL();
}

}  // namespace mcmc_detail

/// Runs one chain from the model's default start.
inline McmcResult run_metropolis(const Model& model, const ApproximationGraph& graph, const McmcConfig& cfg) {
  cfg.validate();
  Assignment x = model.default_start;
  if (x.size() != graph.size()) throw DomainError("model has no start point matching its blocks");
  double lp = model.log_joint(x);
  if (!std::isfinite(lp)) throw DomainError("log joint is not finite at the start point");

  std::vector<mcmc_detail::Update> updates;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const Block& b = graph.block(i);
    const int d = b.family.point_dim();
    if (b.family.kind() == FamilyKind::gaussian_mv) {
      for (int at = 0; at < d; at += cfg.max_joint_dim) {
        const int len = std::min(cfg.max_joint_dim, d - at);
        mcmc_detail::Update u;
        u.name = len == d ? b.id : b.id + "[" + std::to_string(at + 1) + ":" + std::to_string(at + len) + "]";
        u.block = i;
        u.element = at;
        u.length = len;
        u.joint = true;
        u.log_scale = std::log(2.38 / std::sqrt(static_cast<double>(len)));
        u.chol = MatrixXd::Identity(len, len) * cfg.initial_scale;
        u.mean = VectorXd::Zero(len);
        u.scatter = MatrixXd::Zero(len, len);
        updates.push_back(std::move(u));
      }
    } else {
      for (int e = 0; e < d; ++e) {
        mcmc_detail::Update u;
        u.name = b.element_names.at(static_cast<std::size_t>(e));
        u.block = i;
        u.element = e;
        u.log_scale = std::log(cfg.initial_scale);
        updates.push_back(std::move(u));
      }
    }
  }

  Rng rng(cfg.seed);
  McmcResult out;
  out.names = graph.scalar_names();
  out.rows.reserve(static_cast<std::size_t>((cfg.iterations - cfg.burn_in) / cfg.thin + 1));

  for (int it = 1; it <= cfg.iterations; ++it) {
    const bool adapting = it <= cfg.burn_in;
    const double gain = std::pow(static_cast<double>(it), -0.6);
    for (auto& u : updates) {
      auto xi = x[u.block].segment(u.element, u.length);
      const VectorXd old = xi;
      if (!u.joint) {
        xi[0] += std::exp(u.log_scale) * rng.normal();
      } else {
        VectorXd eps(u.length);
        for (Eigen::Index k = 0; k < eps.size(); ++k) eps[k] = rng.normal();
        xi += std::exp(u.log_scale) * (u.chol * eps);
      }
      const double lp_new = model.log_joint(x);
      const double a = std::isfinite(lp_new) ? acceptance_probability(lp_new - lp) : 0.0;
      const bool accept = rng.uniform_open() < a;
      if (accept) {
        lp = lp_new;
      } else {
        xi = old;
      }
      if (adapting) {
        const double target = u.joint ? cfg.target_block : cfg.target_scalar;
        u.log_scale += gain * (a - target);
        if (u.joint) {
          mcmc_detail::observe(u, xi);
          if (it % cfg.adapt_interval == 0) mcmc_detail::refresh_cholesky(u);
        }
      } else {
        u.tried += 1;
        u.accepted += accept ? 1 : 0;
      }
    }
    if (!adapting && (it - cfg.burn_in) % cfg.thin == 0) {
      const VectorXd flat = flatten_assignment(x);
      out.rows.emplace_back(flat.data(), flat.data() + flat.size());
    }
  }
  for (const auto& u : updates)
    out.acceptance.emplace_back(u.name, u.tried ? static_cast<double>(u.accepted) / static_cast<double>(u.tried) : 0.0);
  return out;
}

struct ComparisonRow {
  std::string name;
  double vb_mean = 0.0;
  double vb_sd = 0.0;
  double ref_mean = 0.0;
  double ref_sd = 0.0;
  /// |vb_mean - ref_mean| / ref_sd
  double discrepancy = 0.0;
  /// vb_sd / ref_sd
  double sd_ratio = 0.0;
};

/// Matches variational summaries against reference draws by name.
inline std::vector<ComparisonRow> compare(const std::vector<VariableSummary>& vb,
                                          const std::vector<std::string>& ref_names,
                                          const std::vector<std::vector<double>>& ref_rows) {
  if (vb.size() != ref_names.size())
    throw SchemaError("variable count differs: fit has " + std::to_string(vb.size()) + ", reference has " +
                      std::to_string(ref_names.size()));
  if (ref_rows.size() < 2) throw SchemaError("reference needs at least two draws");
  const auto ref = summarize_columns(ref_names, ref_rows);
  std::vector<ComparisonRow> out;
  out.reserve(vb.size());
  for (std::size_t j = 0; j < vb.size(); ++j) {
    if (vb[j].name != ref[j].name)
      throw SchemaError("variable '" + vb[j].name + "' does not match reference column '" + ref[j].name + "'");
    ComparisonRow r;
    r.name = vb[j].name;
    r.vb_mean = vb[j].mean;
    r.vb_sd = vb[j].sd;
    r.ref_mean = ref[j].mean;
    r.ref_sd = ref[j].sd;
    const double inf = std::numeric_limits<double>::infinity();
    r.discrepancy = r.ref_sd > 0.0 ? std::abs(r.vb_mean - r.ref_mean) / r.ref_sd : inf;
    r.sd_ratio = r.ref_sd > 0.0 ? r.vb_sd / r.ref_sd : inf;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace slrvb

#endif  // SLRVB_MCMC_HPP
