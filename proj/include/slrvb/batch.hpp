#ifndef SLRVB_BATCH_HPP
#define SLRVB_BATCH_HPP

// Batch optimizer. The natural gradient f(eta) is evaluated on a fixed set of
// random numbers (the stream is reset to seed_star on every call), so f is a
// deterministic map and can be driven by a gradient-only line search.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "slrvb/approx.hpp"
#include "slrvb/data_io.hpp"
#include "slrvb/errors.hpp"
#include "slrvb/estimators.hpp"
#include "slrvb/fit_result.hpp"
#include "slrvb/model.hpp"
#include "slrvb/quality.hpp"
#include "slrvb/rng.hpp"

namespace slrvb {

struct BatchConfig {
  std::uint64_t seed_star = 12345;
  /// 0 selects the two-phase schedule 2 n_min then 5 n_min.
  int n_samples = 0;
  double c_curv = 0.5;
  double c_mss_batch = 100.0;
  double grad_tol = 1e-3;
  int max_outer = 200;
  int max_trials = 10;
  EstimatorKind estimator{EstimatorTag::gaussian_grad_hess, false};
  int r2_samples = kDefaultR2Samples;

  void validate() const {
    if (!(c_curv > 0.0 && c_curv < 1.0)) throw std::invalid_argument("c_curv must lie in (0, 1)");
    if (!(c_mss_batch > 0.0)) throw std::invalid_argument("c_mss_batch must be > 0");
    if (!(grad_tol > 0.0)) throw std::invalid_argument("grad_tol must be > 0");
    if (n_samples < 0) throw std::invalid_argument("n_samples must be >= 0");
    if (max_outer < 1 || max_trials < 1) throw std::invalid_argument("iteration caps must be >= 1");
  }
};

/// max_i J_i: one analytic Var[T] per draw makes C_i full rank once the
/// feature Gram matrix is, which needs J_i draws.
inline int min_samples(const ApproximationGraph& graph) {
  int n = 1;
  for (const auto& b : graph.blocks()) n = std::max(n, b.feature_count());
  return n;
}

/// f at eta with the stream reset to seed_star; nullopt when eta (or a
/// conditional reached by the fixed draws) is not a proper distribution.
inline std::optional<VectorXd> try_batch_natural_gradient(const Model& model, const ApproximationGraph& graph,
                                                          const VariationalState& eta, const BatchConfig& cfg,
                                                          int n_samples) {
  if (!state_is_valid(graph, eta, {})) return std::nullopt;
  Rng rng(cfg.seed_star);
  std::vector<JointDraw> draws;
  draws.reserve(static_cast<std::size_t>(n_samples));
  try {
    for (int d = 0; d < n_samples; ++d) draws.push_back(draw_joint_record(graph, eta, rng));
  } catch (const InvalidConditional&) {
    return std::nullopt;
  }
  RegressionStats stats = estimate_stats(graph, model, eta, draws, {cfg.estimator, {}, {}}).stats;
  if (cfg.estimator.precondition) stats = precondition(std::move(stats), graph, eta);
  return natural_gradient(graph, stats, eta);
}

inline VectorXd batch_natural_gradient(const Model& model, const ApproximationGraph& graph,
                                       const VariationalState& eta, const BatchConfig& cfg, int n_samples) {
  auto f = try_batch_natural_gradient(model, graph, eta, cfg, n_samples);
  if (!f) throw InvalidConditional("?", "natural gradient requested at an invalid state");
  return *f;
}

struct LineSearchResult {
  double alpha = 0.0;
  VectorXd eta;
  VectorXd f;
  int trials = 0;
  /// True when a trial met the acceptance test; false for the best-seen fallback.
  bool accepted = false;
};

/// The acceptance test: either the maximal step still descends, or the
/// directional derivative shrank by c_curv.
inline bool line_search_accepts(double alpha, double alpha_max, double slope, double slope0, double c_curv) {
  return (alpha == alpha_max && slope < 0.0) || std::abs(slope) < c_curv * std::abs(slope0);
}

/// Gradient-only line search along s from eta, where f0 = f(eta).
inline LineSearchResult line_search(const std::function<std::optional<VectorXd>(const VectorXd&)>& f_eval,
                                    const VectorXd& eta, const VectorXd& s, const VectorXd& f0,
                                    const BatchConfig& cfg) {
  const double K = static_cast<double>(eta.size());
  const double ss = s.squaredNorm();
  const double slope0 = s.dot(f0);
  if (ss == 0.0) return {0.0, eta, f0, 0, true};

  double alpha_max = std::min(1.5, std::sqrt(K * cfg.c_mss_batch / ss));
  double alpha = std::min(1.0, alpha_max);

  struct Trial {
    double alpha;
    double slope;
    VectorXd eta;
    VectorXd f;
  };
  std::vector<Trial> seen;
  // Bracket on the directional derivative: slope < 0 at lo, > 0 at hi.
  double lo = 0.0, slope_lo = slope0;
  std::optional<double> hi, slope_hi;

  for (int trial = 1; trial <= cfg.max_trials; ++trial) {
    VectorXd cand = eta + alpha * s;
    auto f = f_eval(cand);
    if (!f) {
      alpha_max = 0.5 * alpha;
      alpha = hi ? std::min(alpha_max, 0.5 * (lo + *hi)) : alpha_max;
      if (alpha <= lo) alpha = 0.5 * (lo + alpha_max);
      continue;
    }
    const double slope = s.dot(*f);
    seen.push_back({alpha, slope, cand, *f});
    if (line_search_accepts(alpha, alpha_max, slope, slope0, cfg.c_curv))
      return {alpha, std::move(cand), std::move(*f), trial, true};

    double prev_alpha = lo, prev_slope = slope_lo;
    if (slope < 0.0) {
      lo = alpha;
      slope_lo = slope;
    } else {
      hi = alpha;
      slope_hi = slope;
    }
    double next;
    if (hi) {
      // zero of the linear interpolant of the slope = minimum of the quadratic
      next = lo - slope_lo * (*hi - lo) / (*slope_hi - slope_lo);
      const double width = *hi - lo;
      next = std::clamp(next, lo + 0.1 * width, *hi - 0.1 * width);
    } else {
      // still descending: extrapolate the slope secant, capped at alpha_max
      next = alpha_max;
      if (slope > prev_slope && alpha > prev_alpha)
        next = std::min(alpha_max, alpha - slope * (alpha - prev_alpha) / (slope - prev_slope));
      if (next <= alpha) next = alpha_max;
    }
    alpha = next;
  }
  if (seen.empty()) throw LineSearchError("line search: every trial step gave an invalid distribution");
  auto best = std::min_element(seen.begin(), seen.end(),
                               [](const Trial& a, const Trial& b) { return std::abs(a.slope) < std::abs(b.slope); });
  return {best->alpha, best->eta, best->f, cfg.max_trials, false};
}

inline std::vector<std::pair<std::string, std::string>> config_echo(const BatchConfig& c) {
  return {{"method", "batch"},
          {"estimator", to_string(c.estimator.tag)},
          {"precondition", c.estimator.precondition ? "on" : "off"},
          {"seed_star", std::to_string(c.seed_star)},
          {"n_samples", c.n_samples == 0 ? std::string("auto") : std::to_string(c.n_samples)},
          {"c_curv", format_double(c.c_curv)},
          {"c_mss_batch", format_double(c.c_mss_batch)},
          {"grad_tol", format_double(c.grad_tol)},
          {"max_outer", std::to_string(c.max_outer)},
          {"r2_samples", std::to_string(c.r2_samples)}};
}

/// Natural-gradient descent with the line search, in one or two sample-size phases.
inline FitResult fit_batch(const Model& model, const ApproximationGraph& graph, const BatchConfig& cfg,
                           std::optional<VariationalState> start = std::nullopt) {
  cfg.validate();
  VariationalState eta = start ? *start : default_start(model, graph);
  if (!state_is_valid(graph, eta, {})) throw ValidityError("initial variational state is not valid");

  const int n_min = min_samples(graph);
  std::vector<int> phases;
  if (cfg.n_samples > 0) {
    if (cfg.n_samples < n_min)
      throw std::invalid_argument("n_samples " + std::to_string(cfg.n_samples) + " is below the minimum " +
                                  std::to_string(n_min));
    phases = {cfg.n_samples};
  } else {
    phases = {2 * n_min, 5 * n_min};
  }

  FitResult out;
  out.method = "batch";
  out.seed = cfg.seed_star;
  out.config = config_echo(cfg);
  out.warnings = graph.warnings();

  const double rootK = std::sqrt(static_cast<double>(graph.total_dim()));
  bool phase_converged = false;
  double gnorm = 0.0;
  for (int n : phases) {
    auto f_eval = [&](const VectorXd& flat) {
      return try_batch_natural_gradient(model, graph, VariationalState::unflatten(graph, flat), cfg, n);
    };
    VectorXd x = eta.flatten();
    auto f0 = f_eval(x);
    if (!f0) throw LineSearchError("natural gradient is undefined at the starting state");
    VectorXd f = *f0;
    phase_converged = false;
    for (int outer = 0; outer < cfg.max_outer; ++outer) {
      gnorm = f.norm() / rootK;
      if (gnorm <= cfg.grad_tol) {
        phase_converged = true;
        break;
      }
      const VectorXd s = -f;
      LineSearchResult ls = line_search(f_eval, x, s, f, cfg);
      out.iterations += 1;
      out.trace.push_back({gnorm, ls.alpha});
      if (!ls.accepted)
        out.warnings.push_back("outer iteration " + std::to_string(out.iterations) +
                               ": no trial met the curvature test, took the best step");
      x = std::move(ls.eta);
      f = std::move(ls.f);
    }
    if (!phase_converged) gnorm = f.norm() / rootK;
    eta = VariationalState::unflatten(graph, x);
    if (phase_converged && out.converged_at < 0 && n == phases.back()) out.converged_at = out.iterations;
  }
  out.converged = phase_converged;
  out.grad_norm = gnorm;
  out.state = std::move(eta);
  Rng r2rng(cfg.seed_star, 1);
  out.r2 = r_squared(model, graph, out.state, cfg.r2_samples, r2rng);
  return out;
}

}  // namespace slrvb

#endif  // SLRVB_BATCH_HPP
