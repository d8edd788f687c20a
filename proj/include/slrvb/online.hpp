#ifndef SLRVB_ONLINE_HPP
#define SLRVB_ONLINE_HPP

// Online optimizer: one draw per iteration, smoothed statistics with weight
// w_t = 1/sqrt(10 + t), damped updates, and a trailing-window average of the
// raw per-iteration statistics once the running step size falls below c_tol.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
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

struct OnlineConfig {
  double c_mss = 10.0;
  double c_tol = 1e-4;
  int n_avg = 50;
  int max_iters = 50000;
  std::uint64_t seed = 1;
  EstimatorKind estimator{EstimatorTag::gaussian_grad_hess, false};
  int z_window = 20;
  int burn_in = 5;
  /// Recent draws kept for checking conditionals of blocks with parents.
  int probe_count = 20;
  int max_halvings = 20;
  bool blockwise_damping = true;
  /// Residuals u - b beyond clip_sd running RMS are clipped; 0 disables.
  double clip_sd = 0.0;
  int r2_samples = kDefaultR2Samples;

  void validate() const {
    if (!(c_mss > 0.0)) throw std::invalid_argument("c_mss must be > 0");
    if (!(c_tol > 0.0)) throw std::invalid_argument("c_tol must be > 0");
    if (n_avg < 2) throw std::invalid_argument("N_avg must be >= 2");
    if (z_window < 1) throw std::invalid_argument("z window must be >= 1");
    if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
    if (burn_in < 1) throw std::invalid_argument("burn-in must be >= 1");
  }
};

struct OnlineState {
  int t = 0;
  VariationalState eta;
  RegressionStats smoothed;
  std::vector<double> baselines;
  /// Running mean square of the residual u - b per dense block.
  std::vector<double> residual_ms;
  double z = 0.0;
  std::deque<double> recent_steps;
  std::deque<RegressionStats> window;
  std::deque<Assignment> probes;
  std::vector<TracePoint> trace;
  int noop_iterations = 0;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double step_size(int t) {
  if (t < 1) throw std::invalid_argument("step_size: t must be >= 1");
  return 1.0 / std::sqrt(10.0 + static_cast<double>(t));
}

/// min(1, sqrt(c_mss K / d'd)) for d = proposed - current.
inline double damping_alpha(const VectorXd& proposed, const VectorXd& current, double c_mss, std::size_t K) {
  if (proposed.size() != current.size()) throw std::invalid_argument("damping_alpha: length mismatch");
  const double dd = (proposed - current).squaredNorm();
  if (dd == 0.0) return 1.0;
  return std::min(1.0, std::sqrt(c_mss * static_cast<double>(K) / dd));
}

namespace online_detail {

inline Estimate raw_stats(const ApproximationGraph& graph, const Model& model, const VariationalState& eta,
                          std::span<const JointDraw> draws, const OnlineConfig& cfg, const std::vector<double>& baselines,
                          const std::vector<double>& clip) {
  Estimate e = estimate_stats(graph, model, eta, draws, {cfg.estimator, baselines, clip});
  if (cfg.estimator.precondition) e.stats = precondition(std::move(e.stats), graph, eta);
  return e;
}

inline void push_probe(OnlineState& s, Assignment x, int cap) {
  s.probes.push_back(std::move(x));
  while (static_cast<int>(s.probes.size()) > cap) s.probes.pop_front();
}

}  // namespace online_detail

/// Initial state: C_0, g_0 from a burn-in of `burn_in` draws at `start`.
inline OnlineState online_init(const Model& model, const ApproximationGraph& graph, const OnlineConfig& cfg,
                               const VariationalState& start, Rng& rng) {
  cfg.validate();
  OnlineState s;
  s.eta = start;
  std::vector<JointDraw> draws;
  for (int b = 0; b < cfg.burn_in; ++b) {
    draws.push_back(draw_joint_record(graph, s.eta, rng));
    online_detail::push_probe(s, draws.back().x, cfg.probe_count);
  }
  Estimate e = online_detail::raw_stats(graph, model, s.eta, draws, cfg, {}, {});
  s.smoothed = std::move(e.stats);
  s.baselines = std::move(e.mean_u);
  s.residual_ms = std::move(e.mean_sq_residual);
  return s;
}

/// One iteration. Returns the applied damping (0 for a no-op iteration).
inline double step(OnlineState& s, const Model& model, const ApproximationGraph& graph, const OnlineConfig& cfg,
                   Rng& rng) {
  s.t += 1;
  const double w = step_size(s.t);
  auto noop = [&] {
    s.noop_iterations += 1;
    s.trace.push_back({s.z, 0.0});
    return 0.0;
  };

  JointDraw draw;
  try {
    draw = draw_joint_record(graph, s.eta, rng);
  } catch (const InvalidConditional&) {
    return noop();
  } catch (const NumericError&) {
    return noop();
  }
  std::vector<double> clip;
  if (cfg.clip_sd > 0.0)
    for (double ms : s.residual_ms) clip.push_back(ms > 0.0 ? cfg.clip_sd * std::sqrt(ms) : kInf);
  Estimate e;
  try {
    e = online_detail::raw_stats(graph, model, s.eta, std::span<const JointDraw>(&draw, 1), cfg, s.baselines, clip);
  } catch (const NumericError&) {
    // log p overflowed at this draw; skip it rather than abort the run
    return noop();
  }
  RegressionStats raw = std::move(e.stats);
  online_detail::push_probe(s, draw.x, cfg.probe_count);
  for (std::size_t i = 0; i < s.baselines.size(); ++i) {
    s.baselines[i] = (1.0 - w) * s.baselines[i] + w * e.mean_u[i];
    const double r2 = clip.empty() ? e.mean_sq_residual[i] : std::min(e.mean_sq_residual[i], clip[i] * clip[i]);
    s.residual_ms[i] = (1.0 - w) * s.residual_ms[i] + w * r2;
  }
  s.smoothed.blend(raw, w);
  s.window.push_back(std::move(raw));
  while (static_cast<int>(s.window.size()) > cfg.n_avg) s.window.pop_front();

  const VectorXd current = s.eta.flatten();
  const VectorXd proposed = solve_stats(graph, s.smoothed).flatten();
  const std::size_t K = graph.total_dim();
  const VectorXd d = proposed - current;

  s.recent_steps.push_back(d.squaredNorm() / static_cast<double>(K));
  while (static_cast<int>(s.recent_steps.size()) > cfg.z_window) s.recent_steps.pop_front();
  double zsum = 0.0;
  for (double v : s.recent_steps) zsum += v;
  s.z = zsum / static_cast<double>(s.recent_steps.size());

  // per-coordinate damping factors: one alpha for all, or one per block
  VectorXd scale(d.size());
  if (cfg.blockwise_damping) {
    Eigen::Index at = 0;
    for (const auto& b : graph.blocks()) {
      const Eigen::Index n = b.coeff_dim();
      scale.segment(at, n).setConstant(damping_alpha(proposed.segment(at, n), current.segment(at, n), cfg.c_mss,
                                                     static_cast<std::size_t>(n)));
      at += n;
    }
  } else {
    scale.setConstant(damping_alpha(proposed, current, cfg.c_mss, K));
  }
  const std::vector<Assignment> probes(s.probes.begin(), s.probes.end());
  for (int h = 0; h <= cfg.max_halvings; ++h, scale *= 0.5) {
    VariationalState cand = VariationalState::unflatten(graph, current + scale.cwiseProduct(d));
    if (state_is_valid(graph, cand, probes)) {
      s.eta = std::move(cand);
      const double alpha = scale.minCoeff();
      s.trace.push_back({s.z, alpha});
      return alpha;
    }
  }
  return noop();
}

inline bool converged(const OnlineState& s, const OnlineConfig& cfg) {
  return s.t >= cfg.z_window && s.z <= cfg.c_tol;
}

/// solve(sum C_t, sum g_t) over the trailing window of raw statistics.
inline VariationalState finalize_average(const ApproximationGraph& graph, const std::deque<RegressionStats>& window) {
  if (window.empty()) throw std::invalid_argument("finalize_average: empty window");
  RegressionStats sum = window.front();
  for (std::size_t i = 1; i < window.size(); ++i) sum.add(window[i]);
  return solve_stats(graph, sum);
}

inline std::vector<std::pair<std::string, std::string>> config_echo(const OnlineConfig& c) {
  return {{"method", "online"},
          {"estimator", to_string(c.estimator.tag)},
          {"precondition", c.estimator.precondition ? "on" : "off"},
          {"c_mss", format_double(c.c_mss)},
          {"c_tol", format_double(c.c_tol)},
          {"n_avg", std::to_string(c.n_avg)},
          {"max_iters", std::to_string(c.max_iters)},
          {"z_window", std::to_string(c.z_window)},
          {"burn_in", std::to_string(c.burn_in)},
          {"seed", std::to_string(c.seed)},
          {"r2_samples", std::to_string(c.r2_samples)}};
}

/// Runs until converged, then n_avg more iterations, and averages.
inline FitResult fit_online(const Model& model, const ApproximationGraph& graph, const OnlineConfig& cfg,
                            std::optional<VariationalState> start = std::nullopt) {
  Rng rng(cfg.seed);
  const VariationalState init = start ? *start : default_start(model, graph);
  if (!state_is_valid(graph, init, {})) throw ValidityError("initial variational state is not valid");
  OnlineState s = online_init(model, graph, cfg, init, rng);

  FitResult out;
  out.method = "online";
  out.seed = cfg.seed;
  out.config = config_echo(cfg);
  out.warnings = graph.warnings();

  int remaining = -1;
  while (s.t < cfg.max_iters) {
    step(s, model, graph, cfg, rng);
    if (remaining < 0 && converged(s, cfg)) {
      out.converged_at = s.t;
      remaining = cfg.n_avg;
    } else if (remaining > 0) {
      --remaining;
    }
    if (remaining == 0) break;
  }
  out.converged = remaining == 0;
  out.iterations = s.t;
  out.trace = std::move(s.trace);
  if (s.noop_iterations > 0)
    out.warnings.push_back(std::to_string(s.noop_iterations) + " iterations left the state unchanged");

  const std::vector<Assignment> probes(s.probes.begin(), s.probes.end());
  VariationalState final_state = finalize_average(graph, s.window);
  if (state_is_valid(graph, final_state, probes)) {
    out.state = std::move(final_state);
  } else {
    out.warnings.push_back("window average is not a valid state; kept the last iterate");
    out.state = s.eta;
  }
  Rng r2rng(cfg.seed, 1);
  out.r2 = r_squared(model, graph, out.state, cfg.r2_samples, r2rng);
  return out;
}

}  // namespace slrvb

#endif  // SLRVB_ONLINE_HPP
