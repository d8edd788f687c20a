#ifndef SLRVB_QUALITY_HPP
#define SLRVB_QUALITY_HPP

#include <cmath>
#include <vector>

#include "slrvb/approx.hpp"
#include "slrvb/errors.hpp"
#include "slrvb/model.hpp"
#include "slrvb/rng.hpp"

namespace slrvb {

inline constexpr int kDefaultR2Samples = 1000;

struct RSquared {
  double value = 0.0;
  double residual_variance = 0.0;
  double log_p_variance = 0.0;
  int n_samples = 0;
  /// Set when MC noise pushed the estimate above 1. The raw value is kept.
  bool above_one = false;
};

/// Sample variance with the n - 1 denominator.
inline double sample_variance(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / (n - 1.0);
}

/// 1 - Var[log p - log q] / Var[log p] under q.
inline RSquared r_squared(const Model& model, const ApproximationGraph& graph, const VariationalState& state,
                          int n_samples, Rng& rng) {
  if (n_samples < 10) throw std::invalid_argument("r_squared needs at least 10 samples");
  std::vector<double> lp(static_cast<std::size_t>(n_samples)), resid(static_cast<std::size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) {
    const JointDraw d = draw_joint_record(graph, state, rng);
    const double p = model.log_joint(d.x);
    if (!std::isfinite(p)) throw NumericError("log joint is not finite at a draw from q");
    lp[static_cast<std::size_t>(s)] = p;
    resid[static_cast<std::size_t>(s)] = p - d.log_q;
  }
  RSquared out;
  out.n_samples = n_samples;
  out.log_p_variance = sample_variance(lp);
  out.residual_variance = sample_variance(resid);
  if (!(out.log_p_variance > 0.0)) throw UndefinedQuality("log p has zero variance under q; R^2 is undefined");
  out.value = 1.0 - out.residual_variance / out.log_p_variance;
  out.above_one = out.value > 1.0;
  return out;
}

}  // namespace slrvb

#endif  // SLRVB_QUALITY_HPP
