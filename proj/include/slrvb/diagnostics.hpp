#ifndef SLRVB_DIAGNOSTICS_HPP
#define SLRVB_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "slrvb/approx.hpp"
#include "slrvb/batch.hpp"
#include "slrvb/model.hpp"
#include "slrvb/quality.hpp"
#include "slrvb/rng.hpp"

namespace slrvb {

/// |f| / sqrt(K) from one fixed-seed batch evaluation.
inline double natgrad_norm(const Model& model, const ApproximationGraph& graph, const VariationalState& state,
                           std::uint64_t seed, int n_samples, EstimatorKind estimator = {}) {
  BatchConfig cfg;
  cfg.seed_star = seed;
  cfg.estimator = estimator;
  const VectorXd f = batch_natural_gradient(model, graph, state, cfg, n_samples);
  return f.norm() / std::sqrt(static_cast<double>(f.size()));
}

struct VariableSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
};

/// Linear interpolation between order statistics (type 7).
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline VariableSummary summarize(std::string name, std::vector<double> v) {
  VariableSummary s;
  s.name = std::move(name);
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  s.mean = m;
  s.sd = v.size() > 1 ? std::sqrt(sample_variance(v)) : 0.0;
  std::sort(v.begin(), v.end());
  s.q05 = quantile_sorted(v, 0.05);
  s.q50 = quantile_sorted(v, 0.50);
  s.q95 = quantile_sorted(v, 0.95);
  return s;
}

/// Joint draws from q as rows of scalar values in `scalar_names` order.
inline std::vector<std::vector<double>> draw_rows(const ApproximationGraph& graph, const VariationalState& state,
                                                  int n, Rng& rng) {
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    const VectorXd flat = flatten_assignment(draw_joint(graph, state, rng));
    rows.emplace_back(flat.data(), flat.data() + flat.size());
  }
  return rows;
}

inline std::vector<VariableSummary> summarize_columns(const std::vector<std::string>& names,
                                                      const std::vector<std::vector<double>>& rows) {
  std::vector<VariableSummary> out;
  out.reserve(names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    std::vector<double> col;
    col.reserve(rows.size());
    for (const auto& r : rows) col.push_back(r.at(j));
    out.push_back(summarize(names[j], std::move(col)));
  }
  return out;
}

inline std::vector<VariableSummary> posterior_summaries(const ApproximationGraph& graph,
                                                        const VariationalState& state, int n_samples, Rng& rng) {
  return summarize_columns(graph.scalar_names(), draw_rows(graph, state, n_samples, rng));
}

struct QualityReport {
  RSquared r2;
  double natgrad_norm = 0.0;
  std::vector<VariableSummary> summaries;
};

inline QualityReport quality_report(const Model& model, const ApproximationGraph& graph, const VariationalState& state,
                                    std::uint64_t seed, int r2_samples, int grad_samples, EstimatorKind estimator,
                                    int summary_samples) {
  QualityReport q;
  Rng r2rng(seed, 1);
  q.r2 = r_squared(model, graph, state, r2_samples, r2rng);
  q.natgrad_norm = natgrad_norm(model, graph, state, seed, grad_samples, estimator);
  Rng srng(seed, 2);
  q.summaries = posterior_summaries(graph, state, summary_samples, srng);
  return q;
}

}  // namespace slrvb

#endif  // SLRVB_DIAGNOSTICS_HPP
