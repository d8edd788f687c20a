#ifndef SLRVB_MODELS_CONJUGATE_HPP
#define SLRVB_MODELS_CONJUGATE_HPP

#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "slrvb/approx.hpp"
#include "slrvb/errors.hpp"
#include "slrvb/model.hpp"

namespace slrvb {

/// Unknown mean with a N(prior_mean, prior_var) prior and y_n ~ N(mean, obs_var).
inline Model make_conjugate_normal(double prior_mean, double prior_var, double obs_var, std::vector<double> y) {
  if (!(prior_var > 0.0) || !(obs_var > 0.0))
    throw std::invalid_argument("conjugate model needs positive prior and observation variances");

  Model m;
  m.name = "conjugate";
  m.data = std::move(y);
  m.conjugate = ConjugateInfo{prior_mean, prior_var, obs_var};

  VectorXd prior_eta(2);
  prior_eta << prior_mean / prior_var, -0.5 / prior_var;
  m.spec.blocks.push_back(BlockDecl{"mu", Family::gaussian_uni(), {},
                                    PriorDecl::exp_family([prior_eta](const Assignment&) { return prior_eta; }),
                                    std::nullopt, {}, {"mu"}});

  const std::vector<double> data = m.data;
  const double n = static_cast<double>(data.size());
  const double sum = std::accumulate(data.begin(), data.end(), 0.0);
  constexpr double log2pi = 1.8378770664093454835606594728112;

  m.log_joint = [=](const Assignment& x) {
    const double mu = x[0][0];
    double lp = -0.5 * (log2pi + std::log(prior_var)) - 0.5 * (mu - prior_mean) * (mu - prior_mean) / prior_var;
    for (double yi : data) lp += -0.5 * (log2pi + std::log(obs_var)) - 0.5 * (yi - mu) * (yi - mu) / obs_var;
    return lp;
  };
  m.grad = [=](const Assignment& x, std::size_t) -> std::optional<VectorXd> {
    const double mu = x[0][0];
    return VectorXd::Constant(1, -(mu - prior_mean) / prior_var + (sum - n * mu) / obs_var);
  };
  m.hess = [=](const Assignment&, std::size_t) -> std::optional<SparseMatrix> {
    SparseMatrix h(1, 1);
    h.insert(0, 0) = -1.0 / prior_var - n / obs_var;
    return h;
  };
  m.default_start = {VectorXd::Constant(1, prior_mean)};
  return m;
}

/// Exact Gaussian posterior of a conjugate model in natural coordinates.
inline VectorXd exact_posterior_conjugate(const Model& model) {
  if (!model.conjugate) throw UnsupportedEstimator("model '" + model.name + "' has no closed-form posterior");
  const auto& c = *model.conjugate;
  const double n = static_cast<double>(model.data.size());
  const double sum = std::accumulate(model.data.begin(), model.data.end(), 0.0);
  const double prec = 1.0 / c.prior_var + n / c.obs_var;
  const double mean = (c.prior_mean / c.prior_var + sum / c.obs_var) / prec;
  VectorXd eta(2);
  eta << mean * prec, -0.5 * prec;
  return eta;
}

}  // namespace slrvb

#endif  // SLRVB_MODELS_CONJUGATE_HPP
