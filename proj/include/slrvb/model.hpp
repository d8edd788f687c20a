#ifndef SLRVB_MODEL_HPP
#define SLRVB_MODEL_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "slrvb/approx.hpp"

namespace slrvb {

/// Parameters of the known-variance Gaussian-mean model, kept so the exact
/// posterior can be recovered.
struct ConjugateInfo {
  double prior_mean = 0.0;
  double prior_var = 1.0;
  double obs_var = 1.0;
};

/// Unnormalized log joint log p(x, y) plus optional derivatives in one block.
struct Model {
  std::string name;
  ModelSpec spec;
  std::vector<double> data;

  std::function<double(const Assignment&)> log_joint;
  /// d log p / d x_i with all other blocks held fixed; nullopt when unavailable.
  std::function<std::optional<VectorXd>(const Assignment&, std::size_t)> grad;
  /// d^2 log p / d x_i^2 (full symmetric sparse matrix); nullopt when unavailable.
  std::function<std::optional<SparseMatrix>(const Assignment&, std::size_t)> hess;
  /// Optional analytic E_q[log p(y | x)] per block. No built-in model provides one.
  std::function<std::optional<double>(const Assignment&, std::size_t)> expected_log_lik;

  /// A point with finite log joint, used to start reference chains.
  Assignment default_start;
  std::optional<ConjugateInfo> conjugate;

  std::optional<VectorXd> gradient(const Assignment& x, std::size_t block) const {
    if (!grad) return std::nullopt;
    return grad(x, block);
  }
  std::optional<SparseMatrix> hessian(const Assignment& x, std::size_t block) const {
    if (!hess) return std::nullopt;
    return hess(x, block);
  }
};

}  // namespace slrvb

#endif  // SLRVB_MODEL_HPP
