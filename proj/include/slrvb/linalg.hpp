#ifndef SLRVB_LINALG_HPP
#define SLRVB_LINALG_HPP

#include <cmath>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "slrvb/errors.hpp"

namespace slrvb {

namespace linalg_detail {

inline bool is_symmetric(const Eigen::MatrixXd& a) {
  const double scale = a.cwiseAbs().maxCoeff();
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (scale > 0.0 ? scale : 1.0);
}

inline std::optional<Eigen::VectorXd> try_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, bool symmetric) {
  Eigen::VectorXd x;
  if (symmetric) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success) return std::nullopt;
    const auto d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (!(dmax > 0.0) || d.cwiseAbs().minCoeff() <= 1e-14 * dmax) return std::nullopt;
    x = ldlt.solve(b);
  } else {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    lu.setThreshold(1e-14);
    if (!lu.isInvertible()) return std::nullopt;
    x = lu.solve(b);
  }
  if (!x.allFinite()) return std::nullopt;
  return x;
}

}  // namespace linalg_detail

/// Solves A x = b. Symmetric A uses an LDL' factorization, anything else a
/// full-pivot LU. On failure adds 1e-10 * trace(A) to the diagonal, growing
/// it tenfold up to three times, before raising a conditioning error.
inline Eigen::VectorXd robust_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const std::string& block) {
  if (a.rows() != a.cols() || a.rows() != b.size())
    throw std::invalid_argument("robust_solve: dimension mismatch in block '" + block + "'");
  if (!a.allFinite() || !b.allFinite()) throw ConditioningError(block, "system contains non-finite entries");
  const bool sym = linalg_detail::is_symmetric(a);
  if (auto x = linalg_detail::try_solve(a, b, sym)) return *x;
  double jitter = 1e-10 * std::abs(a.trace());
  if (!(jitter > 0.0)) jitter = 1e-10;
  for (int attempt = 0; attempt < 3; ++attempt, jitter *= 10.0) {
    Eigen::MatrixXd aj = a;
    aj.diagonal().array() += jitter;
    if (auto x = linalg_detail::try_solve(aj, b, sym)) return *x;
  }
  throw ConditioningError(block, "matrix is singular after jitter escalation");
}

}  // namespace slrvb

#endif  // SLRVB_LINALG_HPP
