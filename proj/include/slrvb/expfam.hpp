#ifndef SLRVB_EXPFAM_HPP
#define SLRVB_EXPFAM_HPP

// Exponential-family toolkit for the four conditional families used by the
// approximation. Every density is exp(T(x).eta - Z(eta)) with base measure 1.
//
//   gaussian-uni  T(x) = (x, x^2)                      valid iff eta_2 < 0
//   gaussian-mv   T(x) = (x_j ; x_a x_b for (a,b) in S) valid iff P pos. def.
//                 eta = (h ; theta) with theta_aa = -P_aa / 2, theta_ab = -P_ab
//   inv-gamma     T(x) = (log x, 1/x), eta = (-a-1, -b)
//   beta          T(x) = (log x, log(1-x)), eta = (a-1, b-1)

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "slrvb/errors.hpp"
#include "slrvb/rng.hpp"

namespace slrvb {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
/// Index type matching NaturalOrdering<Eigen::Index>, used only for factorizations.
using FactorMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, Eigen::Index>;

/// Symmetric sparsity pattern of a Gaussian precision matrix. Stores the
/// upper triangle; the diagonal is always present and comes first, followed by
/// the off-diagonal entries in (row, col) order.
class SparsityPattern {
 public:
  struct Entry {
    int row;
    int col;
  };

  SparsityPattern(int dim, const std::vector<std::pair<int, int>>& off_diagonal) : dim_(dim) {
    if (dim < 1) throw std::invalid_argument("sparsity pattern needs dim >= 1");
    std::vector<std::pair<int, int>> upper;
    for (auto [a, b] : off_diagonal) {
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      if (a < 0 || b >= dim) throw std::out_of_range("sparsity pattern entry out of range");
      upper.emplace_back(a, b);
    }
    std::sort(upper.begin(), upper.end());
    upper.erase(std::unique(upper.begin(), upper.end()), upper.end());
    entries_.reserve(static_cast<std::size_t>(dim) + upper.size());
    for (int a = 0; a < dim; ++a) entries_.push_back({a, a});
    for (auto [a, b] : upper) entries_.push_back({a, b});
    for (std::size_t e = 0; e < entries_.size(); ++e) index_[{entries_[e].row, entries_[e].col}] = e;
    build_symbolic();
  }

  static std::shared_ptr<const SparsityPattern> diagonal(int d) {
    return std::make_shared<const SparsityPattern>(d, std::vector<std::pair<int, int>>{});
  }
  static std::shared_ptr<const SparsityPattern> tridiagonal(int d) {
    std::vector<std::pair<int, int>> off;
    for (int a = 0; a + 1 < d; ++a) off.emplace_back(a, a + 1);
    return std::make_shared<const SparsityPattern>(d, off);
  }
  /// Index 0 couples to every other index; indices 1..d-1 form a chain.
  static std::shared_ptr<const SparsityPattern> bordered_tridiagonal(int d) {
    std::vector<std::pair<int, int>> off;
    for (int a = 1; a < d; ++a) off.emplace_back(0, a);
    for (int a = 1; a + 1 < d; ++a) off.emplace_back(a, a + 1);
    return std::make_shared<const SparsityPattern>(d, off);
  }
  static std::shared_ptr<const SparsityPattern> dense(int d) {
    std::vector<std::pair<int, int>> off;
    for (int a = 0; a < d; ++a)
      for (int b = a + 1; b < d; ++b) off.emplace_back(a, b);
    return std::make_shared<const SparsityPattern>(d, off);
  }

  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  std::optional<std::size_t> find(int a, int b) const {
    if (a > b) std::swap(a, b);
    auto it = index_.find({a, b});
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Symmetric matrix with the given entry values on the pattern.
  SparseMatrix to_matrix(const VectorXd& values) const {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(2 * entries_.size());
    for (std::size_t e = 0; e < entries_.size(); ++e) {
      const auto [a, b] = entries_[e];
      trips.emplace_back(a, b, values[static_cast<Eigen::Index>(e)]);
      if (a != b) trips.emplace_back(b, a, values[static_cast<Eigen::Index>(e)]);
    }
    SparseMatrix m(dim_, dim_);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
  }

  /// Entry values of a (symmetric) matrix restricted to the pattern.
  VectorXd restrict(const SparseMatrix& m) const {
    VectorXd out(static_cast<Eigen::Index>(entries_.size()));
    for (std::size_t e = 0; e < entries_.size(); ++e)
      out[static_cast<Eigen::Index>(e)] = m.coeff(entries_[e].row, entries_[e].col);
    return out;
  }

  VectorXd restrict(const MatrixXd& m) const {
    VectorXd out(static_cast<Eigen::Index>(entries_.size()));
    for (std::size_t e = 0; e < entries_.size(); ++e)
      out[static_cast<Eigen::Index>(e)] = m(entries_[e].row, entries_[e].col);
    return out;
  }

  friend bool operator==(const SparsityPattern& x, const SparsityPattern& y) {
    if (x.dim_ != y.dim_ || x.entries_.size() != y.entries_.size()) return false;
    for (std::size_t e = 0; e < x.entries_.size(); ++e)
      if (x.entries_[e].row != y.entries_[e].row || x.entries_[e].col != y.entries_[e].col) return false;
    return true;
  }

  /// Fill-reducing order (new index of old index i is order()[i]) and the
  /// upper triangle of the reordered matrix, computed once per pattern.
  const std::vector<int>& order() const noexcept { return order_; }
  const FactorMatrix& reordered_upper() const noexcept { return upper_; }
  /// Position in reordered_upper().valuePtr() of each pattern entry.
  const std::vector<int>& value_slot() const noexcept { return slot_; }

 private:
  void build_symbolic() {
    std::vector<Eigen::Triplet<double>> trips;
    for (const auto& e : entries_) {
      trips.emplace_back(e.row, e.col, 1.0);
      if (e.row != e.col) trips.emplace_back(e.col, e.row, 1.0);
    }
    SparseMatrix full(dim_, dim_);
    full.setFromTriplets(trips.begin(), trips.end());
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> pinv;
    Eigen::AMDOrdering<int> amd;
    amd(full, pinv);
    const Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm = pinv.inverse();
    order_.assign(perm.indices().data(), perm.indices().data() + dim_);

    std::vector<Eigen::Triplet<double>> up;
    for (const auto& e : entries_) {
      const int a = order_[static_cast<std::size_t>(e.row)], b = order_[static_cast<std::size_t>(e.col)];
      up.emplace_back(std::min(a, b), std::max(a, b), 0.0);
    }
    upper_ = FactorMatrix(dim_, dim_);
    upper_.setFromTriplets(up.begin(), up.end());
    upper_.makeCompressed();
    slot_.resize(entries_.size());
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      const int a = order_[static_cast<std::size_t>(entries_[k].row)];
      const int b = order_[static_cast<std::size_t>(entries_[k].col)];
      const int r = std::min(a, b), c = std::max(a, b);
      const Eigen::Index* begin = upper_.innerIndexPtr() + upper_.outerIndexPtr()[c];
      const Eigen::Index* end = upper_.innerIndexPtr() + upper_.outerIndexPtr()[c + 1];
      slot_[k] = static_cast<int>(std::lower_bound(begin, end, r) - upper_.innerIndexPtr());
    }
  }

  int dim_;
  std::vector<Entry> entries_;
  std::map<std::pair<int, int>, std::size_t> index_;
  std::vector<int> order_;
  FactorMatrix upper_;
  std::vector<int> slot_;
};

enum class FamilyKind { gaussian_uni, gaussian_mv, inv_gamma, beta };

class Family {
 public:
  static Family gaussian_uni() { return Family(FamilyKind::gaussian_uni, nullptr); }
  static Family gaussian_mv(std::shared_ptr<const SparsityPattern> pattern) {
    if (!pattern) throw std::invalid_argument("gaussian-mv needs a sparsity pattern");
    return Family(FamilyKind::gaussian_mv, std::move(pattern));
  }
  static Family inv_gamma() { return Family(FamilyKind::inv_gamma, nullptr); }
  static Family beta() { return Family(FamilyKind::beta, nullptr); }

  FamilyKind kind() const noexcept { return kind_; }
  bool is_gaussian() const noexcept {
    return kind_ == FamilyKind::gaussian_uni || kind_ == FamilyKind::gaussian_mv;
  }
  int point_dim() const noexcept { return kind_ == FamilyKind::gaussian_mv ? pattern_->dim() : 1; }
  int stat_dim() const noexcept {
    return kind_ == FamilyKind::gaussian_mv ? pattern_->dim() + static_cast<int>(pattern_->size()) : 2;
  }
  const SparsityPattern& pattern() const {
    if (!pattern_) throw std::logic_error("family '" + tag() + "' has no sparsity pattern");
    return *pattern_;
  }
  std::shared_ptr<const SparsityPattern> pattern_ptr() const { return pattern_; }

  std::string tag() const {
    switch (kind_) {
      case FamilyKind::gaussian_uni: return "gaussian-uni";
      case FamilyKind::gaussian_mv: return "gaussian-mv";
      case FamilyKind::inv_gamma: return "inv-gamma";
      case FamilyKind::beta: return "beta";
    }
    return "unknown";
  }

 private:
  Family(FamilyKind kind, std::shared_ptr<const SparsityPattern> pattern)
      : kind_(kind), pattern_(std::move(pattern)) {}

  FamilyKind kind_;
  std::shared_ptr<const SparsityPattern> pattern_;
};

namespace detail {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline bool all_finite(const VectorXd& v) { return v.allFinite(); }

inline void check_length(const Family& f, const VectorXd& eta) {
  if (eta.size() != f.stat_dim()) {
    std::ostringstream os;
    os << f.tag() << ": natural parameter length " << eta.size() << ", expected " << f.stat_dim();
    throw ValidityError(os.str());
  }
}

inline std::string describe_point(const VectorXd& x) {
  std::ostringstream os;
  os.precision(17);
  if (x.size() == 1) {
    os << x[0];
  } else {
    os << "vector of length " << x.size();
  }
  return os.str();
}

// Shape parameters (a, b) of inv-gamma and beta from their natural parameters.
inline std::pair<double, double> shapes(const Family& f, const VectorXd& eta) {
  if (f.kind() == FamilyKind::inv_gamma) return {-eta[0] - 1.0, -eta[1]};
  return {eta[0] + 1.0, eta[1] + 1.0};
}

}  // namespace detail

/// Sparse LDL' factorization of a gaussian-mv precision matrix, with the
/// derived mean. Valid only when every pivot exceeds 1e-12 times the largest
/// diagonal entry of P. Works in the pattern's fill-reducing order.
class GaussianFactor {
 public:
  // upper storage with NaturalOrdering<Index> lets Eigen factor the input in place
  using Solver = Eigen::SimplicialLDLT<FactorMatrix, Eigen::Upper, Eigen::NaturalOrdering<Eigen::Index>>;

  static std::optional<GaussianFactor> make(const SparsityPattern& pattern, const VectorXd& eta) {
    const int d = pattern.dim();
    if (eta.size() != d + static_cast<Eigen::Index>(pattern.size()) || !eta.allFinite()) return std::nullopt;
    GaussianFactor out;
    out.order_ = &pattern.order();
    FactorMatrix upper = pattern.reordered_upper();
    double* values = upper.valuePtr();
    double max_diag = 0.0;
    for (std::size_t e = 0; e < pattern.size(); ++e) {
      const auto& ent = pattern.entries()[e];
      const double theta = eta[d + static_cast<Eigen::Index>(e)];
      const double pv = ent.row == ent.col ? -2.0 * theta : -theta;
      values[pattern.value_slot()[e]] = pv;
      if (ent.row == ent.col) max_diag = std::max(max_diag, pv);
    }
    if (!(max_diag > 0.0)) return std::nullopt;
    out.solver_ = std::make_shared<Solver>();
    out.solver_->compute(upper);
    if (out.solver_->info() != Eigen::Success) return std::nullopt;
    const VectorXd& D = out.solver_->vectorD();
    if (!D.allFinite() || D.minCoeff() <= 1e-12 * max_diag) return std::nullopt;
    out.log_det_ = D.array().log().sum();
    out.h_ = eta.head(d);
    out.mean_ = out.solve(out.h_);
    if (!out.mean_.allFinite()) return std::nullopt;
    return out;
  }

  int dim() const { return static_cast<int>(h_.size()); }
  const VectorXd& linear() const { return h_; }
  const VectorXd& mean() const { return mean_; }
  double log_det() const { return log_det_; }

  VectorXd solve(const VectorXd& b) const { return from_order(solver_->solve(to_order(b))); }

  MatrixXd covariance() const {
    const MatrixXd inv = solver_->solve(MatrixXd::Identity(dim(), dim()));
    MatrixXd out(dim(), dim());
    const auto& o = *order_;
    for (int i = 0; i < dim(); ++i)
      for (int j = 0; j < dim(); ++j) out(i, j) = inv(o[static_cast<std::size_t>(i)], o[static_cast<std::size_t>(j)]);
    return out;
  }

  /// log normalizer: h'm/2 - log|P|/2 + d log(2 pi)/2.
  double log_normalizer() const {
    return 0.5 * h_.dot(mean_) - 0.5 * log_det_ + 0.5 * dim() * detail::kLog2Pi;
  }

  /// m + P^{-1/2} z for a vector of standard normals z.
  VectorXd transform(const VectorXd& z) const {
    VectorXd y = z.array() / solver_->vectorD().array().sqrt();
    solver_->matrixU().solveInPlace(y);
    return mean_ + from_order(y);
  }

 private:
  GaussianFactor() = default;

  VectorXd to_order(const VectorXd& v) const {
    VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out[(*order_)[static_cast<std::size_t>(i)]] = v[i];
    return out;
  }
  VectorXd from_order(const VectorXd& v) const {
    VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = v[(*order_)[static_cast<std::size_t>(i)]];
    return out;
  }

  const std::vector<int>* order_ = nullptr;
  VectorXd h_;
  std::shared_ptr<Solver> solver_;
  VectorXd mean_;
  double log_det_ = 0.0;
};

inline bool in_support(const Family& f, const VectorXd& x) {
  if (x.size() != f.point_dim() || !x.allFinite()) return false;
  switch (f.kind()) {
    case FamilyKind::gaussian_uni:
    case FamilyKind::gaussian_mv: return true;
    case FamilyKind::inv_gamma: return x[0] > 0.0;
    case FamilyKind::beta: return x[0] > 0.0 && x[0] < 1.0;
  }
  return false;
}

inline VectorXd sufficient_statistics(const Family& f, const VectorXd& x) {
  if (!in_support(f, x))
    throw DomainError(f.tag() + ": point " + detail::describe_point(x) + " is outside the support");
  VectorXd t(f.stat_dim());
  switch (f.kind()) {
    case FamilyKind::gaussian_uni:
      t << x[0], x[0] * x[0];
      break;
    case FamilyKind::gaussian_mv: {
      const auto& p = f.pattern();
      t.head(p.dim()) = x;
      for (std::size_t e = 0; e < p.size(); ++e) {
        const auto& ent = p.entries()[e];
        t[p.dim() + static_cast<Eigen::Index>(e)] = x[ent.row] * x[ent.col];
      }
      break;
    }
    case FamilyKind::inv_gamma:
      t << std::log(x[0]), 1.0 / x[0];
      break;
    case FamilyKind::beta:
      t << std::log(x[0]), std::log1p(-x[0]);
      break;
  }
  return t;
}

/// T(x) . eta without materializing T for large Gaussian blocks.
inline double statistic_dot(const Family& f, const VectorXd& x, const VectorXd& eta) {
  if (f.kind() != FamilyKind::gaussian_mv) return sufficient_statistics(f, x).dot(eta);
  if (!in_support(f, x))
    throw DomainError(f.tag() + ": point " + detail::describe_point(x) + " is outside the support");
  const auto& p = f.pattern();
  double s = x.dot(eta.head(p.dim()));
  for (std::size_t e = 0; e < p.size(); ++e) {
    const auto& ent = p.entries()[e];
    s += eta[p.dim() + static_cast<Eigen::Index>(e)] * x[ent.row] * x[ent.col];
  }
  return s;
}

inline bool is_valid(const Family& f, const VectorXd& eta) {
  if (eta.size() != f.stat_dim() || !eta.allFinite()) return false;
  switch (f.kind()) {
    case FamilyKind::gaussian_uni: return eta[1] < 0.0;
    case FamilyKind::gaussian_mv: return GaussianFactor::make(f.pattern(), eta).has_value();
    case FamilyKind::inv_gamma:
    case FamilyKind::beta: {
      const auto [a, b] = detail::shapes(f, eta);
      return a > 0.0 && b > 0.0;
    }
  }
  return false;
}

namespace detail {

inline void require_valid(const Family& f, const VectorXd& eta) {
  check_length(f, eta);
  if (!is_valid(f, eta)) {
    std::ostringstream os;
    os.precision(10);
    os << f.tag() << ": natural parameters do not define a proper distribution";
    if (eta.size() <= 4) os << " (" << eta.transpose() << ")";
    throw ValidityError(os.str());
  }
}

inline GaussianFactor require_factor(const Family& f, const VectorXd& eta) {
  check_length(f, eta);
  auto fac = GaussianFactor::make(f.pattern(), eta);
  if (!fac) throw ValidityError("gaussian-mv: precision matrix is not positive definite");
  return std::move(*fac);
}

}  // namespace detail

inline double log_normalizer(const Family& f, const VectorXd& eta) {
  switch (f.kind()) {
    case FamilyKind::gaussian_uni: {
      detail::require_valid(f, eta);
      const double v = -0.5 / eta[1];
      const double m = eta[0] * v;
      return 0.5 * m * m / v + 0.5 * (detail::kLog2Pi + std::log(v));
    }
    case FamilyKind::gaussian_mv: return detail::require_factor(f, eta).log_normalizer();
    case FamilyKind::inv_gamma: {
      detail::require_valid(f, eta);
      const auto [a, b] = detail::shapes(f, eta);
      return std::lgamma(a) - a * std::log(b);
    }
    case FamilyKind::beta: {
      detail::require_valid(f, eta);
      const auto [a, b] = detail::shapes(f, eta);
      return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    }
  }
  throw std::logic_error("unreachable");
}

inline VectorXd mean_parameters(const Family& f, const VectorXd& eta) {
  VectorXd mu(f.stat_dim());
  switch (f.kind()) {
    case FamilyKind::gaussian_uni: {
      detail::require_valid(f, eta);
      const double v = -0.5 / eta[1];
      const double m = eta[0] * v;
      mu << m, m * m + v;
      break;
    }
    case FamilyKind::gaussian_mv: {
      const auto fac = detail::require_factor(f, eta);
      const auto& p = f.pattern();
      const MatrixXd cov = fac.covariance();
      const VectorXd& m = fac.mean();
      mu.head(p.dim()) = m;
      for (std::size_t e = 0; e < p.size(); ++e) {
        const auto [a, b] = p.entries()[e];
        mu[p.dim() + static_cast<Eigen::Index>(e)] = cov(a, b) + m[a] * m[b];
      }
      break;
    }
    case FamilyKind::inv_gamma: {
      detail::require_valid(f, eta);
      const auto [a, b] = detail::shapes(f, eta);
      mu << std::log(b) - boost::math::digamma(a), a / b;
      break;
    }
    case FamilyKind::beta: {
      detail::require_valid(f, eta);
      const auto [a, b] = detail::shapes(f, eta);
      const double dab = boost::math::digamma(a + b);
      mu << boost::math::digamma(a) - dab, boost::math::digamma(b) - dab;
      break;
    }
  }
  return mu;
}

/// Var[T(x)], the Hessian of the log normalizer.
inline MatrixXd conditional_variance(const Family& f, const VectorXd& eta) {
  const int k = f.stat_dim();
  MatrixXd var(k, k);
  switch (f.kind()) {
    case FamilyKind::gaussian_uni: {
      detail::require_valid(f, eta);
      const double v = -0.5 / eta[1];
      const double m = eta[0] * v;
      var << v, 2.0 * m * v, 2.0 * m * v, 4.0 * m * m * v + 2.0 * v * v;
      break;
    }
    case FamilyKind::gaussian_mv: {
      const auto fac = detail::require_factor(f, eta);
      const auto& p = f.pattern();
      const int d = p.dim();
      const MatrixXd S = fac.covariance();
      const VectorXd& m = fac.mean();
      var.topLeftCorner(d, d) = S;
      const auto& ents = p.entries();
      for (std::size_t e = 0; e < ents.size(); ++e) {
        const auto [c, dd] = ents[e];
        const Eigen::Index col = d + static_cast<Eigen::Index>(e);
        for (int a = 0; a < d; ++a) {
          const double cv = S(a, c) * m[dd] + S(a, dd) * m[c];
          var(a, col) = cv;
          var(col, a) = cv;
        }
      }
      for (std::size_t e1 = 0; e1 < ents.size(); ++e1) {
        const auto [a, b] = ents[e1];
        for (std::size_t e2 = e1; e2 < ents.size(); ++e2) {
          const auto [c, dd] = ents[e2];
          const double cv = S(a, c) * S(b, dd) + S(a, dd) * S(b, c) + m[a] * m[c] * S(b, dd) +
                            m[a] * m[dd] * S(b, c) + m[b] * m[c] * S(a, dd) + m[b] * m[dd] * S(a, c);
          const Eigen::Index r = d + static_cast<Eigen::Index>(e1);
          const Eigen::Index s = d + static_cast<Eigen::Index>(e2);
          var(r, s) = cv;
          var(s, r) = cv;
        }
      }
      break;
    }
    case FamilyKind::inv_gamma: {
      detail::require_valid(f, eta);
      const auto [a, b] = detail::shapes(f, eta);
      var << boost::math::trigamma(a), -1.0 / b, -1.0 / b, a / (b * b);
      break;
    }
    case FamilyKind::beta: {
      detail::require_valid(f, eta);
      const auto [a, b] = detail::shapes(f, eta);
      const double tab = boost::math::trigamma(a + b);
      var << boost::math::trigamma(a) - tab, -tab, -tab, boost::math::trigamma(b) - tab;
      break;
    }
  }
  return var;
}

/// Exact draw. Gaussians use the (sparse) Cholesky factor; inv-gamma and beta
/// use inverse-CDF transforms of one uniform so the draw is continuous in eta.
inline VectorXd sample(const Family& f, const VectorXd& eta, Rng& rng) {
  VectorXd x(f.point_dim());
  switch (f.kind()) {
    case FamilyKind::gaussian_uni: {
      detail::require_valid(f, eta);
      const double v = -0.5 / eta[1];
      x[0] = eta[0] * v + std::sqrt(v) * rng.normal();
      return x;
    }
    case FamilyKind::gaussian_mv: {
      const auto fac = detail::require_factor(f, eta);
      VectorXd z(f.point_dim());
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
      return fac.transform(z);
    }
    case FamilyKind::inv_gamma: {
      detail::require_valid(f, eta);
      const auto [a, b] = detail::shapes(f, eta);
      for (int attempt = 0; attempt < 64; ++attempt) {
        const double g = boost::math::gamma_p_inv(a, rng.uniform_open());
        x[0] = b / g;
        if (std::isfinite(x[0]) && x[0] > 0.0) return x;
      }
      throw NumericError("inv-gamma: sampler produced no finite draw");
    }
    case FamilyKind::beta: {
      detail::require_valid(f, eta);
      const auto [a, b] = detail::shapes(f, eta);
      for (int attempt = 0; attempt < 64; ++attempt) {
        x[0] = boost::math::ibeta_inv(a, b, rng.uniform_open());
        if (x[0] > 0.0 && x[0] < 1.0) return x;
      }
      throw NumericError("beta: sampler produced no draw strictly inside (0,1)");
    }
  }
  throw std::logic_error("unreachable");
}

/// Log density T(x).eta - Z(eta).
inline double log_density(const Family& f, const VectorXd& eta, const VectorXd& x) {
  return statistic_dot(f, x, eta) - log_normalizer(f, eta);
}

struct DrawWithDensity {
  VectorXd x;
  double log_density = 0.0;
};

/// sample() and log_density() at the draw, factoring a gaussian-mv precision
/// once. nullopt when eta is not a proper distribution.
inline std::optional<DrawWithDensity> try_sample_with_density(const Family& f, const VectorXd& eta, Rng& rng) {
  detail::check_length(f, eta);
  if (f.kind() != FamilyKind::gaussian_mv) {
    if (!is_valid(f, eta)) return std::nullopt;
    DrawWithDensity d;
    d.x = sample(f, eta, rng);
    d.log_density = log_density(f, eta, d.x);
    return d;
  }
  if (!eta.allFinite()) return std::nullopt;
  const auto fac = GaussianFactor::make(f.pattern(), eta);
  if (!fac) return std::nullopt;
  VectorXd z(f.point_dim());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  DrawWithDensity d;
  d.x = fac->transform(z);
  d.log_density = statistic_dot(f, d.x, eta) - fac->log_normalizer();
  return d;
}

// ---------------------------------------------------------------------------
// Gaussian helpers shared by the gradient estimators.

/// Gradient in x of T(x).eta for a Gaussian family: h - P x.
inline VectorXd gaussian_dot_gradient(const Family& f, const VectorXd& x, const VectorXd& eta) {
  if (f.kind() == FamilyKind::gaussian_uni) {
    VectorXd g(1);
    g[0] = eta[0] + 2.0 * eta[1] * x[0];
    return g;
  }
  const auto& p = f.pattern();
  VectorXd g = eta.head(p.dim());
  for (std::size_t e = 0; e < p.size(); ++e) {
    const auto [a, b] = p.entries()[e];
    const double th = eta[p.dim() + static_cast<Eigen::Index>(e)];
    if (a == b) {
      g[a] += 2.0 * th * x[a];
    } else {
      g[a] += th * x[b];
      g[b] += th * x[a];
    }
  }
  return g;
}

/// Hessian in x of T(x).eta, as matrix entries on the pattern (-P).
inline VectorXd gaussian_dot_hessian(const Family& f, const VectorXd& eta) {
  if (f.kind() == FamilyKind::gaussian_uni) {
    VectorXd h(1);
    h[0] = 2.0 * eta[1];
    return h;
  }
  const auto& p = f.pattern();
  VectorXd h(static_cast<Eigen::Index>(p.size()));
  for (std::size_t e = 0; e < p.size(); ++e) {
    const auto [a, b] = p.entries()[e];
    const double th = eta[p.dim() + static_cast<Eigen::Index>(e)];
    h[static_cast<Eigen::Index>(e)] = a == b ? 2.0 * th : th;
  }
  return h;
}

/// Natural parameters (h, theta) of the Gaussian whose log density has linear
/// term `linear` and Hessian `hessian` (matrix entries on the pattern).
inline VectorXd gaussian_naturals_from(const Family& f, const VectorXd& linear, const VectorXd& hessian) {
  VectorXd eta(f.stat_dim());
  const int d = f.point_dim();
  eta.head(d) = linear;
  if (f.kind() == FamilyKind::gaussian_uni) {
    eta[1] = 0.5 * hessian[0];
    return eta;
  }
  const auto& p = f.pattern();
  for (std::size_t e = 0; e < p.size(); ++e) {
    const auto [a, b] = p.entries()[e];
    eta[d + static_cast<Eigen::Index>(e)] = a == b ? 0.5 * hessian[static_cast<Eigen::Index>(e)]
                                                   : hessian[static_cast<Eigen::Index>(e)];
  }
  return eta;
}

/// Matrix-entry pattern of the Gaussian-uni family seen as a 1x1 pattern.
inline const SparsityPattern& gaussian_pattern(const Family& f) {
  static const SparsityPattern scalar(1, {});
  return f.kind() == FamilyKind::gaussian_uni ? scalar : f.pattern();
}

/// Mean and precision of any Gaussian family at eta.
struct GaussianMoments {
  VectorXd mean;
  SparseMatrix precision;
};

inline GaussianMoments gaussian_moments(const Family& f, const VectorXd& eta) {
  if (f.kind() == FamilyKind::gaussian_uni) {
    detail::require_valid(f, eta);
    GaussianMoments gm;
    gm.mean = VectorXd::Constant(1, -eta[0] / (2.0 * eta[1]));
    gm.precision = SparseMatrix(1, 1);
    gm.precision.insert(0, 0) = -2.0 * eta[1];
    return gm;
  }
  auto fac = detail::require_factor(f, eta);
  const auto& p = f.pattern();
  VectorXd pvals(static_cast<Eigen::Index>(p.size()));
  for (std::size_t e = 0; e < p.size(); ++e) {
    const auto [a, b] = p.entries()[e];
    const double theta = eta[p.dim() + static_cast<Eigen::Index>(e)];
    pvals[static_cast<Eigen::Index>(e)] = a == b ? -2.0 * theta : -theta;
  }
  return {fac.mean(), p.to_matrix(pvals)};
}

}  // namespace slrvb

#endif  // SLRVB_EXPFAM_HPP
