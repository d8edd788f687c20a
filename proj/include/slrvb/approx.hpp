#ifndef SLRVB_APPROX_HPP
#define SLRVB_APPROX_HPP

// Hierarchical approximation q(x) = prod_i q(x_i | x_pa(i)). Each conditional
// re-uses the prior's natural parameters and adds a feature-weighted offset:
//
//   eta_i(x_pa) = prior_link_i(x_pa) + sum_j psi_j(x_pa) * coeff_i^(j)

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "slrvb/errors.hpp"
#include "slrvb/expfam.hpp"
#include "slrvb/rng.hpp"

namespace slrvb {

/// Values of every block, indexed by block position in the graph.
using Assignment = std::vector<VectorXd>;
using PriorLink = std::function<VectorXd(const Assignment&)>;
using Feature = std::function<double(const Assignment&)>;

struct FeatureBasis {
  std::vector<Feature> features;
  std::vector<bool> shrink;
  std::vector<std::string> labels;

  static FeatureBasis constant() {
    return {{[](const Assignment&) { return 1.0; }}, {false}, {"1"}};
  }

  /// (1, x, x^2, ..., x^degree) in the scalar value of block `parent`.
  static FeatureBasis polynomial(std::size_t parent, int degree, const std::string& parent_name) {
    FeatureBasis b = constant();
    for (int p = 1; p <= degree; ++p) {
      b.features.emplace_back([parent, p](const Assignment& x) { return std::pow(x[parent][0], p); });
      b.shrink.push_back(true);
      b.labels.push_back(p == 1 ? parent_name : parent_name + "^" + std::to_string(p));
    }
    return b;
  }

  std::size_t size() const noexcept { return features.size(); }

  VectorXd evaluate(const Assignment& x) const {
    VectorXd psi(static_cast<Eigen::Index>(features.size()));
    for (std::size_t j = 0; j < features.size(); ++j) psi[static_cast<Eigen::Index>(j)] = features[j](x);
    return psi;
  }
};

/// Stored value x = shift + scale * u, where u follows the block's family.
struct Affine {
  double shift = 0.0;
  double scale = 1.0;

  bool identity() const noexcept { return shift == 0.0 && scale == 1.0; }
};

enum class PriorKind { exponential_family, flat, half_cauchy, unmapped };

struct PriorDecl {
  PriorKind kind = PriorKind::exponential_family;
  PriorLink link;
  double scale = 1.0;
  /// Proper but nearly flat; initialized like an improper prior.
  bool diffuse = false;
  std::string label;

  static PriorDecl exp_family(PriorLink link, bool diffuse = false) {
    return {PriorKind::exponential_family, std::move(link), 1.0, diffuse, "exponential-family"};
  }
  static PriorDecl flat() { return {PriorKind::flat, nullptr, 1.0, false, "flat"}; }
  static PriorDecl half_cauchy(double scale) {
    return {PriorKind::half_cauchy, nullptr, scale, false, "half-cauchy"};
  }
  static PriorDecl unmapped(std::string label) {
    return {PriorKind::unmapped, nullptr, 1.0, false, std::move(label)};
  }
};

struct BlockDecl {
  std::string name;
  Family family;
  std::vector<std::size_t> parents;
  PriorDecl prior;
  std::optional<FeatureBasis> basis;
  Affine transform;
  std::vector<std::string> element_names;
};

/// Block declarations in generative order.
struct ModelSpec {
  std::vector<BlockDecl> blocks;
};

struct Block {
  std::string id;
  Family family;
  std::vector<std::size_t> parents;
  PriorLink prior_link;
  FeatureBasis basis;
  Affine transform;
  std::vector<std::string> element_names;
  bool weak_prior = false;

  int stat_dim() const { return family.stat_dim(); }
  int feature_count() const { return static_cast<int>(basis.size()); }
  int coeff_dim() const { return feature_count() * stat_dim(); }
  bool top_level() const { return parents.empty(); }
};

class ApproximationGraph {
 public:
  ApproximationGraph() = default;
  ApproximationGraph(std::vector<Block> blocks, std::vector<std::string> warnings)
      : blocks_(std::move(blocks)), warnings_(std::move(warnings)) {}

  std::size_t size() const noexcept { return blocks_.size(); }
  const Block& block(std::size_t i) const { return blocks_.at(i); }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  /// K, the total number of variational coefficients.
  std::size_t total_dim() const {
    std::size_t k = 0;
    for (const auto& b : blocks_) k += static_cast<std::size_t>(b.coeff_dim());
    return k;
  }

  std::optional<std::size_t> index_of(const std::string& id) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      if (blocks_[i].id == id) return i;
    return std::nullopt;
  }

  /// Names of every scalar unknown, in block order.
  std::vector<std::string> scalar_names() const {
    std::vector<std::string> names;
    for (const auto& b : blocks_)
      for (const auto& n : b.element_names) names.push_back(n);
    return names;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += static_cast<std::size_t>(b.family.point_dim());
    return n;
  }

 private:
  std::vector<Block> blocks_;
  std::vector<std::string> warnings_;
};

/// Coefficients coeff_i^(1..J) of every block, each flattened feature-major.
struct VariationalState {
  std::vector<VectorXd> coeffs;

  std::size_t total_dim() const {
    std::size_t k = 0;
    for (const auto& c : coeffs) k += static_cast<std::size_t>(c.size());
    return k;
  }

  VectorXd flatten() const {
    VectorXd out(static_cast<Eigen::Index>(total_dim()));
    Eigen::Index at = 0;
    for (const auto& c : coeffs) {
      out.segment(at, c.size()) = c;
      at += c.size();
    }
    return out;
  }

  static VariationalState unflatten(const ApproximationGraph& graph, const VectorXd& flat) {
    if (static_cast<std::size_t>(flat.size()) != graph.total_dim())
      throw std::invalid_argument("flat coefficient vector has the wrong length");
    VariationalState s;
    Eigen::Index at = 0;
    for (const auto& b : graph.blocks()) {
      s.coeffs.push_back(flat.segment(at, b.coeff_dim()));
      at += b.coeff_dim();
    }
    return s;
  }

  friend bool operator==(const VariationalState& a, const VariationalState& b) {
    if (a.coeffs.size() != b.coeffs.size()) return false;
    for (std::size_t i = 0; i < a.coeffs.size(); ++i)
      if (a.coeffs[i].size() != b.coeffs[i].size() || a.coeffs[i] != b.coeffs[i]) return false;
    return true;
  }
};

// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> default_element_names(const std::string& name, int dim) {
  if (dim == 1) return {name};
  std::vector<std::string> out;
  for (int i = 1; i <= dim; ++i) out.push_back(name + "[" + std::to_string(i) + "]");
  return out;
}

inline std::vector<std::string> independence_warnings(const std::vector<Block>& blocks) {
  std::vector<std::string> top;
  for (const auto& b : blocks)
    if (b.top_level()) top.push_back(b.id);
  if (top.size() < 2) return {};
  std::string msg = "blocks";
  for (std::size_t i = 0; i < top.size(); ++i) msg += (i ? ", " : " ") + top[i];
  msg += " are mutually independent in the approximation; declare feature dependencies to couple them";
  return {msg};
}

}  // namespace detail

inline ApproximationGraph build_approximation(const ModelSpec& spec) {
  std::vector<Block> blocks;
  blocks.reserve(spec.blocks.size());
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    const BlockDecl& d = spec.blocks[i];
    for (std::size_t p : d.parents)
      if (p >= i)
        throw std::invalid_argument("block '" + d.name + "' lists a parent that does not precede it");

    Block b{d.name, d.family, d.parents, nullptr, d.basis.value_or(FeatureBasis::constant()),
            d.transform, d.element_names, d.prior.diffuse};
    if (b.basis.size() == 0)
      throw std::invalid_argument("block '" + d.name + "' has an empty feature basis");

    switch (d.prior.kind) {
      case PriorKind::exponential_family:
        if (!d.prior.link) throw UnsupportedPrior("block '" + d.name + "' has no prior link");
        b.prior_link = d.prior.link;
        break;
      case PriorKind::flat: {
        if (!d.family.is_gaussian())
          throw UnsupportedPrior("block '" + d.name + "': a flat prior maps only to a Gaussian conditional, not " +
                                 d.family.tag());
        const int k = d.family.stat_dim();
        b.prior_link = [k](const Assignment&) { return VectorXd::Zero(k).eval(); };
        b.weak_prior = true;
        break;
      }
      case PriorKind::half_cauchy: {
        // inv-gamma(1/2, s^2/2) on the squared scale
        const double s = d.prior.scale;
        if (!(s > 0.0)) throw UnsupportedPrior("block '" + d.name + "': half-cauchy scale must be positive");
        b.family = Family::inv_gamma();
        b.prior_link = [s](const Assignment&) {
          VectorXd eta(2);
          eta << -1.5, -0.5 * s * s;
          return eta;
        };
        break;
      }
      case PriorKind::unmapped:
        throw UnsupportedPrior("block '" + d.name + "': no exponential-family mapping for prior '" +
                               d.prior.label + "'");
    }
    if (!b.transform.identity() && b.family.point_dim() != 1)
      throw std::invalid_argument("block '" + d.name + "': affine transforms apply to scalar blocks only");
    if (b.element_names.empty()) b.element_names = detail::default_element_names(b.id, b.family.point_dim());
    if (static_cast<int>(b.element_names.size()) != b.family.point_dim())
      throw std::invalid_argument("block '" + d.name + "': element name count does not match dimension");
    blocks.push_back(std::move(b));
  }
  auto warnings = detail::independence_warnings(blocks);
  return ApproximationGraph(std::move(blocks), std::move(warnings));
}

/// Sum of feature-weighted coefficients, without the prior part.
inline VectorXd offset_naturals(const Block& block, const Assignment& parents, const VectorXd& coeffs) {
  const int k = block.stat_dim();
  VectorXd out = coeffs.head(k);
  for (std::size_t j = 1; j < block.basis.size(); ++j)
    out += block.basis.features[j](parents) * coeffs.segment(static_cast<Eigen::Index>(j) * k, k);
  return out;
}

inline VectorXd conditional_naturals(const Block& block, const Assignment& parents, const VectorXd& coeffs) {
  if (coeffs.size() != block.coeff_dim())
    throw std::invalid_argument("block '" + block.id + "': coefficient vector has the wrong length");
  VectorXd eta = block.prior_link(parents) + offset_naturals(block, parents, coeffs);
  if (!is_valid(block.family, eta)) throw InvalidConditional(block.id, "natural parameters are not proper");
  return eta;
}

/// The family-space variable u for a stored value x.
inline VectorXd to_family_space(const Block& block, const VectorXd& x) {
  if (block.transform.identity()) return x;
  return ((x.array() - block.transform.shift) / block.transform.scale).matrix();
}

inline VectorXd from_family_space(const Block& block, const VectorXd& u) {
  if (block.transform.identity()) return u;
  return (block.transform.shift + block.transform.scale * u.array()).matrix();
}

inline bool in_block_support(const Block& block, const VectorXd& x) {
  return in_support(block.family, to_family_space(block, x));
}

/// log q_i(x_i | x_pa) for known conditional naturals.
inline double block_log_density(const Block& block, const VectorXd& eta, const VectorXd& x) {
  const VectorXd u = to_family_space(block, x);
  double lp = log_density(block.family, eta, u);
  if (!block.transform.identity()) lp -= std::log(std::abs(block.transform.scale));
  return lp;
}

/// Sufficient statistics of a stored value (in family space).
inline VectorXd block_statistics(const Block& block, const VectorXd& x) {
  return sufficient_statistics(block.family, to_family_space(block, x));
}

/// One ancestral draw together with the per-block conditionals it used.
struct JointDraw {
  Assignment x;
  std::vector<VectorXd> naturals;
  std::vector<double> block_log_q;
  double log_q = 0.0;
};

/// Ancestral sampling in graph order. Each block draws from its own
/// sub-stream seeded from `rng`, so a block's draw does not shift the random
/// numbers seen by later blocks.
inline JointDraw draw_joint_record(const ApproximationGraph& graph, const VariationalState& state, Rng& rng) {
  const std::size_t n = graph.size();
  std::vector<std::uint64_t> seeds(n);
  for (auto& s : seeds) s = rng.next_seed();
  JointDraw out;
  out.x.resize(n);
  out.naturals.resize(n);
  out.block_log_q.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Block& b = graph.block(i);
    if (state.coeffs[i].size() != b.coeff_dim())
      throw std::invalid_argument("block '" + b.id + "': coefficient vector has the wrong length");
    VectorXd eta = b.prior_link(out.x) + offset_naturals(b, out.x, state.coeffs[i]);
    Rng sub(seeds[i]);
    auto d = try_sample_with_density(b.family, eta, sub);
    if (!d) throw InvalidConditional(b.id, "natural parameters are not proper");
    out.x[i] = from_family_space(b, d->x);
    out.block_log_q[i] = d->log_density;
    if (!b.transform.identity()) out.block_log_q[i] -= std::log(std::abs(b.transform.scale));
    out.log_q += out.block_log_q[i];
    out.naturals[i] = std::move(eta);
  }
  return out;
}

inline Assignment draw_joint(const ApproximationGraph& graph, const VariationalState& state, Rng& rng) {
  return draw_joint_record(graph, state, rng).x;
}

inline double log_q(const ApproximationGraph& graph, const VariationalState& state, const Assignment& x) {
  if (x.size() != graph.size()) throw std::invalid_argument("assignment does not cover every block");
  double total = 0.0;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const Block& b = graph.block(i);
    if (!in_block_support(b, x[i]))
      throw DomainError("block '" + b.id + "': value outside the support of " + b.family.tag());
    total += block_log_density(b, conditional_naturals(b, x, state.coeffs[i]), x[i]);
  }
  return total;
}

/// Weakly-informative offset: N(0, 100) on every coordinate of a Gaussian block.
inline constexpr double kWeakPriorVariance = 100.0;

inline VariationalState init_state(const ApproximationGraph& graph) {
  VariationalState s;
  for (const auto& b : graph.blocks()) {
    VectorXd c = VectorXd::Zero(b.coeff_dim());
    if (b.weak_prior && b.family.is_gaussian()) {
      const int d = b.family.point_dim();
      for (int a = 0; a < d; ++a) c[d + a] = -0.5 / kWeakPriorVariance;
    }
    s.coeffs.push_back(std::move(c));
  }
  return s;
}

/// Checks every conditional of the state: top-level blocks once, blocks with
/// parents at each probe assignment. Returns the first offending block id.
inline std::optional<std::string> find_invalid_block(const ApproximationGraph& graph,
                                                     const VariationalState& state,
                                                     std::span<const Assignment> probes) {
  const Assignment empty(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const Block& b = graph.block(i);
    if (state.coeffs[i].size() != b.coeff_dim() || !state.coeffs[i].allFinite()) return b.id;
    auto check = [&](const Assignment& x) {
      return is_valid(b.family, VectorXd(b.prior_link(x) + offset_naturals(b, x, state.coeffs[i])));
    };
    if (b.top_level()) {
      if (!check(probes.empty() ? empty : probes.front())) return b.id;
    } else {
      for (const auto& p : probes)
        if (!check(p)) return b.id;
    }
  }
  return std::nullopt;
}

inline bool state_is_valid(const ApproximationGraph& graph, const VariationalState& state,
                           std::span<const Assignment> probes) {
  return !find_invalid_block(graph, state, probes).has_value();
}

/// Stored values of every scalar unknown, in `scalar_names` order.
inline VectorXd flatten_assignment(const Assignment& x) {
  Eigen::Index n = 0;
  for (const auto& v : x) n += v.size();
  VectorXd out(n);
  Eigen::Index at = 0;
  for (const auto& v : x) {
    out.segment(at, v.size()) = v;
    at += v.size();
  }
  return out;
}

inline Assignment unflatten_assignment(const ApproximationGraph& graph, const VectorXd& flat) {
  Assignment x;
  Eigen::Index at = 0;
  for (const auto& b : graph.blocks()) {
    const int d = b.family.point_dim();
    if (at + d > flat.size()) throw std::invalid_argument("flat assignment too short");
    x.push_back(flat.segment(at, d));
    at += d;
  }
  if (at != flat.size()) throw std::invalid_argument("flat assignment too long");
  return x;
}

}  // namespace slrvb

#endif  // SLRVB_APPROX_HPP
