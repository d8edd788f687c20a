#ifndef SLRVB_FIT_DOCUMENT_HPP
#define SLRVB_FIT_DOCUMENT_HPP

// JSON fit document: everything needed to rebuild the model and the fitted
// approximation, plus the quality report and a thinned convergence trace.
// Wall-clock time is deliberately not stored so seeded runs are byte-identical.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"

#include "slrvb/approx.hpp"
#include "slrvb/errors.hpp"
#include "slrvb/fit_result.hpp"
#include "slrvb/zoo.hpp"

namespace slrvb {

inline constexpr int kFitSchemaVersion = 1;
inline constexpr std::size_t kTraceKeep = 200;

struct BlockRecord {
  std::string id;
  std::string family;
  std::vector<std::string> features;
  std::vector<double> coeffs;
};

struct FitDocument {
  int schema_version = kFitSchemaVersion;
  ZooChoice model;
  std::vector<double> data;
  std::string method;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<BlockRecord> blocks;
  RSquared r2;
  int iterations = 0;
  bool converged = false;
  int converged_at = -1;
  double grad_norm = -1.0;
  std::size_t trace_length = 0;
  /// (iteration, z, alpha), thinned to at most kTraceKeep points plus the last.
  std::vector<std::tuple<int, double, double>> trace;
  std::vector<std::string> warnings;

  /// Coefficients as a state for `graph`; checks ids, families and lengths.
  VariationalState state(const ApproximationGraph& graph) const {
    if (blocks.size() != graph.size())
      throw SchemaError("document has " + std::to_string(blocks.size()) + " blocks, model has " +
                        std::to_string(graph.size()));
    VariationalState s;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const Block& b = graph.block(i);
      const BlockRecord& r = blocks[i];
      if (r.id != b.id || r.family != b.family.tag() || static_cast<int>(r.features.size()) != b.feature_count() ||
          static_cast<int>(r.coeffs.size()) != b.coeff_dim())
        throw SchemaError("block '" + r.id + "' does not match model block '" + b.id + "'");
      s.coeffs.push_back(Eigen::Map<const VectorXd>(r.coeffs.data(), static_cast<Eigen::Index>(r.coeffs.size())));
    }
    return s;
  }
};

inline FitDocument make_fit_document(const ZooChoice& choice, const Model& model, const ApproximationGraph& graph,
                                     const FitResult& fit) {
  FitDocument d;
  d.model = choice;
  d.data = model.data;
  d.method = fit.method;
  d.config = fit.config;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const Block& b = graph.block(i);
    const VectorXd& c = fit.state.coeffs.at(i);
    d.blocks.push_back({b.id, b.family.tag(), b.basis.labels, std::vector<double>(c.data(), c.data() + c.size())});
  }
  d.r2 = fit.r2;
  d.iterations = fit.iterations;
  d.converged = fit.converged;
  d.converged_at = fit.converged_at;
  d.grad_norm = fit.grad_norm;
  d.trace_length = fit.trace.size();
  const std::size_t n = fit.trace.size();
  const std::size_t stride = std::max<std::size_t>(1, (n + kTraceKeep - 1) / kTraceKeep);
  for (std::size_t t = 0; t < n; t += stride)
    d.trace.emplace_back(static_cast<int>(t + 1), fit.trace[t].z, fit.trace[t].alpha);
  if (n > 0 && (n - 1) % stride != 0) d.trace.emplace_back(static_cast<int>(n), fit.trace[n - 1].z, fit.trace[n - 1].alpha);
  d.warnings = fit.warnings;
  return d;
}

inline nlohmann::ordered_json to_json(const FitDocument& d) {
  using J = nlohmann::ordered_json;
  J j;
  j["schema_version"] = d.schema_version;
  J m;
  m["name"] = d.model.name;
  if (d.model.name == "conjugate")
    m["conjugate"] = {{"prior_mean", d.model.conjugate.prior_mean},
                      {"prior_var", d.model.conjugate.prior_var},
                      {"obs_var", d.model.conjugate.obs_var}};
  m["data"] = d.data;
  j["model"] = m;
  j["method"] = d.method;
  J cfg = J::object();
  for (const auto& [k, v] : d.config) cfg[k] = v;
  j["config"] = cfg;
  J blocks = J::array();
  for (const auto& b : d.blocks)
    blocks.push_back({{"id", b.id}, {"family", b.family}, {"features", b.features}, {"coeffs", b.coeffs}});
  j["blocks"] = blocks;
  j["quality"] = {{"r2", d.r2.value},
                  {"residual_variance", d.r2.residual_variance},
                  {"log_p_variance", d.r2.log_p_variance},
                  {"n_samples", d.r2.n_samples},
                  {"above_one", d.r2.above_one}};
  J trace = J::array();
  for (const auto& [t, z, a] : d.trace) trace.push_back({t, z, a});
  j["convergence"] = {{"iterations", d.iterations},     {"converged", d.converged},
                      {"converged_at", d.converged_at}, {"grad_norm", d.grad_norm},
                      {"trace_length", d.trace_length}, {"trace", trace}};
  j["warnings"] = d.warnings;
  return j;
}

inline FitDocument fit_document_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object() || !j.contains("schema_version")) throw SchemaError("not a fit document: no schema_version");
  const int version = j.at("schema_version").get<int>();
  if (version != kFitSchemaVersion)
    throw SchemaError("fit document schema version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kFitSchemaVersion) + ")");
  try {
    FitDocument d;
    const auto& m = j.at("model");
    d.model.name = m.at("name").get<std::string>();
    if (m.contains("conjugate")) {
      const auto& c = m.at("conjugate");
      d.model.conjugate = {c.at("prior_mean").get<double>(), c.at("prior_var").get<double>(),
                           c.at("obs_var").get<double>()};
    }
    d.data = m.at("data").get<std::vector<double>>();
    d.method = j.at("method").get<std::string>();
    for (const auto& [k, v] : j.at("config").items()) d.config.emplace_back(k, v.get<std::string>());
    for (const auto& b : j.at("blocks"))
      d.blocks.push_back({b.at("id").get<std::string>(), b.at("family").get<std::string>(),
                          b.at("features").get<std::vector<std::string>>(), b.at("coeffs").get<std::vector<double>>()});
    const auto& q = j.at("quality");
    d.r2.value = q.at("r2").get<double>();
    d.r2.residual_variance = q.at("residual_variance").get<double>();
    d.r2.log_p_variance = q.at("log_p_variance").get<double>();
    d.r2.n_samples = q.at("n_samples").get<int>();
    d.r2.above_one = q.at("above_one").get<bool>();
    const auto& c = j.at("convergence");
    d.iterations = c.at("iterations").get<int>();
    d.converged = c.at("converged").get<bool>();
    d.converged_at = c.at("converged_at").get<int>();
    d.grad_norm = c.at("grad_norm").get<double>();
    d.trace_length = c.at("trace_length").get<std::size_t>();
    for (const auto& p : c.at("trace")) d.trace.emplace_back(p.at(0).get<int>(), p.at(1).get<double>(), p.at(2).get<double>());
    d.warnings = j.at("warnings").get<std::vector<std::string>>();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed fit document: ") + e.what());
  }
}

inline std::string dump_fit_document(const FitDocument& d) { return to_json(d).dump(2) + "\n"; }

inline FitDocument parse_fit_document(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("fit document is not valid JSON: ") + e.what());
  }
  return fit_document_from_json(j);
}

inline void write_fit_document(const std::string& path, const FitDocument& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << dump_fit_document(d);
}

inline FitDocument read_fit_document(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_fit_document(ss.str());
}

}  // namespace slrvb

#endif  // SLRVB_FIT_DOCUMENT_HPP
