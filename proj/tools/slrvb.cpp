// slrvb: simulate, fit, diagnose, sample, mcmc, compare.
//
// Exit codes: 0 success (fit converged), 1 usage or input error,
// 2 fit did not converge, 3 numeric failure.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "slrvb/batch.hpp"
#include "slrvb/data_io.hpp"
#include "slrvb/diagnostics.hpp"
#include "slrvb/errors.hpp"
#include "slrvb/fit_document.hpp"
#include "slrvb/mcmc.hpp"
#include "slrvb/online.hpp"
#include "slrvb/zoo.hpp"

namespace {

using namespace slrvb;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNotConverged = 2;
constexpr int kExitNumeric = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) { return format_double(v); }

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void write_rows(const std::string& path, const std::vector<std::string>& header,
                const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_table_csv(out, header, rows);
}

Table read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return parse_table_csv(in);
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string model = "sv";
  SvParams p;
  std::uint64_t seed = 1;
  std::string out;
  std::string truth_out;
};

int cmd_simulate(const SimulateArgs& a) {
  if (a.model != "sv") throw UsageError("simulate supports --model sv only");
  try {
    a.p.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  Rng rng(a.seed);
  const SvSeries s = simulate_sv(a.p, rng);
  write_series_csv(a.out, s.y);
  if (!a.truth_out.empty()) {
    std::vector<std::vector<double>> rows;
    for (double v : s.v) rows.push_back({v});
    write_rows(a.truth_out, {"v"}, rows);
  }
  std::cout << "simulated sv: mu=" << fmt(a.p.mu) << " phi=" << fmt(a.p.phi) << " sigma2=" << fmt(a.p.sigma2)
            << " T=" << a.p.T << " seed=" << a.seed << " -> " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ModelArgs {
  std::string model;
  std::string data;
  double prior_mean = 0.0;
  double prior_var = 1.0;
  double obs_var = 1.0;

  ZooChoice choice() const {
    const auto& names = zoo_names();
    if (std::find(names.begin(), names.end(), model) == names.end())
      throw UsageError("unknown model '" + model + "'");
    ZooChoice c;
    c.name = model;
    c.conjugate = {prior_mean, prior_var, obs_var};
    return c;
  }
};

void add_model_options(CLI::App* sub, ModelArgs& m) {
  sub->add_option("--model", m.model, "conjugate | sv-a | sv-b | sv-c")->required();
  sub->add_option("--data", m.data, "CSV with one column of observations")->required();
  sub->add_option("--prior-mean", m.prior_mean, "conjugate prior mean")->capture_default_str();
  sub->add_option("--prior-var", m.prior_var, "conjugate prior variance")->capture_default_str();
  sub->add_option("--obs-var", m.obs_var, "conjugate observation variance")->capture_default_str();
}

Model load_model(const ZooChoice& c, const std::vector<double>& data) {
  try {
    return make_zoo_model(c, data);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

struct FitArgs {
  ModelArgs m;
  std::string method = "online";
  std::string estimator = "grad-hess";
  bool precondition = false;
  std::optional<std::uint64_t> seed;
  double ctol = 1e-4;
  double cmss = 10.0;
  int navg = 50;
  int max_iters = 50000;
  int nsamples = 0;
  double ccurv = 0.5;
  double cmss_batch = 100.0;
  double grad_tol = 1e-3;
  int max_outer = 200;
  int r2_samples = kDefaultR2Samples;
  std::string out;
};

int cmd_fit(const FitArgs& a) {
  const ZooChoice choice = a.m.choice();
  const auto tag = parse_estimator(a.estimator);
  if (!tag) throw UsageError("unknown estimator '" + a.estimator + "'");
  const Model model = load_model(choice, read_series_csv(a.m.data));
  const ApproximationGraph graph = build_approximation(model.spec);
  if (*tag == EstimatorTag::sample_cov) {
    for (const auto& b : graph.blocks())
      if (b.family.stat_dim() > 256)
        throw UsageError("estimator sample-cov is not supported for model '" + choice.name + "': block '" + b.id +
                         "' has " + std::to_string(b.family.stat_dim()) + " statistics");
  }
  const EstimatorKind est{*tag, a.precondition};

  const auto t0 = std::chrono::steady_clock::now();
  FitResult fit;
  try {
    if (a.method == "online") {
      OnlineConfig c;
      c.c_tol = a.ctol;
      c.c_mss = a.cmss;
      c.n_avg = a.navg;
      c.max_iters = a.max_iters;
      c.estimator = est;
      c.r2_samples = a.r2_samples;
      if (a.seed) c.seed = *a.seed;
      c.validate();
      fit = fit_online(model, graph, c);
    } else if (a.method == "batch") {
      BatchConfig c;
      c.n_samples = a.nsamples;
      c.c_curv = a.ccurv;
      c.c_mss_batch = a.cmss_batch;
      c.grad_tol = a.grad_tol;
      c.max_outer = a.max_outer;
      c.estimator = est;
      c.r2_samples = a.r2_samples;
      if (a.seed) c.seed_star = *a.seed;
      c.validate();
      fit = fit_batch(model, graph, c);
    } else {
      throw UsageError("unknown method '" + a.method + "'");
    }
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_fit_document(a.out, make_fit_document(choice, model, graph, fit));
  std::cout << "model " << choice.name << ", method " << fit.method << ", estimator " << to_string(*tag) << "\n";
  std::cout << "iterations " << fit.iterations << (fit.converged ? " (converged)" : " (not converged)") << "\n";
  if (fit.grad_norm >= 0.0) std::cout << "|f|/sqrt(K) " << fmt(fit.grad_norm) << "\n";
  std::cout << "R2 " << fmt(fit.r2.value) << (fit.r2.above_one ? " (above 1 from sampling noise)" : "") << "\n";
  std::cout << "wall time " << fixed(seconds, 3) << " s\n";
  if (model.conjugate) {
    const GaussianMoments gm = gaussian_moments(graph.block(0).family,
                                                conditional_naturals(graph.block(0), {}, fit.state.coeffs[0]));
    const double var = 1.0 / gm.precision.coeff(0, 0);
    const VectorXd exact = exact_posterior_conjugate(model);
    std::cout << "posterior mean " << fmt(gm.mean[0]) << " variance " << fmt(var) << " (exact mean "
              << fmt(-exact[0] / (2.0 * exact[1])) << " variance " << fmt(-0.5 / exact[1]) << ")\n";
  }
  for (const auto& w : fit.warnings) std::cerr << "warning: " << w << "\n";
  return fit.converged ? kExitOk : kExitNotConverged;
}

// ---------------------------------------------------------------------------

struct Loaded {
  FitDocument doc;
  Model model;
  ApproximationGraph graph;
  VariationalState state;
};

Loaded load_fit(const std::string& path) {
  Loaded l{read_fit_document(path), {}, {}, {}};
  l.model = load_model(l.doc.model, l.doc.data);
  l.graph = build_approximation(l.model.spec);
  l.state = l.doc.state(l.graph);
  return l;
}

EstimatorKind fit_estimator(const FitDocument& d) {
  EstimatorKind k{EstimatorTag::gaussian_grad_hess, false};
  for (const auto& [key, value] : d.config) {
    if (key == "estimator") {
      if (auto t = parse_estimator(value)) k.tag = *t;
    } else if (key == "precondition") {
      k.precondition = value == "on";
    }
  }
  return k;
}

void write_summary_csv(const std::string& path, const std::vector<VariableSummary>& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "variable,mean,sd,q05,q50,q95\n";
  for (const auto& v : s)
    out << v.name << ',' << fmt(v.mean) << ',' << fmt(v.sd) << ',' << fmt(v.q05) << ',' << fmt(v.q50) << ','
        << fmt(v.q95) << '\n';
}

struct DiagnoseArgs {
  std::string fit;
  std::uint64_t seed = 2;
  int r2_samples = kDefaultR2Samples;
  int grad_samples = 0;
  int summary_samples = 10000;
  std::string out;
};

int cmd_diagnose(const DiagnoseArgs& a) {
  const Loaded l = load_fit(a.fit);
  const int n_grad = a.grad_samples > 0 ? a.grad_samples : 5 * min_samples(l.graph);
  const QualityReport q = quality_report(l.model, l.graph, l.state, a.seed, a.r2_samples, n_grad,
                                         fit_estimator(l.doc), a.summary_samples);
  std::cout << "R2 " << fmt(q.r2.value) << (q.r2.above_one ? " (above 1 from sampling noise)" : "") << " from "
            << q.r2.n_samples << " draws\n";
  std::cout << "natgrad_norm " << fmt(q.natgrad_norm) << " from " << n_grad << " draws\n";
  std::cout << std::left << std::setw(12) << "variable" << std::right << std::setw(12) << "mean" << std::setw(12)
            << "sd" << std::setw(12) << "q05" << std::setw(12) << "q95" << "\n";
  std::size_t vector_elements = 0;
  for (const auto& s : q.summaries) {
    if (s.name.find('[') != std::string::npos) {
      ++vector_elements;
      continue;
    }
    std::cout << std::left << std::setw(12) << s.name << std::right << std::setw(12) << fixed(s.mean, 4)
              << std::setw(12) << fixed(s.sd, 4) << std::setw(12) << fixed(s.q05, 4) << std::setw(12)
              << fixed(s.q95, 4) << "\n";
  }
  if (vector_elements > 0) std::cout << "(" << vector_elements << " vector elements not shown; see --out)\n";
  if (!a.out.empty()) write_summary_csv(a.out, q.summaries);
  return kExitOk;
}

struct SampleArgs {
  std::string fit;
  int n = 1000;
  std::uint64_t seed = 3;
  std::string out;
};

int cmd_sample(const SampleArgs& a) {
  if (a.n < 1) throw UsageError("--n must be >= 1");
  const Loaded l = load_fit(a.fit);
  Rng rng(a.seed);
  const auto rows = draw_rows(l.graph, l.state, a.n, rng);
  write_rows(a.out, l.graph.scalar_names(), rows);
  std::cout << "wrote " << rows.size() << " draws of " << l.graph.scalar_count() << " variables to " << a.out << "\n";
  return kExitOk;
}

struct McmcArgs {
  ModelArgs m;
  std::string fit;
  McmcConfig cfg;
  std::string out;
};

int cmd_mcmc(const McmcArgs& a) {
  Model model;
  if (!a.fit.empty()) {
    const FitDocument d = read_fit_document(a.fit);
    model = load_model(d.model, d.data);
  } else {
    if (a.m.model.empty() || a.m.data.empty()) throw UsageError("mcmc needs --fit or both --model and --data");
    model = load_model(a.m.choice(), read_series_csv(a.m.data));
  }
  try {
    a.cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const ApproximationGraph graph = build_approximation(model.spec);
  const McmcResult r = run_metropolis(model, graph, a.cfg);
  write_rows(a.out, r.names, r.rows);
  std::cout << "wrote " << r.rows.size() << " draws to " << a.out << "\n";
  for (const auto& [name, rate] : r.acceptance) std::cout << "acceptance " << name << " " << fixed(rate, 3) << "\n";
  return kExitOk;
}

struct CompareArgs {
  std::string fit;
  std::string mcmc;
  std::uint64_t seed = 4;
  int n = 20000;
  double flag_below = 0.7;
  std::string out;
};

int cmd_compare(const CompareArgs& a) {
  const Loaded l = load_fit(a.fit);
  const Table ref = read_table(a.mcmc);
  Rng rng(a.seed);
  const auto vb = posterior_summaries(l.graph, l.state, a.n, rng);
  const auto rows = compare(vb, ref.header, ref.rows);

  std::cout << std::left << std::setw(12) << "variable" << std::right << std::setw(11) << "vb_mean" << std::setw(11)
            << "vb_sd" << std::setw(11) << "ref_mean" << std::setw(11) << "ref_sd" << std::setw(11) << "std_diff"
            << std::setw(11) << "sd_ratio" << "\n";
  for (const auto& r : rows) {
    const bool scalar_param = r.name.find('[') == std::string::npos;
    if (!scalar_param) continue;
    std::cout << std::left << std::setw(12) << r.name << std::right << std::setw(11) << fixed(r.vb_mean, 4)
              << std::setw(11) << fixed(r.vb_sd, 4) << std::setw(11) << fixed(r.ref_mean, 4) << std::setw(11)
              << fixed(r.ref_sd, 4) << std::setw(11) << fixed(r.discrepancy, 3) << std::setw(11)
              << fixed(r.sd_ratio, 3) << (r.sd_ratio < a.flag_below ? "  UNDERESTIMATED" : "") << "\n";
  }
  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : rows)
    if (r.name.find('[') != std::string::npos && r.discrepancy > worst) {
      worst = r.discrepancy;
      worst_name = r.name;
    }
  if (!worst_name.empty())
    std::cout << "latent states: largest std_diff " << fixed(worst, 3) << " at " << worst_name << "\n";

  if (!a.out.empty()) {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + a.out + "'");
    out << "variable,vb_mean,vb_sd,ref_mean,ref_sd,std_diff,sd_ratio,underestimated\n";
    for (const auto& r : rows)
      out << r.name << ',' << fmt(r.vb_mean) << ',' << fmt(r.vb_sd) << ',' << fmt(r.ref_mean) << ','
          << fmt(r.ref_sd) << ',' << fmt(r.discrepancy) << ',' << fmt(r.sd_ratio) << ','
          << (r.sd_ratio < a.flag_below ? 1 : 0) << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic linear regression variational Bayes"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "simulate a stochastic volatility series");
  s->add_option("--model", sim.model, "model to simulate")->capture_default_str();
  s->add_option("--mu", sim.p.mu)->capture_default_str();
  s->add_option("--phi", sim.p.phi)->capture_default_str();
  s->add_option("--sigma2", sim.p.sigma2)->capture_default_str();
  s->add_option("--T", sim.p.T)->capture_default_str();
  s->add_option("--seed", sim.seed)->capture_default_str();
  s->add_option("--out", sim.out, "output CSV")->required();
  s->add_option("--truth-out", sim.truth_out, "optional CSV of the simulated log-volatilities");

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "fit a posterior approximation");
  add_model_options(f, fit.m);
  f->add_option("--method", fit.method, "online | batch")->capture_default_str();
  f->add_option("--estimator", fit.estimator, "sample-cov | grad | grad-hess")->capture_default_str();
  f->add_flag("--precondition", fit.precondition, "precondition the regression statistics");
  f->add_option("--seed", fit.seed, "random seed (online default 1, batch seed_star default 12345)");
  f->add_option("--ctol", fit.ctol, "online convergence tolerance")->capture_default_str();
  f->add_option("--cmss", fit.cmss, "online maximum mean squared step")->capture_default_str();
  f->add_option("--navg", fit.navg, "online averaging window")->capture_default_str();
  f->add_option("--max-iters", fit.max_iters, "online iteration cap")->capture_default_str();
  f->add_option("--nsamples", fit.nsamples, "batch draws per evaluation (0: two-phase default)")
      ->capture_default_str();
  f->add_option("--ccurv", fit.ccurv, "batch curvature constant")->capture_default_str();
  f->add_option("--cmss-batch", fit.cmss_batch, "batch maximum mean squared step")->capture_default_str();
  f->add_option("--grad-tol", fit.grad_tol, "batch tolerance on |f|/sqrt(K)")->capture_default_str();
  f->add_option("--max-outer", fit.max_outer, "batch outer iteration cap")->capture_default_str();
  f->add_option("--r2-samples", fit.r2_samples, "draws for the R2 diagnostic")->capture_default_str();
  f->add_option("--out", fit.out, "fit document (JSON)")->required();

  DiagnoseArgs diag;
  auto* d = app.add_subcommand("diagnose", "recompute R2, natural-gradient norm and summaries");
  d->add_option("--fit", diag.fit)->required();
  d->add_option("--seed", diag.seed)->capture_default_str();
  d->add_option("--r2-samples", diag.r2_samples)->capture_default_str();
  d->add_option("--nsamples", diag.grad_samples, "draws for the gradient norm (0: 5 x minimum)")
      ->capture_default_str();
  d->add_option("--summary-samples", diag.summary_samples)->capture_default_str();
  d->add_option("--out", diag.out, "optional summary CSV");

  SampleArgs smp;
  auto* sp = app.add_subcommand("sample", "draw from a fitted approximation");
  sp->add_option("--fit", smp.fit)->required();
  sp->add_option("--n", smp.n)->capture_default_str();
  sp->add_option("--seed", smp.seed)->capture_default_str();
  sp->add_option("--out", smp.out)->required();

  McmcArgs mc;
  auto* m = app.add_subcommand("mcmc", "run the adaptive Metropolis reference chain");
  m->add_option("--model", mc.m.model, "conjugate | sv-a | sv-b | sv-c");
  m->add_option("--data", mc.m.data);
  m->add_option("--prior-mean", mc.m.prior_mean)->capture_default_str();
  m->add_option("--prior-var", mc.m.prior_var)->capture_default_str();
  m->add_option("--obs-var", mc.m.obs_var)->capture_default_str();
  m->add_option("--fit", mc.fit, "take the model and data from a fit document");
  m->add_option("--iterations", mc.cfg.iterations)->capture_default_str();
  m->add_option("--burn-in", mc.cfg.burn_in)->capture_default_str();
  m->add_option("--thin", mc.cfg.thin)->capture_default_str();
  m->add_option("--seed", mc.cfg.seed)->capture_default_str();
  m->add_option("--initial-scale", mc.cfg.initial_scale)->capture_default_str();
  m->add_option("--adapt-interval", mc.cfg.adapt_interval)->capture_default_str();
  m->add_option("--out", mc.out)->required();

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "compare a fit with reference draws");
  c->add_option("--fit", cmp.fit)->required();
  c->add_option("--mcmc", cmp.mcmc, "CSV written by the mcmc command")->required();
  c->add_option("--seed", cmp.seed)->capture_default_str();
  c->add_option("--n", cmp.n, "draws from the approximation")->capture_default_str();
  c->add_option("--flag-below", cmp.flag_below, "flag sd ratios below this")->capture_default_str();
  c->add_option("--out", cmp.out, "optional CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_simulate(sim);
    if (f->parsed()) return cmd_fit(fit);
    if (d->parsed()) return cmd_diagnose(diag);
    if (sp->parsed()) return cmd_sample(smp);
    if (m->parsed()) return cmd_mcmc(mc);
    if (c->parsed()) return cmd_compare(cmp);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConditioningError& e) {
    std::cerr << "numeric failure in block '" << e.block() << "': " << e.what() << "\n";
    return kExitNumeric;
  } catch (const InvalidConditional& e) {
    std::cerr << "numeric failure in block '" << e.block() << "': " << e.what() << "\n";
    return kExitNumeric;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ValidityError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const UndefinedQuality& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
