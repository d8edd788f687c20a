// Stochastic volatility: fit the three specifications on one simulated series
// and print R^2 plus the parameter summaries.

#include <cstdio>
#include <cstdlib>

#include "slrvb/diagnostics.hpp"
#include "slrvb/models/sv.hpp"
#include "slrvb/online.hpp"

using namespace slrvb;

int main(int argc, char** argv) {
  SvParams truth;
  if (argc > 1) truth.T = std::atoi(argv[1]);
  Rng data(20240601);
  const SvSeries sim = simulate_sv(truth, data);
  std::printf("T=%d  mu=%.2f phi=%.2f sigma2=%.3f\n\n", truth.T, truth.mu, truth.phi, truth.sigma2);

  for (SvVariant v : {SvVariant::A, SvVariant::B, SvVariant::C}) {
    const Model m = make_sv_model(v, sim.y);
    const ApproximationGraph g = build_approximation(m.spec);
    const FitResult r = fit_online(m, g, OnlineConfig{});
    std::printf("%s: %s after %d iterations (c_tol at %d), R2 %.6f\n", m.name.c_str(),
                r.converged ? "converged" : "NOT converged", r.iterations, r.converged_at, r.r2.value);
    Rng rng(4);
    for (const auto& s : posterior_summaries(g, r.state, 20000, rng)) {
      if (s.name != "mu" && s.name != "phi" && s.name != "sigma2") continue;
      std::printf("  %-7s mean %8.4f  sd %7.4f  90%% [%8.4f, %8.4f]\n", s.name.c_str(), s.mean, s.sd, s.q05, s.q95);
    }
  }
  return 0;
}
