// Normal mean with known variance: online and batch fits against the exact posterior.

#include <cstdio>

#include "slrvb/batch.hpp"
#include "slrvb/models/conjugate.hpp"
#include "slrvb/online.hpp"

using namespace slrvb;

static void show(const char* label, const ApproximationGraph& g, const VectorXd& coeffs) {
  const VectorXd eta = conditional_naturals(g.block(0), {}, coeffs);
  const double var = -0.5 / eta[1];
  std::printf("%-8s mean %.6f  var %.6f\n", label, eta[0] * var, var);
}

int main() {
  const Model m = make_conjugate_normal(0.0, 1.0, 1.0, {1.0, 1.0, 1.0, 1.0});
  const ApproximationGraph g = build_approximation(m.spec);

  const FitResult on = fit_online(m, g, OnlineConfig{});
  BatchConfig bc;
  bc.n_samples = 2;
  const FitResult ba = fit_batch(m, g, bc);

  const VectorXd exact = exact_posterior_conjugate(m);
  std::printf("%-8s mean %.6f  var %.6f\n", "exact", -exact[0] / (2 * exact[1]), -0.5 / exact[1]);
  show("online", g, on.state.coeffs[0]);
  show("batch", g, ba.state.coeffs[0]);
  std::printf("online: %d iterations, R2 %.6f\n", on.iterations, on.r2.value);
  std::printf("batch:  %d outer iterations, R2 %.6f\n", ba.iterations, ba.r2.value);
  return 0;
}
