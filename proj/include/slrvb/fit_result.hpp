#ifndef SLRVB_FIT_RESULT_HPP
#define SLRVB_FIT_RESULT_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "slrvb/approx.hpp"
#include "slrvb/quality.hpp"

namespace slrvb {

/// Online: z is the running mean of d'd / K and alpha the applied damping.
/// Batch: z is |f| / sqrt(K) before the step and alpha the accepted step.
struct TracePoint {
  double z = 0.0;
  double alpha = 0.0;
};

struct FitResult {
  std::string method;
  VariationalState state;
  RSquared r2;
  int iterations = 0;
  bool converged = false;
  /// Iteration at which the convergence test first passed, or -1.
  int converged_at = -1;
  std::vector<TracePoint> trace;
  std::uint64_t seed = 0;
  /// Final |f| / sqrt(K) (batch only; negative when not computed).
  double grad_norm = -1.0;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::string> warnings;
};

}  // namespace slrvb

#endif  // SLRVB_FIT_RESULT_HPP
