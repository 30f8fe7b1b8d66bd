#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "adadelay/vector.hpp"

namespace adadelay {

// Server update counter, 1-based: the server holds iterate x(t) and "time t"
// produces x(t+1). Strictly increases by 1 per applied update.
using TimeIndex = std::uint64_t;

struct DelaySample {
  std::uint64_t tau = 0;       // nonnegative update-count lag
  TimeIndex source_time = 1;   // t - tau, the index the gradient was computed at
};

struct DelayedGradientMessage {
  Vector gradient;
  TimeIndex computed_at = 1;  // server update count observed at pull
  std::uint32_t worker_id = 0;
  std::uint64_t minibatch_id = 0;
};

// Constants of Assumptions 1-4: gradient Lipschitz constant, gradient norm
// bound over the feasible set, domain radius around the optimum, and the
// stochastic gradient noise bound E||grad f - g||^2 <= sigma^2.
struct ProblemConstants {
  double L = 1.0;
  double G = 1.0;
  double R = 1.0;
  double sigma = 0.0;

  void validate() const {
    if (!(L > 0) || !std::isfinite(L)) throw std::invalid_argument("L must be positive finite");
    if (!(G > 0) || !std::isfinite(G)) throw std::invalid_argument("G must be positive finite");
    if (!(R > 0) || !std::isfinite(R)) throw std::invalid_argument("R must be positive finite");
    if (sigma < 0 || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be nonnegative finite");
  }
};

}  // namespace adadelay
