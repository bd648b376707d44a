#pragma once

#include "hqa/errors.hpp"

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

namespace hqa {

/// Heavy-ball momentum step for gradient *ascent*:
///   velocity <- momentum * velocity + gradient
///   params   <- params + lr * velocity
inline void update_step(std::span<double> params, std::span<const double> gradient, std::span<double> velocity,
                        double lr, double momentum) {
  if (gradient.size() != params.size() || velocity.size() != params.size()) {
    throw ContractViolation("update_step: params/gradient/velocity sizes " + std::to_string(params.size()) + "/" +
                            std::to_string(gradient.size()) + "/" + std::to_string(velocity.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + gradient[i];
    params[i] += lr * velocity[i];
  }
}

/// Step decay: base * factor^floor(epoch / every).
inline double scheduled_learning_rate(double base, double factor, std::size_t every, std::size_t epoch) {
  if (every == 0) return base;
  return base * std::pow(factor, double(epoch / every));
}

}  // namespace hqa
