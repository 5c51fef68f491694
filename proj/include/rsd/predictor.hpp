#pragma once

#include "rsd/types.hpp"

namespace rsd {

/// An x0-predictor f(x_t, y0, t) -> x0_hat. Implemented by the trainable
/// nets and by the closed-form oracles; output shape equals input shape.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Vec predict(const Vec& x_t, const Vec& y0, int t) const = 0;
};

}  // namespace rsd
