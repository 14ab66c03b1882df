#pragma once

#include <algorithm>
#include <cmath>

namespace depthcal {

/// 0.5 d^2 for |d| <= delta, delta (|d| - delta / 2) beyond, with d = y - yhat.
inline double huber_loss(double y, double yhat, double delta) {
  const double d = std::abs(y - yhat);
  return d <= delta ? 0.5 * d * d : delta * (d - 0.5 * delta);
}

/// Derivative of huber_loss with respect to yhat.
inline double huber_grad(double y, double yhat, double delta) { return std::clamp(yhat - y, -delta, delta); }

}  // namespace depthcal
