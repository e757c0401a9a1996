#pragma once

#include <functional>

#include "onestate/linalg.hpp"

namespace onestate {

struct QuadratureResult {
  Vector value;
  double error_estimate = 0.0;
  int panels = 0;
};

/// Globally adaptive Gauss-Kronrod (7/15) integration of a vector-valued
/// integrand over [lo, hi]. The panel with the largest error is bisected
/// until the summed estimate drops below abs_tol. Exceeding max_panels
/// throws QuadratureError carrying the achieved estimate.
QuadratureResult integrate_gk15(const std::function<Vector(double)>& f, double lo, double hi,
                                double abs_tol, int max_panels = 1 << 20);

}  // namespace onestate
