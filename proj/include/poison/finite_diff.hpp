#pragma once

#include <cmath>
#include <functional>

#include "poison/error.hpp"
#include "poison/losses.hpp"

namespace poison {

using ScalarField = std::function<double(const Vec&)>;

// Step size balancing curvature against roundoff when none is given.
inline double default_fd_step(const Vec& x) {
  double scale = x.size() > 0 ? x.cwiseAbs().maxCoeff() : 0.0;
  return 1e-5 * (1.0 + scale);
}

// Central-difference gradient: g_i = (f(x + h e_i) - f(x - h e_i)) / 2h.
// Used throughout the tests as the independent oracle for analytic gradients.
inline Vec central_diff(const ScalarField& f, const Vec& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("central_diff: h must be positive");
  Vec g(x.size());
  Vec probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    double fp = f(probe);
    probe[i] = x[i] - h;
    double fm = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw OracleError("central_diff: non-finite function value at coordinate " +
                        std::to_string(i));
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline Vec central_diff(const ScalarField& f, const Vec& x) {
  return central_diff(f, x, default_fd_step(x));
}

}  // namespace poison
