#pragma once

#include <cmath>

namespace raisor {

/// Matérn correlation with smoothness nu and range phi, scaled so that
/// x = sqrt(2 nu) * distance / phi. Uses the closed forms for nu in
/// {1/2, 3/2, 5/2} and the Bessel form otherwise.
double matern_correlation(double distance, double range, double nu);

/// The general Bessel form 2^{1-nu}/Gamma(nu) x^nu K_nu(x); 1 at distance 0.
double matern_bessel(double distance, double range, double nu);

/// nu = 3/2: (1 + x) exp(-x) with x = sqrt(3) * distance / range.
inline double matern32(double distance, double range) {
  const double x = 1.7320508075688772935274463415059 * distance / range;
  return (1.0 + x) * std::exp(-x);
}

}  // namespace raisor
