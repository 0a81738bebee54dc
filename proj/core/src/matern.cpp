#include "raisor/matern.hpp"

#include <cmath>

#include "raisor/errors.hpp"

namespace raisor {

double matern_bessel(double distance, double range, double nu) {
  if (!(range > 0.0) || !(nu > 0.0) || distance < 0.0) {
    throw InvalidArgument("matern: need range > 0, nu > 0, distance >= 0");
  }
  if (distance == 0.0) return 1.0;
  const double x = std::sqrt(2.0 * nu) * distance / range;
  if (x > 700.0) return 0.0;
  const double log_pref = (1.0 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(x);
  return std::exp(log_pref) * std::cyl_bessel_k(nu, x);
}

double matern_correlation(double distance, double range, double nu) {
  if (!(range > 0.0) || distance < 0.0) throw InvalidArgument("matern: need range > 0, distance >= 0");
  if (nu == 0.5) return std::exp(-distance / range);
  if (nu == 1.5) return matern32(distance, range);
  if (nu == 2.5) {
    const double x = std::sqrt(5.0) * distance / range;
    return (1.0 + x + x * x / 3.0) * std::exp(-x);
  }
  return matern_bessel(distance, range, nu);
}

}  // namespace raisor
