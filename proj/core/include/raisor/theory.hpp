#pragma once

#include <Eigen/Dense>
#include <vector>

#include "raisor/errors.hpp"
#include "raisor/rng.hpp"

namespace raisor {

/// {alpha (2 - alpha)}^{d/2}: the deterministic upper bound on the limiting
/// RESS when n0 / n -> alpha.
double u1(double alpha, std::size_t d);

/// c(r_min, d) = r_min^{-2/d} {1 + sqrt(1 - r_min^{2/d})}.
double budget_constant(double r_min, std::size_t d);

/// Limiting law of RESS(n | alpha n) for a regular parametric model.
struct LimitLaw {
  std::size_t d = 1;
  double alpha = 0.5;
  Eigen::MatrixXd M;  // d x d, symmetric PSD

  LimitLaw(double alpha, Eigen::MatrixXd M);

  /// Well-specified case M = I_d.
  static LimitLaw well_specified(double alpha, std::size_t d);

  /// M = (W^{1/2})' V^{-1} W^{1/2}, with V the Hessian-type matrix and W the
  /// score covariance. W^{1/2} is the symmetric square root; eigenvalues of W
  /// in (-1e-10, 0) are clipped to zero.
  static LimitLaw from_sandwich(double alpha, const Eigen::MatrixXd& V, const Eigen::MatrixXd& W);

  /// u1(alpha) exp{-((1 - alpha) / (2 - alpha)) z' M z}
  double ress_at(const Eigen::Ref<const Eigen::VectorXd>& z) const;
};

/// count i.i.d. draws of ress_at(z), z ~ N(0, I_d).
std::vector<double> sample_limit_ress(const LimitLaw& law, std::size_t count, Rng& rng);

/// Finite-n RESS for a location-scale normal prefix update.
double closed_form_ress_scale(double alpha, std::size_t d);

/// Exact RESS(n | n0) of the normal location model with known precision V:
/// {n0 (2n - n0) / n^2}^{d/2} exp{-(n n0 / (2n - n0)) dy' V dy}, dy = ybar_n - ybar_n0.
double closed_form_ress_location_scale(std::size_t n, std::size_t n0,
                                       const Eigen::Ref<const Eigen::VectorXd>& ybar_full,
                                       const Eigen::Ref<const Eigen::VectorXd>& ybar_prefix,
                                       const Eigen::Ref<const Eigen::MatrixXd>& V);

/// Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|.
double ks_distance(std::vector<double> a, std::vector<double> b);

}  // namespace raisor
