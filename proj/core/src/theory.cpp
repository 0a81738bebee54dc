#include "raisor/theory.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "raisor/errors.hpp"

namespace raisor {

double u1(double alpha, std::size_t d) {
  if (!(alpha > 0.0 && alpha <= 1.0) || d == 0) {
    throw InvalidArgument("u1: need alpha in (0, 1] and d >= 1");
  }
  return std::pow(alpha * (2.0 - alpha), 0.5 * static_cast<double>(d));
}

double budget_constant(double r_min, std::size_t d) {
  if (!(r_min > 0.0 && r_min < 1.0) || d == 0) {
    throw InvalidArgument("budget_constant: need r_min in (0, 1) and d >= 1");
  }
  const double a = std::pow(r_min, 2.0 / static_cast<double>(d));
  return (1.0 + std::sqrt(1.0 - a)) / a;
}

LimitLaw::LimitLaw(double alpha_, Eigen::MatrixXd M_) : alpha(alpha_), M(std::move(M_)) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("LimitLaw: alpha must lie in (0, 1)");
  if (M.rows() == 0 || M.rows() != M.cols()) throw InvalidArgument("LimitLaw: M must be square");
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InvalidArgument("LimitLaw: M must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10) throw InvalidArgument("LimitLaw: M must be PSD");
  d = static_cast<std::size_t>(M.rows());
}

LimitLaw LimitLaw::well_specified(double alpha, std::size_t d) {
  return LimitLaw(alpha, Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d),
                                                   static_cast<Eigen::Index>(d)));
}

LimitLaw LimitLaw::from_sandwich(double alpha, const Eigen::MatrixXd& V, const Eigen::MatrixXd& W) {
  if (V.rows() != V.cols() || W.rows() != W.cols() || V.rows() != W.rows() || V.rows() == 0) {
    throw InvalidArgument("LimitLaw: V and W must be square and conformable");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (W + W.transpose()));
  Eigen::VectorXd lambda = eig.eigenvalues();
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < -1e-10) throw InvalidArgument("LimitLaw: W is not PSD");
    lambda[i] = std::sqrt(std::max(lambda[i], 0.0));
  }
  const Eigen::MatrixXd root = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
  Eigen::LDLT<Eigen::MatrixXd> v_ldlt(V);
  if (v_ldlt.info() != Eigen::Success || !v_ldlt.isPositive()) {
    throw InvalidArgument("LimitLaw: V must be positive definite");
  }
  Eigen::MatrixXd M = root.transpose() * v_ldlt.solve(root);
  M = 0.5 * (M + M.transpose());
  return LimitLaw(alpha, std::move(M));
}

double LimitLaw::ress_at(const Eigen::Ref<const Eigen::VectorXd>& z) const {
  if (static_cast<std::size_t>(z.size()) != d) throw InvalidArgument("LimitLaw: z has wrong dimension");
  const double quad = z.dot(M * z);
  return u1(alpha, d) * std::exp(-((1.0 - alpha) / (2.0 - alpha)) * quad);
}

std::vector<double> sample_limit_ress(const LimitLaw& law, std::size_t count, Rng& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> out(count);
  Eigen::VectorXd z(static_cast<Eigen::Index>(law.d));
  for (auto& value : out) {
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
    value = law.ress_at(z);
  }
  return out;
}

double closed_form_ress_scale(double alpha, std::size_t d) { return u1(alpha, d); }

double closed_form_ress_location_scale(std::size_t n, std::size_t n0,
                                       const Eigen::Ref<const Eigen::VectorXd>& ybar_full,
                                       const Eigen::Ref<const Eigen::VectorXd>& ybar_prefix,
                                       const Eigen::Ref<const Eigen::MatrixXd>& V) {
  if (n0 == 0 || n0 >= n) throw InvalidArgument("closed_form_ress_location_scale: need 0 < n0 < n");
  const auto d = ybar_full.size();
  if (d == 0 || ybar_prefix.size() != d || V.rows() != d || V.cols() != d) {
    throw InvalidArgument("closed_form_ress_location_scale: dimensions disagree");
  }
  const double nn = static_cast<double>(n), n0d = static_cast<double>(n0);
  const Eigen::VectorXd dy = ybar_full - ybar_prefix;
  const double base = std::pow(n0d * (2.0 * nn - n0d) / (nn * nn), 0.5 * static_cast<double>(d));
  return base * std::exp(-(nn * n0d / (2.0 * nn - n0d)) * dy.dot(V * dy));
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("ks_distance: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double best = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return best;
}

}  // namespace raisor
