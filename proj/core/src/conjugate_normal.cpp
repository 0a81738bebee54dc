#include "raisor/conjugate_normal.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "raisor/errors.hpp"

namespace raisor {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

ConjugateNormalModel::ConjugateNormalModel(double mu0, double sigma0_sq, double sigma_sq,
                                           std::vector<double> data)
    : mu0_(mu0), sigma0_sq_(sigma0_sq), sigma_sq_(sigma_sq), data_(std::move(data)) {
  if (!(sigma0_sq_ > 0.0) || !(sigma_sq_ > 0.0)) {
    throw InvalidArgument("conjugate normal: variances must be positive");
  }
  for (double y : data_) {
    if (!std::isfinite(y)) throw InvalidArgument("conjugate normal: non-finite observation");
  }
  if (!data_.empty()) {
    center_ = std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(data_.size());
  }
  sum1_.assign(data_.size() + 1, 0.0L);
  sum2_.assign(data_.size() + 1, 0.0L);
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const long double c = static_cast<long double>(data_[i]) - center_;
    sum1_[i + 1] = sum1_[i] + c;
    sum2_[i + 1] = sum2_[i] + c * c;
  }
}

Eigen::MatrixXd ConjugateNormalModel::prior_sample(std::size_t count, Rng& rng) const {
  std::normal_distribution<double> normal(mu0_, std::sqrt(sigma0_sq_));
  Eigen::MatrixXd out(1, static_cast<Eigen::Index>(count));
  for (Eigen::Index j = 0; j < out.cols(); ++j) out(0, j) = normal(rng);
  return out;
}

double ConjugateNormalModel::log_prior(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  const double z = theta[0] - mu0_;
  return -0.5 * (kLog2Pi + std::log(sigma0_sq_)) - 0.5 * z * z / sigma0_sq_;
}

void ConjugateNormalModel::conditional_logliks(const Eigen::Ref<const Eigen::VectorXd>& theta,
                                               std::size_t from, std::size_t to,
                                               std::span<double> out) const {
  check_range(from, to);
  const double norm = -0.5 * (kLog2Pi + std::log(sigma_sq_));
  for (std::size_t i = from; i < to; ++i) {
    const double r = data_[i] - theta[0];
    out[i - from] = norm - 0.5 * r * r / sigma_sq_;
  }
}

double ConjugateNormalModel::batch_loglik(const Eigen::Ref<const Eigen::VectorXd>& theta,
                                          std::size_t from, std::size_t to) const {
  check_range(from, to);
  if (from == to) return 0.0;
  const auto b = static_cast<long double>(to - from);
  const long double s1 = sum1_[to] - sum1_[from];
  const long double s2 = sum2_[to] - sum2_[from];
  const long double delta = static_cast<long double>(theta[0]) - center_;
  const long double sq = s2 - 2.0L * delta * s1 + b * delta * delta;
  return static_cast<double>(-0.5L * b * (kLog2Pi + std::log(static_cast<long double>(sigma_sq_))) -
                             0.5L * sq / sigma_sq_);
}

void ConjugateNormalModel::ladder_logliks(const Eigen::Ref<const Eigen::VectorXd>& theta,
                                          std::size_t from, std::span<const std::size_t> prefixes,
                                          std::span<double> out) const {
  for (std::size_t j = 0; j < prefixes.size(); ++j) out[j] = batch_loglik(theta, from, prefixes[j]);
}

NormalPosterior ConjugateNormalModel::exact_posterior(std::size_t n) const {
  if (n > data_.size()) throw InvalidArgument("exact_posterior: n exceeds data length");
  const double precision = 1.0 / sigma0_sq_ + static_cast<double>(n) / sigma_sq_;
  const double variance = 1.0 / precision;
  const double sum_y =
      static_cast<double>(sum1_[n] + static_cast<long double>(n) * center_);
  return {variance * (mu0_ / sigma0_sq_ + sum_y / sigma_sq_), variance};
}

Eigen::MatrixXd ConjugateNormalModel::posterior_sample(std::size_t n, std::size_t count,
                                                       Rng& rng) const {
  const auto post = exact_posterior(n);
  std::normal_distribution<double> normal(post.mean, std::sqrt(post.variance));
  Eigen::MatrixXd out(1, static_cast<Eigen::Index>(count));
  for (Eigen::Index j = 0; j < out.cols(); ++j) out(0, j) = normal(rng);
  return out;
}

MixtureProposal ConjugateNormalModel::posterior_proposal(std::size_t n) const {
  const auto post = exact_posterior(n);
  return MixtureProposal::gaussian(Eigen::VectorXd::Constant(1, post.mean),
                                   Eigen::MatrixXd::Constant(1, 1, post.variance), transform_);
}

}  // namespace raisor
