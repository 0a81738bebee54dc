#pragma once

#include <vector>

#include "raisor/approx.hpp"
#include "raisor/model.hpp"

namespace raisor {

struct NormalPosterior {
  double mean = 0.0;
  double variance = 0.0;
};

/// y_i | mu ~ Normal(mu, sigma_sq) with sigma_sq known, mu ~ Normal(mu0, sigma0_sq).
///
/// Batch log-likelihoods use prefix sums of centered data, so each batch
/// costs O(1) per particle regardless of its length.
class ConjugateNormalModel final : public Model {
 public:
  ConjugateNormalModel(double mu0, double sigma0_sq, double sigma_sq, std::vector<double> data);

  std::string name() const override { return "conjugate_normal"; }
  std::size_t dim() const override { return 1; }
  std::size_t n_obs() const override { return data_.size(); }
  const Transform& transform() const override { return transform_; }
  std::vector<std::string> parameter_names() const override { return {"mu"}; }

  Eigen::MatrixXd prior_sample(std::size_t count, Rng& rng) const override;
  double log_prior(const Eigen::Ref<const Eigen::VectorXd>& theta) const override;
  void conditional_logliks(const Eigen::Ref<const Eigen::VectorXd>& theta, std::size_t from,
                           std::size_t to, std::span<double> out) const override;
  double batch_loglik(const Eigen::Ref<const Eigen::VectorXd>& theta, std::size_t from,
                      std::size_t to) const override;
  void ladder_logliks(const Eigen::Ref<const Eigen::VectorXd>& theta, std::size_t from,
                      std::span<const std::size_t> prefixes, std::span<double> out) const override;

  /// Closed-form [mu | y_{1:n}].
  NormalPosterior exact_posterior(std::size_t n) const;

  /// Exact draws from [mu | y_{1:n}], one per column.
  Eigen::MatrixXd posterior_sample(std::size_t n, std::size_t count, Rng& rng) const;

  /// The exact partial posterior as a one-component proposal.
  MixtureProposal posterior_proposal(std::size_t n) const;

  double mu0() const noexcept { return mu0_; }
  double sigma0_sq() const noexcept { return sigma0_sq_; }
  double sigma_sq() const noexcept { return sigma_sq_; }
  const std::vector<double>& data() const noexcept { return data_; }

 private:
  double mu0_;
  double sigma0_sq_;
  double sigma_sq_;
  std::vector<double> data_;
  double center_ = 0.0;
  std::vector<long double> sum1_;  // prefix sums of (y - center)
  std::vector<long double> sum2_;  // prefix sums of (y - center)^2
  Transform transform_ = Transform::identity(1);
};

}  // namespace raisor
