#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>

#include "raisor/errors.hpp"
#include "raisor/rng.hpp"

namespace raisor {

/// Particle approximation of a partial posterior [theta | y_{1:prefix_len}].
///
/// Particles are stored column-wise in unconstrained coordinates. Weights are
/// kept in log space and never normalized in place.
struct WeightedSample {
  Eigen::MatrixXd particles;    // d x M
  Eigen::VectorXd log_weights;  // unnormalized
  Eigen::VectorXd cum_loglik;   // log [y_{1:prefix_len} | theta_m]
  std::size_t prefix_len = 0;
  std::size_t replenish_prefix = 0;  // prefix at which the particles were drawn

  std::size_t size() const noexcept { return static_cast<std::size_t>(particles.cols()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(particles.rows()); }

  /// Throws InvalidArgument if the column/entry counts disagree or M == 0.
  void validate() const;

  /// Equally weighted sample at the given prefix.
  static WeightedSample equally_weighted(Eigen::MatrixXd particles, Eigen::VectorXd cum_loglik,
                                         std::size_t prefix_len);
};

struct RessEstimate {
  double ress = 1.0;
  double ess = 0.0;
  std::size_t n = 0;
  std::size_t n0 = 0;
};

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& log_values);

/// Self-normalized probabilities from log-weights (max-shifted log-sum-exp).
/// Throws DegenerateWeights when no entry is finite or an entry is NaN/+inf.
Eigen::VectorXd normalize(const Eigen::Ref<const Eigen::VectorXd>& log_weights);

/// RESS = (mean w)^2 / mean(w^2) on normalized weights, i.e. 1 / (M sum w^2).
double ress_of_log_weights(const Eigen::Ref<const Eigen::VectorXd>& log_weights);

RessEstimate ress(const WeightedSample& sample);

/// Throws DegenerateWeights unless at least two normalized weights exceed 1e-300.
void require_support(const Eigen::Ref<const Eigen::VectorXd>& normalized_weights);

/// sum_m w_m f(theta_m) with self-normalized weights; f maps a particle
/// column to a vector.
template <typename F>
Eigen::VectorXd self_normalized_estimate(const WeightedSample& sample, F&& f) {
  sample.validate();
  const Eigen::VectorXd w = normalize(sample.log_weights);
  Eigen::VectorXd acc;
  for (Eigen::Index m = 0; m < sample.particles.cols(); ++m) {
    if (w[m] == 0.0) continue;
    Eigen::VectorXd value = f(Eigen::VectorXd(sample.particles.col(m)));
    if (acc.size() == 0) acc = Eigen::VectorXd::Zero(value.size());
    acc.noalias() += w[m] * value;
  }
  return acc;
}

/// Weighted mean of the columns of `points`.
Eigen::VectorXd weighted_mean(const Eigen::Ref<const Eigen::MatrixXd>& points,
                              const Eigen::Ref<const Eigen::VectorXd>& weights);

/// Weighted (population) covariance of the columns of `points`.
Eigen::MatrixXd weighted_covariance(const Eigen::Ref<const Eigen::MatrixXd>& points,
                                    const Eigen::Ref<const Eigen::VectorXd>& weights);

/// Weighted quantile of scalar values, q in [0, 1].
double weighted_quantile(const Eigen::Ref<const Eigen::VectorXd>& values,
                         const Eigen::Ref<const Eigen::VectorXd>& weights, double q);

/// Reduce a weighted sample to `target_size` distinct particles.
///
/// Indices are drawn without replacement proportionally to the weights; the
/// mass SIR with replacement would have put on repeats of already chosen
/// particles is then restored by geometric/multinomial augmentation, and the
/// resulting counts become the new (normalized) weights.
WeightedSample weighted_sir(const WeightedSample& sample, std::size_t target_size, Rng& rng);

}  // namespace raisor
