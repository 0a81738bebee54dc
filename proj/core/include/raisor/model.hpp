#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "raisor/rng.hpp"
#include "raisor/transform.hpp"

namespace raisor {

/// A Bayesian model over a fixed, ordered observation sequence y_1..y_n.
///
/// Parameters are passed in model space. Conditional log-likelihoods must be
/// additive over consecutive batches, so that
/// batch_loglik(0, n1) == batch_loglik(0, n0) + batch_loglik(n0, n1).
/// Implementations are immutable after construction and safe to share across
/// threads.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::size_t n_obs() const = 0;
  virtual const Transform& transform() const = 0;
  virtual std::vector<std::string> parameter_names() const = 0;

  /// i.i.d. prior draws in model space, one per column.
  virtual Eigen::MatrixXd prior_sample(std::size_t count, Rng& rng) const = 0;

  /// Log prior density in model space; -inf outside the support.
  virtual double log_prior(const Eigen::Ref<const Eigen::VectorXd>& theta) const = 0;

  /// out[i - from] = log [y_{i+1} | theta, y_{1:i}] for i in [from, to).
  virtual void conditional_logliks(const Eigen::Ref<const Eigen::VectorXd>& theta,
                                   std::size_t from, std::size_t to,
                                   std::span<double> out) const = 0;

  /// log [y_{from+1:to} | theta, y_{1:from}].
  virtual double batch_loglik(const Eigen::Ref<const Eigen::VectorXd>& theta, std::size_t from,
                              std::size_t to) const;

  /// out[j] = batch_loglik(from, prefixes[j]) for strictly increasing
  /// prefixes, computed in a single pass over the observations.
  virtual void ladder_logliks(const Eigen::Ref<const Eigen::VectorXd>& theta, std::size_t from,
                              std::span<const std::size_t> prefixes, std::span<double> out) const;

  /// Target log-density in unconstrained coordinates at prefix n, up to the
  /// evidence: log-likelihood + log prior + log Jacobian.
  double log_target_unconstrained(const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t n) const;

 protected:
  void check_range(std::size_t from, std::size_t to) const;
};

}  // namespace raisor
