#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "raisor/rng.hpp"
#include "raisor/sampling.hpp"
#include "raisor/transform.hpp"

namespace raisor {

/// Gaussian mixture in unconstrained coordinates; the importance proposal.
class MixtureProposal {
 public:
  MixtureProposal() = default;

  /// Validates and caches Cholesky factors. Weights must sum to 1 within
  /// 1e-9 (they are then renormalized exactly); covariances must be SPD.
  MixtureProposal(Eigen::VectorXd weights, std::vector<Eigen::VectorXd> means,
                  std::vector<Eigen::MatrixXd> covariances, Transform transform);

  /// Single Gaussian with the given mean/covariance.
  static MixtureProposal gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance,
                                  Transform transform);

  std::size_t n_components() const noexcept { return static_cast<std::size_t>(weights_.size()); }
  std::size_t dim() const noexcept { return transform_.dim(); }
  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  const Eigen::VectorXd& mean(std::size_t k) const { return means_.at(k); }
  const Eigen::MatrixXd& covariance(std::size_t k) const { return covariances_.at(k); }
  const Eigen::MatrixXd& cholesky_lower(std::size_t k) const { return chol_.at(k); }
  const Transform& transform() const noexcept { return transform_; }

  /// Mixture log-density at an unconstrained point; no Jacobian included.
  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Density of the induced distribution on model-space theta.
  double log_density_model_space(const Eigen::Ref<const Eigen::VectorXd>& theta) const;

  /// Log-density of every column of `points`.
  Eigen::VectorXd log_density_many(const Eigen::Ref<const Eigen::MatrixXd>& points) const;

  void sample_into(Rng& rng, Eigen::Ref<Eigen::VectorXd> out) const;
  Eigen::MatrixXd sample(std::size_t count, Rng& rng) const;

  /// Same mixture with every covariance multiplied by `factor` (>= 1 widens tails).
  MixtureProposal inflated(double factor) const;

  /// Versioned JSON document: weights, means, lower Cholesky factors, transform tags.
  std::string to_json() const;
  static MixtureProposal from_json(const std::string& text);

 private:
  Eigen::VectorXd weights_;
  Eigen::VectorXd log_weights_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> covariances_;
  std::vector<Eigen::MatrixXd> chol_;
  std::vector<double> log_norm_;  // -0.5 d log(2 pi) - log det L
  Transform transform_;
};

struct EmOptions {
  double tol = 1e-8;        // relative log-likelihood improvement
  int max_iter = 500;
  int restarts = 3;
  double reg_scale = 1e-8;  // eps_reg = reg_scale * trace(S) / d
};

struct EmFit {
  MixtureProposal mixture;
  std::vector<double> loglik_trace;  // weighted log-likelihood per iteration, best restart
  int iterations = 0;
  bool converged = false;
};

/// Weighted EM for a K-component full-covariance Gaussian mixture.
///
/// points is d x N (unconstrained coordinates) and weights are probabilities.
/// Seeding uses weighted k-means++ with `restarts` independent starts; the
/// restart with the best final weighted log-likelihood is kept.
EmFit fit_weighted_em_detailed(const Eigen::Ref<const Eigen::MatrixXd>& points,
                               const Eigen::Ref<const Eigen::VectorXd>& weights, std::size_t K,
                               Rng& rng, const EmOptions& options = {},
                               Transform transform = {});

MixtureProposal fit_weighted_em(const Eigen::Ref<const Eigen::MatrixXd>& points,
                                const Eigen::Ref<const Eigen::VectorXd>& weights, std::size_t K,
                                Rng& rng, const EmOptions& options = {}, Transform transform = {});

/// Weighted mixture log-likelihood sum_i w_i log q(x_i).
double weighted_loglik(const MixtureProposal& mixture,
                       const Eigen::Ref<const Eigen::MatrixXd>& points,
                       const Eigen::Ref<const Eigen::VectorXd>& weights);

enum class DivergenceKind { kl, chi2, tv };

/// Generator phi of the f-divergence E_p phi(q / p): convex, phi(1) = 0.
double divergence_generator(DivergenceKind kind, double ratio);

/// Weighted-average estimate of D(target || proposal) from a weighted sample
/// of the target. `target_logpdf` must be the normalized target log-density in
/// unconstrained coordinates.
///
/// The generator is shifted by c (x - 1) with c chosen per kind (KL: -1,
/// TV: 1/2); the shift has zero expectation under the target and keeps the
/// estimator consistent when the proposal puts mass the sample never visits.
double estimate_divergence(DivergenceKind kind, const WeightedSample& sample,
                           const MixtureProposal& proposal,
                           const std::function<double(const Eigen::VectorXd&)>& target_logpdf);

}  // namespace raisor
