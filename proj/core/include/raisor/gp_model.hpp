#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <vector>

#include "raisor/model.hpp"
#include "raisor/parallel.hpp"
#include "raisor/sampling.hpp"
#include "raisor/vecchia.hpp"

namespace raisor {

/// Point-referenced data: one row per observation.
struct GpData {
  Eigen::MatrixXd coords;      // n x 2 (x, y) or (lon, lat)
  Eigen::VectorXd y;           // n
  Eigen::MatrixXd covariates;  // n x p design matrix X
};

/// beta ~ N(beta_mean, beta_cov), sigma^2 ~ IG(alpha1/2, alpha2/2),
/// tau^2 ~ U(0, 1), phi ~ Half-Normal(0, gamma_sq).
struct GpPriors {
  Eigen::VectorXd beta_mean;
  Eigen::MatrixXd beta_cov;
  double alpha1 = 2.0;
  double alpha2 = 2.0;
  double gamma_sq = 1.0;

  /// Zero-mean beta prior with variance 1e4 per coefficient.
  static GpPriors weak(std::size_t p);
};

struct GpOptions {
  std::size_t k_neighbors = 0;  // 0 selects default_neighbor_count(n)
  std::uint64_t ordering_seed = 1;
  std::optional<std::vector<std::size_t>> ordering;  // overrides the seed
  DistanceKind distance = DistanceKind::euclidean;
  double nu = 1.5;
  bool bessel_form = false;  // evaluate the Matérn through K_nu (tests only)
};

struct Prediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

/// Gaussian-process regression with Matérn covariance
/// Sigma = sigma^2 {(1 - tau^2) R(phi) + tau^2 I}, approximated by Vecchia
/// conditionals on nearest previously ordered neighbours.
///
/// Parameters are theta = (beta_1..beta_p, sigma^2, tau^2, phi). Observations
/// are consumed in the Vecchia ordering: observation i of the Model interface
/// is position i of the ordering, and the prefix log-likelihood is the sum of
/// the first n univariate conditionals.
class GpModel final : public Model {
 public:
  GpModel(const GpData& data, GpPriors priors, GpOptions options = {});

  std::string name() const override { return "gp"; }
  std::size_t dim() const override { return p_ + 3; }
  std::size_t n_obs() const override { return static_cast<std::size_t>(y_.size()); }
  const Transform& transform() const override { return transform_; }
  std::vector<std::string> parameter_names() const override;

  Eigen::MatrixXd prior_sample(std::size_t count, Rng& rng) const override;
  double log_prior(const Eigen::Ref<const Eigen::VectorXd>& theta) const override;
  void conditional_logliks(const Eigen::Ref<const Eigen::VectorXd>& theta, std::size_t from,
                           std::size_t to, std::span<double> out) const override;

  std::size_t n_covariates() const noexcept { return p_; }
  const GpPriors& priors() const noexcept { return priors_; }
  const GpOptions& options() const noexcept { return options_; }
  const VecchiaStructure& vecchia() const noexcept { return *structure_; }

  /// Data rearranged into the Vecchia ordering.
  const Eigen::VectorXd& y_ordered() const noexcept { return y_; }
  const Eigen::MatrixXd& covariates_ordered() const noexcept { return x_; }
  const Eigen::MatrixXd& coords_ordered() const noexcept { return coords_; }

  double correlation(double distance, double phi) const;

  /// Vecchia factor of the correlation matrix (1 - tau^2) R(phi) + tau^2 I
  /// restricted to the first `rows` ordered observations.
  VecchiaFactor factor(double tau_sq, double phi, std::size_t rows) const;

  /// Log-likelihood of the first factor.rows observations given the factor.
  double loglik_with_factor(const VecchiaFactor& factor,
                            const Eigen::Ref<const Eigen::VectorXd>& beta, double sigma_sq) const;

  /// Posterior predictive mean and marginal SD of a new observation at each
  /// grid location, mixing the per-particle nearest-neighbour conditionals.
  Prediction predict(const WeightedSample& sample, const Eigen::Ref<const Eigen::MatrixXd>& grid,
                     const Eigen::Ref<const Eigen::MatrixXd>& grid_covariates,
                     const ThreadPool& pool = ThreadPool(1)) const;

 private:
  std::size_t p_ = 0;
  Eigen::VectorXd y_;
  Eigen::MatrixXd x_;
  std::vector<double> x_rows_;  // x_ in row-major order for the likelihood loop
  Eigen::MatrixXd coords_;
  GpPriors priors_;
  GpOptions options_;
  std::shared_ptr<const VecchiaStructure> structure_;
  Transform transform_;
  Eigen::LLT<Eigen::MatrixXd> beta_prior_llt_;
  double beta_prior_log_norm_ = 0.0;
  // Distances to neighbours and among neighbours (packed lower triangle).
  std::vector<std::size_t> nb_offset_;
  std::vector<double> nb_dist_;
  std::vector<std::size_t> pair_offset_;
  std::vector<double> pair_dist_;
};

/// Dense (1 - tau^2) R(phi) + tau^2 I over all rows of coords.
Eigen::MatrixXd dense_correlation(const Eigen::Ref<const Eigen::MatrixXd>& coords, double tau_sq,
                                  double phi, double nu, DistanceKind distance);

}  // namespace raisor
