#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "raisor/gp_model.hpp"
#include "raisor/rng.hpp"
#include "raisor/sampling.hpp"
#include "raisor/vecchia.hpp"

namespace raisor {

/// Metropolis-within-Gibbs state for the Vecchia GP. `factor` always
/// matches (tau_sq, phi) over the first `rows` ordered observations.
struct GibbsState {
  Eigen::VectorXd beta;
  double sigma_sq = 1.0;
  double tau_sq = 0.1;
  double phi = 0.1;
  double tune_log_var = 0.0;  // log variance of the (logit tau^2, log phi) random walk
  std::size_t rows = 0;
  VecchiaFactor factor;

  static GibbsState make(const GpModel& model, Eigen::VectorXd beta, double sigma_sq, double tau_sq,
                         double phi, std::size_t rows, double tune_log_var = 0.0);
  /// OLS beta, residual variance, tau^2 = 0.1, phi = 0.1.
  static GibbsState default_start(const GpModel& model, std::size_t rows, double tune_log_var = 0.0);
};

/// Draw from beta | sigma^2, tau^2, phi, y.
Eigen::VectorXd gibbs_beta(const GibbsState& state, const GpModel& model, Rng& rng);

/// Draw from sigma^2 | beta, tau^2, phi, y ~ IG((alpha1 + n) / 2, (alpha2 + e'L'Le) / 2).
double gibbs_sigma_sq(const GibbsState& state, const GpModel& model, Rng& rng);

/// Joint random-walk Metropolis step on (logit tau^2, log phi). Returns
/// whether the proposal was accepted; the factor is rebuilt on acceptance.
bool mh_range_nugget(GibbsState& state, const GpModel& model, Rng& rng);

struct McmcConfig {
  std::size_t iterations = 20000;  // total, including burn-in
  std::size_t burn_in = 5000;
  std::size_t thin = 1;
  std::size_t rows = 0;            // 0 = all observations
  std::optional<double> tune_log_var;  // default: preset_tune_log_var(rows)
  double target_accept = 0.234;
};

struct ChainResult {
  Eigen::MatrixXd draws;        // kept iterations x (p + 3), model space
  std::vector<double> ess;      // per parameter
  double acceptance = 0.0;      // post-burn-in MH acceptance rate
  double burn_in_acceptance = 0.0;
  double tune_log_var = 0.0;    // frozen value used after burn-in
  double seconds = 0.0;
  std::uint64_t n_evals = 0;    // conditional likelihood evaluations
};

/// Starting log sigma^2_tune for a given data size: hand-tuned values at
/// n = 320 * 2^j (j = 0..5), 0 elsewhere.
double preset_tune_log_var(std::size_t n);

/// Burn-in with Robbins-Monro adaptation of tune_log_var towards
/// target_accept, then a fixed kernel.
ChainResult run_chain(const GpModel& model, const McmcConfig& config, Rng& rng,
                      std::optional<GibbsState> start = std::nullopt);

/// Effective sample size by Geyer's initial monotone positive sequence.
/// A constant chain has ESS 1.
double effective_sample_size(std::span<const double> chain);

/// Equally weighted sample from the partial posterior at `rows` observations,
/// thinned from one chain (used to initialise the importance sampler).
WeightedSample sample_partial_posterior(const GpModel& model, std::size_t rows, std::size_t count,
                                        Rng& rng, std::size_t burn_in = 2000, std::size_t thin = 5);

/// Columns: iteration, parameter names.
void write_chain_csv(std::ostream& out, const GpModel& model, const ChainResult& chain,
                     std::size_t first_iteration);

}  // namespace raisor
