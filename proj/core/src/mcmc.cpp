#include "raisor/mcmc.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "raisor/errors.hpp"

namespace raisor {

namespace {

double logit(double p) { return std::log(p) - std::log1p(-p); }

double logistic(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// log [tau^2, phi] on the (logit tau^2, log phi) scale, up to a constant.
double log_range_nugget_density(const GpModel& model, double tau_sq, double phi) {
  const double g = model.priors().gamma_sq;
  return -0.5 * phi * phi / g + std::log(tau_sq) + std::log1p(-tau_sq) + std::log(phi);
}

}  // namespace

GibbsState GibbsState::make(const GpModel& model, Eigen::VectorXd beta, double sigma_sq, double tau_sq,
                            double phi, std::size_t rows, double tune_log_var) {
  if (rows == 0 || rows > model.n_obs()) throw InvalidArgument("Gibbs state: rows out of range");
  if (static_cast<std::size_t>(beta.size()) != model.n_covariates()) {
    throw InvalidArgument("Gibbs state: beta has wrong length");
  }
  if (!(sigma_sq > 0.0) || !(tau_sq > 0.0 && tau_sq < 1.0) || !(phi > 0.0)) {
    throw InvalidArgument("Gibbs state: need sigma_sq > 0, tau_sq in (0, 1), phi > 0");
  }
  GibbsState s;
  s.beta = std::move(beta);
  s.sigma_sq = sigma_sq;
  s.tau_sq = tau_sq;
  s.phi = phi;
  s.rows = rows;
  s.tune_log_var = tune_log_var;
  s.factor = model.factor(tau_sq, phi, rows);
  return s;
}

GibbsState GibbsState::default_start(const GpModel& model, std::size_t rows, double tune_log_var) {
  const auto r = static_cast<Eigen::Index>(rows);
  const Eigen::MatrixXd x = model.covariates_ordered().topRows(r);
  const Eigen::VectorXd y = model.y_ordered().head(r);
  Eigen::VectorXd beta = model.priors().beta_mean;
  double sigma_sq = 1.0;
  if (r > x.cols()) {
    beta = x.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd e = y - x * beta;
    sigma_sq = std::max(e.squaredNorm() / static_cast<double>(r - x.cols()), 1e-6);
  }
  return make(model, std::move(beta), sigma_sq, 0.1, 0.1, rows, tune_log_var);
}

Eigen::VectorXd gibbs_beta(const GibbsState& state, const GpModel& model, Rng& rng) {
  const auto r = static_cast<Eigen::Index>(state.rows);
  const Eigen::MatrixXd lx = state.factor.apply_columns(model.covariates_ordered().topRows(r));
  const Eigen::VectorXd ly = state.factor.apply(model.y_ordered().head(r));
  const auto& pr = model.priors();
  Eigen::LLT<Eigen::MatrixXd> prior_llt(pr.beta_cov);
  const Eigen::MatrixXd prior_prec = prior_llt.solve(Eigen::MatrixXd::Identity(pr.beta_cov.rows(), pr.beta_cov.cols()));
  const Eigen::MatrixXd precision = lx.transpose() * lx / state.sigma_sq + prior_prec;
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("gibbs_beta: conditional precision is not positive definite (sigma_sq=" +
                         std::to_string(state.sigma_sq) + ")");
  }
  const Eigen::VectorXd mean = llt.solve(lx.transpose() * ly / state.sigma_sq + prior_prec * pr.beta_mean);
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  return mean + llt.matrixU().solve(z);
}

double gibbs_sigma_sq(const GibbsState& state, const GpModel& model, Rng& rng) {
  const auto r = static_cast<Eigen::Index>(state.rows);
  const Eigen::VectorXd e = model.y_ordered().head(r) - model.covariates_ordered().topRows(r) * state.beta;
  const double quad = state.factor.apply(e).squaredNorm();
  const double shape = 0.5 * (model.priors().alpha1 + static_cast<double>(state.rows));
  const double rate = 0.5 * (model.priors().alpha2 + quad);
  std::gamma_distribution<double> gamma(shape, 1.0 / rate);
  return 1.0 / gamma(rng);
}

bool mh_range_nugget(GibbsState& state, const GpModel& model, Rng& rng) {
  const double sd = std::exp(0.5 * state.tune_log_var);
  if (sd == 0.0) return true;
  std::normal_distribution<double> normal;
  const double a = logit(state.tau_sq) + sd * normal(rng);
  const double b = std::log(state.phi) + sd * normal(rng);
  const double tau_new = logistic(a);
  const double phi_new = std::exp(b);
  if (!(tau_new > 0.0 && tau_new < 1.0) || !(phi_new > 0.0) || !std::isfinite(phi_new)) return false;
  if (tau_new == state.tau_sq && phi_new == state.phi) return true;
  VecchiaFactor proposed;
  try {
    proposed = model.factor(tau_new, phi_new, state.rows);
  } catch (const NumericalError&) {
    return false;
  }
  const double old_lp = model.loglik_with_factor(state.factor, state.beta, state.sigma_sq) +
                        log_range_nugget_density(model, state.tau_sq, state.phi);
  const double new_lp = model.loglik_with_factor(proposed, state.beta, state.sigma_sq) +
                        log_range_nugget_density(model, tau_new, phi_new);
  const double log_ratio = new_lp - old_lp;
  if (!(std::isfinite(log_ratio))) return false;
  if (log_ratio >= 0.0 || std::log(rng.uniform_pos()) < log_ratio) {
    state.tau_sq = tau_new;
    state.phi = phi_new;
    state.factor = std::move(proposed);
    return true;
  }
  return false;
}

double preset_tune_log_var(std::size_t n) {
  static constexpr std::array<double, 6> kPresets{0.93, 0.34, -0.86, -1.91, -2.68, -3.35};
  std::size_t size = 320;
  for (double v : kPresets) {
    if (n == size) return v;
    size *= 2;
  }
  return 0.0;
}

ChainResult run_chain(const GpModel& model, const McmcConfig& config, Rng& rng,
                      std::optional<GibbsState> start) {
  if (config.iterations <= config.burn_in) throw InvalidArgument("run_chain: iterations must exceed burn_in");
  if (config.thin == 0) throw InvalidArgument("run_chain: thin must be positive");
  const std::size_t rows = config.rows == 0 ? model.n_obs() : config.rows;
  const double tune0 = config.tune_log_var.value_or(preset_tune_log_var(rows));
  GibbsState state = start ? std::move(*start) : GibbsState::default_start(model, rows, tune0);
  if (state.rows != rows) throw InvalidArgument("run_chain: start state covers a different row count");
  if (!start) state.tune_log_var = tune0;

  const auto begin = std::chrono::steady_clock::now();
  const std::size_t kept = (config.iterations - config.burn_in + config.thin - 1) / config.thin;
  const auto p = static_cast<Eigen::Index>(model.n_covariates());
  ChainResult out;
  out.draws.resize(static_cast<Eigen::Index>(kept), p + 3);
  std::size_t accepted = 0, burn_accepted = 0, row = 0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    state.beta = gibbs_beta(state, model, rng);
    state.sigma_sq = gibbs_sigma_sq(state, model, rng);
    const bool acc = mh_range_nugget(state, model, rng);
    if (it < config.burn_in) {
      burn_accepted += acc;
      const double step = 1.0 / std::pow(1.0 + static_cast<double>(it) / 10.0, 0.6);
      state.tune_log_var += 2.0 * step * ((acc ? 1.0 : 0.0) - config.target_accept);
      continue;
    }
    accepted += acc;
    if ((it - config.burn_in) % config.thin == 0) {
      const auto r = static_cast<Eigen::Index>(row++);
      out.draws.row(r).head(p) = state.beta.transpose();
      out.draws(r, p) = state.sigma_sq;
      out.draws(r, p + 1) = state.tau_sq;
      out.draws(r, p + 2) = state.phi;
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
  out.acceptance = static_cast<double>(accepted) / static_cast<double>(config.iterations - config.burn_in);
  out.burn_in_acceptance =
      config.burn_in == 0 ? 0.0 : static_cast<double>(burn_accepted) / static_cast<double>(config.burn_in);
  out.tune_log_var = state.tune_log_var;
  // Each iteration evaluates one proposed likelihood over the rows.
  out.n_evals = static_cast<std::uint64_t>(config.iterations) * rows;
  for (Eigen::Index j = 0; j < out.draws.cols(); ++j) {
    const Eigen::VectorXd col = out.draws.col(j);
    out.ess.push_back(effective_sample_size(std::span<const double>(col.data(), static_cast<std::size_t>(col.size()))));
  }
  return out;
}

double effective_sample_size(std::span<const double> chain) {
  const std::size_t n = chain.size();
  if (n < 4) return static_cast<double>(n);
  double mean = 0.0;
  for (double v : chain) mean += v;
  mean /= static_cast<double>(n);
  auto autocov = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) acc += (chain[i] - mean) * (chain[i + lag] - mean);
    return acc / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  if (!(c0 > 1e-300 * std::max(1.0, mean * mean))) return 1.0;
  double sum = 0.0;
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double gamma = (autocov(2 * k) + autocov(2 * k + 1)) / c0;
    if (gamma <= 0.0) break;
    gamma = std::min(gamma, previous);  // monotone
    previous = gamma;
    sum += gamma;
  }
  const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / static_cast<double>(n));
  return static_cast<double>(n) / tau;
}

WeightedSample sample_partial_posterior(const GpModel& model, std::size_t rows, std::size_t count,
                                        Rng& rng, std::size_t burn_in, std::size_t thin) {
  if (count == 0) throw InvalidArgument("sample_partial_posterior: count must be positive");
  McmcConfig config;
  config.rows = rows;
  config.burn_in = burn_in;
  config.thin = thin;
  config.iterations = burn_in + count * thin;
  const ChainResult chain = run_chain(model, config, rng);
  const auto d = static_cast<Eigen::Index>(model.dim());
  Eigen::MatrixXd x(d, static_cast<Eigen::Index>(count));
  Eigen::VectorXd cum(static_cast<Eigen::Index>(count));
  for (Eigen::Index m = 0; m < x.cols(); ++m) {
    const Eigen::VectorXd theta = chain.draws.row(m).transpose();
    x.col(m) = model.transform().to_unconstrained(theta);
    cum[m] = model.batch_loglik(theta, 0, rows);
  }
  return WeightedSample::equally_weighted(std::move(x), std::move(cum), rows);
}

void write_chain_csv(std::ostream& out, const GpModel& model, const ChainResult& chain,
                     std::size_t first_iteration) {
  out << "iteration";
  for (const auto& name : model.parameter_names()) out << ',' << name;
  out << '\n';
  std::ostringstream line;
  line.precision(17);
  for (Eigen::Index i = 0; i < chain.draws.rows(); ++i) {
    line.str("");
    line << first_iteration + static_cast<std::size_t>(i);
    for (Eigen::Index j = 0; j < chain.draws.cols(); ++j) line << ',' << chain.draws(i, j);
    line << '\n';
    out << line.str();
  }
}

}  // namespace raisor
