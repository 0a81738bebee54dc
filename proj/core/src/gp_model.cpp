#include "raisor/gp_model.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "raisor/errors.hpp"
#include "raisor/matern.hpp"

namespace raisor {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kMinCondVar = 1e-12;

// In-place Cholesky of a row-major m x m SPD matrix (lower triangle used).
bool cholesky_in_place(double* a, std::size_t m) {
  for (std::size_t j = 0; j < m; ++j) {
    double diag = a[j * m + j];
    for (std::size_t k = 0; k < j; ++k) diag -= a[j * m + k] * a[j * m + k];
    if (!(diag > 0.0)) return false;
    const double ljj = std::sqrt(diag);
    a[j * m + j] = ljj;
    for (std::size_t i = j + 1; i < m; ++i) {
      double s = a[i * m + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * m + k] * a[j * m + k];
      a[i * m + j] = s / ljj;
    }
  }
  return true;
}

// Solves L z = b in place.
void forward_solve(const double* l, std::size_t m, double* b) {
  for (std::size_t i = 0; i < m; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l[i * m + k] * b[k];
    b[i] = s / l[i * m + i];
  }
}

// Solves L' z = b in place.
void backward_solve(const double* l, std::size_t m, double* b) {
  for (std::size_t i = m; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < m; ++k) s -= l[k * m + i] * b[k];
    b[i] = s / l[i * m + i];
  }
}

// Row-by-row Cholesky of the m x m system in `a` (lower triangle filled),
// solving L u = c and L v = r alongside. Gives u'v and u'u, i.e. the kriging
// mean and explained variance of the next residual. False on breakdown.
bool condition_on_neighbours(double* a, const double* c, const double* r, std::size_t m, double* u,
                             double* v, double* inv_diag, double& mean, double& explained) {
  mean = 0.0;
  explained = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double* row = a + i * m;
    for (std::size_t j = 0; j < i; ++j) {
      const double* rj = a + j * m;
      double s = row[j];
      for (std::size_t k = 0; k < j; ++k) s -= row[k] * rj[k];
      row[j] = s * inv_diag[j];
    }
    double diag = row[i];
    double su = c[i];
    double sv = r[i];
    for (std::size_t k = 0; k < i; ++k) {
      diag -= row[k] * row[k];
      su -= row[k] * u[k];
      sv -= row[k] * v[k];
    }
    if (!(diag > 0.0)) return false;
    const double l = std::sqrt(diag);
    inv_diag[i] = 1.0 / l;
    row[i] = l;
    u[i] = su * inv_diag[i];
    v[i] = sv * inv_diag[i];
    mean += u[i] * v[i];
    explained += u[i] * u[i];
  }
  return true;
}

// Scratch for one neighbour system; sized once per call.
struct Scratch {
  explicit Scratch(std::size_t kmax)
      : chol(kmax * kmax), c(kmax), r(kmax), u(kmax), v(kmax), inv_diag(kmax) {}
  std::vector<double> chol, c, r, u, v, inv_diag;
};

}  // namespace
GpPriors GpPriors::weak(std::size_t p) {
  GpPriors pr;
  pr.beta_mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  pr.beta_cov = 1e4 * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  return pr;
}

GpModel::GpModel(const GpData& data, GpPriors priors, GpOptions options)
    : priors_(std::move(priors)), options_(std::move(options)) {
  const auto n = data.y.size();
  if (n == 0) throw InvalidArgument("GP model: no observations");
  if (data.coords.rows() != n || data.coords.cols() != 2 || data.covariates.rows() != n) {
    throw InvalidArgument("GP model: coords, y and covariates disagree in row count");
  }
  if (!data.y.allFinite() || !data.coords.allFinite() || !data.covariates.allFinite()) {
    throw InvalidArgument("GP model: data contain NaN or infinite values");
  }
  p_ = static_cast<std::size_t>(data.covariates.cols());
  if (priors_.beta_mean.size() == 0) {
    const auto alpha1 = priors_.alpha1, alpha2 = priors_.alpha2, gamma_sq = priors_.gamma_sq;
    priors_ = GpPriors::weak(p_);
    priors_.alpha1 = alpha1;
    priors_.alpha2 = alpha2;
    priors_.gamma_sq = gamma_sq;
  }
  if (static_cast<std::size_t>(priors_.beta_mean.size()) != p_ ||
      static_cast<std::size_t>(priors_.beta_cov.rows()) != p_ ||
      static_cast<std::size_t>(priors_.beta_cov.cols()) != p_) {
    throw InvalidArgument("GP model: beta prior dimension does not match covariates");
  }
  if (!(priors_.alpha1 > 0.0) || !(priors_.alpha2 > 0.0) || !(priors_.gamma_sq > 0.0)) {
    throw InvalidArgument("GP model: prior hyperparameters must be positive");
  }
  if (!(options_.nu > 0.0)) throw InvalidArgument("GP model: smoothness must be positive");
  beta_prior_llt_.compute(priors_.beta_cov);
  if (beta_prior_llt_.info() != Eigen::Success) {
    throw InvalidArgument("GP model: beta prior covariance is not positive definite");
  }
  beta_prior_log_norm_ = -0.5 * static_cast<double>(p_) * kLog2Pi -
                         Eigen::MatrixXd(beta_prior_llt_.matrixL()).diagonal().array().log().sum();

  const std::size_t nn = static_cast<std::size_t>(n);
  const std::size_t k = options_.k_neighbors > 0 ? options_.k_neighbors : default_neighbor_count(nn);
  options_.k_neighbors = k;
  auto structure =
      options_.ordering
          ? build_vecchia(data.coords, k, *options_.ordering, options_.distance)
          : build_vecchia(data.coords, k, options_.ordering_seed, options_.distance);
  structure_ = std::make_shared<const VecchiaStructure>(std::move(structure));

  y_.resize(n);
  x_.resize(n, static_cast<Eigen::Index>(p_));
  coords_.resize(n, 2);
  for (std::size_t i = 0; i < nn; ++i) {
    const auto src = static_cast<Eigen::Index>(structure_->ordering[i]);
    const auto dst = static_cast<Eigen::Index>(i);
    y_[dst] = data.y[src];
    x_.row(dst) = data.covariates.row(src);
    coords_.row(dst) = data.coords.row(src);
  }

  x_rows_.resize(nn * p_);
  for (std::size_t i = 0; i < nn; ++i) {
    for (std::size_t j = 0; j < p_; ++j) {
      x_rows_[i * p_ + j] = x_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }

  nb_offset_.assign(nn + 1, 0);
  pair_offset_.assign(nn + 1, 0);
  for (std::size_t i = 0; i < nn; ++i) {
    const auto m = structure_->neighbors[i].size();
    nb_offset_[i + 1] = nb_offset_[i] + m;
    pair_offset_[i + 1] = pair_offset_[i] + m * (m - (m > 0 ? 1 : 0)) / 2;
  }
  nb_dist_.resize(nb_offset_.back());
  pair_dist_.resize(pair_offset_.back());
  auto dist = [&](std::size_t a, std::size_t b) {
    return location_distance(options_.distance, coords_(static_cast<Eigen::Index>(a), 0),
                             coords_(static_cast<Eigen::Index>(a), 1),
                             coords_(static_cast<Eigen::Index>(b), 0),
                             coords_(static_cast<Eigen::Index>(b), 1));
  };
  for (std::size_t i = 0; i < nn; ++i) {
    const auto& nb = structure_->neighbors[i];
    std::size_t pos = pair_offset_[i];
    for (std::size_t a = 0; a < nb.size(); ++a) {
      nb_dist_[nb_offset_[i] + a] = dist(i, nb[a]);
      for (std::size_t b = 0; b < a; ++b) pair_dist_[pos++] = dist(nb[a], nb[b]);
    }
  }

  std::vector<TransformKind> kinds(p_, TransformKind::identity);
  kinds.push_back(TransformKind::log);
  kinds.push_back(TransformKind::logit);
  kinds.push_back(TransformKind::log);
  transform_ = Transform(std::move(kinds));
}

std::vector<std::string> GpModel::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < p_; ++j) names.push_back("beta" + std::to_string(j));
  names.insert(names.end(), {"sigma_sq", "tau_sq", "phi"});
  return names;
}

double GpModel::correlation(double distance, double phi) const {
  if (options_.bessel_form) return matern_bessel(distance, phi, options_.nu);
  if (options_.nu == 1.5) return matern32(distance, phi);
  return matern_correlation(distance, phi, options_.nu);
}

Eigen::MatrixXd GpModel::prior_sample(std::size_t count, Rng& rng) const {
  const auto d = static_cast<Eigen::Index>(dim());
  const auto p = static_cast<Eigen::Index>(p_);
  Eigen::MatrixXd out(d, static_cast<Eigen::Index>(count));
  std::normal_distribution<double> normal;
  std::gamma_distribution<double> gamma(0.5 * priors_.alpha1, 2.0 / priors_.alpha2);
  const Eigen::MatrixXd l = beta_prior_llt_.matrixL();
  Eigen::VectorXd z(p);
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (Eigen::Index a = 0; a < p; ++a) z[a] = normal(rng);
    out.col(j).head(p) = priors_.beta_mean + l * z;
    out(p, j) = 1.0 / gamma(rng);
    out(p + 1, j) = rng.uniform_pos();
    out(p + 2, j) = std::abs(normal(rng)) * std::sqrt(priors_.gamma_sq);
  }
  return out;
}

double GpModel::log_prior(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  const auto p = static_cast<Eigen::Index>(p_);
  const double sigma_sq = theta[p], tau_sq = theta[p + 1], phi = theta[p + 2];
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (!(sigma_sq > 0.0) || !(tau_sq > 0.0 && tau_sq < 1.0) || !(phi >= 0.0)) return kNegInf;
  const Eigen::VectorXd z =
      beta_prior_llt_.matrixL().solve(Eigen::VectorXd(theta.head(p) - priors_.beta_mean));
  const double lp_beta = beta_prior_log_norm_ - 0.5 * z.squaredNorm();
  const double a = 0.5 * priors_.alpha1, b = 0.5 * priors_.alpha2;
  const double lp_sigma = a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(sigma_sq) - b / sigma_sq;
  const double lp_phi = std::log(2.0) - 0.5 * (kLog2Pi + std::log(priors_.gamma_sq)) -
                        0.5 * phi * phi / priors_.gamma_sq;
  return lp_beta + lp_sigma + lp_phi;
}

void GpModel::conditional_logliks(const Eigen::Ref<const Eigen::VectorXd>& theta, std::size_t from,
                                  std::size_t to, std::span<double> out) const {
  check_range(from, to);
  const auto p = static_cast<Eigen::Index>(p_);
  const double sigma_sq = theta[p], tau_sq = theta[p + 1], phi = theta[p + 2];
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (!(sigma_sq > 0.0) || !(tau_sq >= 0.0 && tau_sq <= 1.0) || !(phi > 0.0)) {
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(to - from), kNegInf);
    return;
  }
  std::vector<double> beta(p_);
  for (std::size_t j = 0; j < p_; ++j) beta[j] = theta[static_cast<Eigen::Index>(j)];
  const double scale = 1.0 - tau_sq;
  const double log_norm = kLog2Pi + std::log(sigma_sq);
  const bool closed_32 = options_.nu == 1.5 && !options_.bessel_form;
  const double inv_range = std::sqrt(3.0) / phi;
  auto corr = [&](double dist) {
    if (closed_32) {
      const double x = dist * inv_range;
      return scale * (1.0 + x) * std::exp(-x);
    }
    return scale * correlation(dist, phi);
  };
  auto residual = [&](std::size_t j) {
    const double* x = x_rows_.data() + j * p_;
    double fit = 0.0;
    for (std::size_t a = 0; a < p_; ++a) fit += x[a] * beta[a];
    return y_[static_cast<Eigen::Index>(j)] - fit;
  };
  Scratch s(options_.k_neighbors);
  for (std::size_t i = from; i < to; ++i) {
    const auto& nb = structure_->neighbors[i];
    const std::size_t m = nb.size();
    const double e = residual(i);
    double mean = 0.0;
    double explained = 0.0;
    if (m > 0) {
      double* c = s.chol.data();
      const double* pd = pair_dist_.data() + pair_offset_[i];
      const double* nd = nb_dist_.data() + nb_offset_[i];
      std::size_t pos = 0;
      for (std::size_t a = 0; a < m; ++a) {
        c[a * m + a] = 1.0;
        for (std::size_t b = 0; b < a; ++b) c[a * m + b] = corr(pd[pos++]);
        s.c[a] = corr(nd[a]);
        s.r[a] = residual(nb[a]);
      }
      if (!condition_on_neighbours(c, s.c.data(), s.r.data(), m, s.u.data(), s.v.data(),
                                   s.inv_diag.data(), mean, explained)) {
        out[i - from] = kNegInf;
        continue;
      }
    }
    const double var = std::max(1.0 - explained, kMinCondVar);
    const double d = e - mean;
    out[i - from] = -0.5 * (log_norm + std::log(var)) - 0.5 * d * d / (sigma_sq * var);
  }
}

VecchiaFactor GpModel::factor(double tau_sq, double phi, std::size_t rows) const {
  if (rows > n_obs()) throw InvalidArgument("factor: rows exceed observation count");
  if (!(tau_sq >= 0.0 && tau_sq <= 1.0) || !(phi > 0.0)) {
    throw InvalidArgument("factor: need tau_sq in [0, 1] and phi > 0");
  }
  VecchiaFactor f;
  f.structure = structure_;
  f.rows = rows;
  f.offsets.assign(nb_offset_.begin(), nb_offset_.begin() + static_cast<std::ptrdiff_t>(rows + 1));
  f.coeffs.resize(f.offsets.back());
  f.cond_var.resize(rows);
  const double scale = 1.0 - tau_sq;
  Scratch s(options_.k_neighbors);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t m = structure_->neighbors[i].size();
    if (m == 0) {
      f.cond_var[i] = 1.0;
      continue;
    }
    double* c = s.chol.data();
    const double* pd = pair_dist_.data() + pair_offset_[i];
    const double* nd = nb_dist_.data() + nb_offset_[i];
    std::size_t pos = 0;
    for (std::size_t a = 0; a < m; ++a) {
      c[a * m + a] = 1.0;
      for (std::size_t b = 0; b < a; ++b) c[a * m + b] = scale * correlation(pd[pos++], phi);
      s.u[a] = scale * correlation(nd[a], phi);
    }
    if (!cholesky_in_place(c, m)) {
      throw NumericalError("factor: neighbour correlation matrix is not positive definite at row " +
                           std::to_string(i));
    }
    forward_solve(c, m, s.u.data());
    double uu = 0.0;
    for (std::size_t a = 0; a < m; ++a) uu += s.u[a] * s.u[a];
    f.cond_var[i] = std::max(1.0 - uu, kMinCondVar);
    backward_solve(c, m, s.u.data());
    for (std::size_t a = 0; a < m; ++a) f.coeffs[f.offsets[i] + a] = s.u[a];
  }
  return f;
}

double GpModel::loglik_with_factor(const VecchiaFactor& factor,
                                   const Eigen::Ref<const Eigen::VectorXd>& beta,
                                   double sigma_sq) const {
  const auto rows = static_cast<Eigen::Index>(factor.rows);
  const Eigen::VectorXd e = y_.head(rows) - x_.topRows(rows) * beta;
  const Eigen::VectorXd le = factor.apply(e);
  return -0.5 * static_cast<double>(rows) * (kLog2Pi + std::log(sigma_sq)) - 0.5 * factor.log_det() -
         0.5 * le.squaredNorm() / sigma_sq;
}

Prediction GpModel::predict(const WeightedSample& sample, const Eigen::Ref<const Eigen::MatrixXd>& grid,
                            const Eigen::Ref<const Eigen::MatrixXd>& grid_covariates,
                            const ThreadPool& pool) const {
  sample.validate();
  if (grid.rows() == 0) throw InvalidArgument("predict: empty grid");
  if (grid.cols() != 2 || grid_covariates.rows() != grid.rows() ||
      static_cast<std::size_t>(grid_covariates.cols()) != p_) {
    throw InvalidArgument("predict: grid coordinates/covariates have wrong shape");
  }
  const Eigen::VectorXd w = normalize(sample.log_weights);
  const auto big_m = sample.particles.cols();
  Eigen::MatrixXd theta(sample.particles.rows(), big_m);
  for (Eigen::Index m = 0; m < big_m; ++m) theta.col(m) = transform_.to_model(sample.particles.col(m));

  const auto g_count = grid.rows();
  Prediction out{Eigen::VectorXd(g_count), Eigen::VectorXd(g_count)};
  const auto p = static_cast<Eigen::Index>(p_);
  const std::size_t k = std::min<std::size_t>(options_.k_neighbors, n_obs());
  pool.parallel_for(static_cast<std::size_t>(g_count), [&](std::size_t begin, std::size_t end, std::size_t) {
    Scratch s(k);
    std::vector<double> nd(k), pd(k * k);
    for (std::size_t g = begin; g < end; ++g) {
      const auto gi = static_cast<Eigen::Index>(g);
      const auto nb = nearest_rows(coords_, grid(gi, 0), grid(gi, 1), k, options_.distance);
      const std::size_t m = nb.size();
      for (std::size_t a = 0; a < m; ++a) {
        const auto ra = static_cast<Eigen::Index>(nb[a]);
        nd[a] = location_distance(options_.distance, grid(gi, 0), grid(gi, 1), coords_(ra, 0), coords_(ra, 1));
        for (std::size_t b = 0; b < a; ++b) {
          const auto rb = static_cast<Eigen::Index>(nb[b]);
          pd[a * m + b] = location_distance(options_.distance, coords_(ra, 0), coords_(ra, 1),
                                            coords_(rb, 0), coords_(rb, 1));
        }
      }
      double first = 0.0, second = 0.0;
      for (Eigen::Index j = 0; j < big_m; ++j) {
        if (w[j] == 0.0) continue;
        const Eigen::VectorXd beta = theta.col(j).head(p);
        const double sigma_sq = theta(p, j), tau_sq = theta(p + 1, j), phi = theta(p + 2, j);
        const double scale = 1.0 - tau_sq;
        double* c = s.chol.data();
        for (std::size_t a = 0; a < m; ++a) {
          c[a * m + a] = 1.0;
          for (std::size_t b = 0; b < a; ++b) c[a * m + b] = scale * correlation(pd[a * m + b], phi);
          s.u[a] = scale * correlation(nd[a], phi);
          s.v[a] = y_[static_cast<Eigen::Index>(nb[a])] -
                   x_.row(static_cast<Eigen::Index>(nb[a])).dot(beta);
        }
        double mean = grid_covariates.row(gi).dot(beta);
        double var = 1.0;
        if (m > 0 && cholesky_in_place(c, m)) {
          forward_solve(c, m, s.u.data());
          forward_solve(c, m, s.v.data());
          double uu = 0.0;
          for (std::size_t a = 0; a < m; ++a) {
            mean += s.u[a] * s.v[a];
            uu += s.u[a] * s.u[a];
          }
          var = std::max(1.0 - uu, 0.0);
        }
        first += w[j] * mean;
        second += w[j] * (sigma_sq * var + mean * mean);
      }
      out.mean[gi] = first;
      out.sd[gi] = std::sqrt(std::max(second - first * first, 0.0));
    }
  });
  return out;
}

Eigen::MatrixXd dense_correlation(const Eigen::Ref<const Eigen::MatrixXd>& coords, double tau_sq,
                                  double phi, double nu, DistanceKind distance) {
  const auto n = coords.rows();
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double d = location_distance(distance, coords(i, 0), coords(i, 1), coords(j, 0), coords(j, 1));
      c(i, j) = c(j, i) = (1.0 - tau_sq) * matern_correlation(d, phi, nu);
    }
  }
  return c;
}

}  // namespace raisor
