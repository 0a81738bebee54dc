#include "raisor/approx.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "raisor/errors.hpp"

namespace raisor {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr int kMixtureFormatVersion = 1;

}  // namespace

MixtureProposal::MixtureProposal(Eigen::VectorXd weights, std::vector<Eigen::VectorXd> means,
                                 std::vector<Eigen::MatrixXd> covariances, Transform transform)
    : weights_(std::move(weights)),
      means_(std::move(means)),
      covariances_(std::move(covariances)),
      transform_(std::move(transform)) {
  const auto k = static_cast<std::size_t>(weights_.size());
  if (k == 0) throw InvalidArgument("mixture needs at least one component");
  if (means_.size() != k || covariances_.size() != k) {
    throw InvalidArgument("mixture: weights, means and covariances differ in count");
  }
  const auto d = means_.front().size();
  if (transform_.dim() == 0) transform_ = Transform::identity(static_cast<std::size_t>(d));
  if (static_cast<Eigen::Index>(transform_.dim()) != d) {
    throw InvalidArgument("mixture: transform dimension does not match means");
  }
  if ((weights_.array() < 0.0).any() || std::abs(weights_.sum() - 1.0) > 1e-9) {
    throw InvalidArgument("mixture weights must be nonnegative and sum to 1");
  }
  weights_ /= weights_.sum();
  log_weights_ = weights_.array().log().matrix();
  chol_.reserve(k);
  log_norm_.reserve(k);
  for (std::size_t c = 0; c < k; ++c) {
    if (means_[c].size() != d || covariances_[c].rows() != d || covariances_[c].cols() != d) {
      throw InvalidArgument("mixture: component dimensions disagree");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(covariances_[c]);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("mixture: covariance of component " + std::to_string(c) +
                           " is not positive definite");
    }
    Eigen::MatrixXd lower = llt.matrixL();
    const double log_det_l = lower.diagonal().array().log().sum();
    log_norm_.push_back(-0.5 * static_cast<double>(d) * kLog2Pi - log_det_l);
    chol_.push_back(std::move(lower));
  }
}

MixtureProposal MixtureProposal::gaussian(const Eigen::VectorXd& mean,
                                          const Eigen::MatrixXd& covariance,
                                          Transform transform) {
  return MixtureProposal(Eigen::VectorXd::Ones(1), {mean}, {covariance}, std::move(transform));
}

double MixtureProposal::log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (static_cast<std::size_t>(x.size()) != dim()) {
    throw InvalidArgument("mixture log_density: dimension mismatch");
  }
  const std::size_t k = n_components();
  double top = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd terms(static_cast<Eigen::Index>(k));
  for (std::size_t c = 0; c < k; ++c) {
    const Eigen::VectorXd z = chol_[c].triangularView<Eigen::Lower>().solve(x - means_[c]);
    const double t = log_weights_[static_cast<Eigen::Index>(c)] + log_norm_[c] - 0.5 * z.squaredNorm();
    terms[static_cast<Eigen::Index>(c)] = t;
    top = std::max(top, t);
  }
  if (!std::isfinite(top)) return top;
  return top + std::log((terms.array() - top).exp().sum());
}

double MixtureProposal::log_density_model_space(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  const Eigen::VectorXd x = transform_.to_unconstrained(theta);
  return log_density(x) - transform_.log_abs_det_jacobian(x);
}

Eigen::VectorXd MixtureProposal::log_density_many(const Eigen::Ref<const Eigen::MatrixXd>& points) const {
  if (static_cast<std::size_t>(points.rows()) != dim()) {
    throw InvalidArgument("mixture log_density: dimension mismatch");
  }
  const auto n = points.cols();
  const std::size_t k = n_components();
  Eigen::MatrixXd terms(static_cast<Eigen::Index>(k), n);
  for (std::size_t c = 0; c < k; ++c) {
    Eigen::MatrixXd z = points.colwise() - means_[c];
    chol_[c].triangularView<Eigen::Lower>().solveInPlace(z);
    terms.row(static_cast<Eigen::Index>(c)) =
        (log_weights_[static_cast<Eigen::Index>(c)] + log_norm_[c]) -
        0.5 * z.colwise().squaredNorm().array();
  }
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = log_sum_exp(terms.col(i));
  return out;
}

void MixtureProposal::sample_into(Rng& rng, Eigen::Ref<Eigen::VectorXd> out) const {
  const double u = rng.uniform();
  std::size_t c = 0;
  double acc = weights_[0];
  while (u >= acc && c + 1 < n_components()) acc += weights_[static_cast<Eigen::Index>(++c)];
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(static_cast<Eigen::Index>(dim()));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  out = means_[c] + chol_[c] * z;
}

Eigen::MatrixXd MixtureProposal::sample(std::size_t count, Rng& rng) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(dim()), static_cast<Eigen::Index>(count));
  Eigen::VectorXd draw(static_cast<Eigen::Index>(dim()));
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    sample_into(rng, draw);
    out.col(j) = draw;
  }
  return out;
}

MixtureProposal MixtureProposal::inflated(double factor) const {
  if (!(factor > 0.0)) throw InvalidArgument("inflation factor must be positive");
  std::vector<Eigen::MatrixXd> covs = covariances_;
  for (auto& c : covs) c *= factor;
  return MixtureProposal(weights_, means_, std::move(covs), transform_);
}

std::string MixtureProposal::to_json() const {
  nlohmann::json doc;
  doc["format"] = "raisor.mixture";
  doc["version"] = kMixtureFormatVersion;
  doc["dim"] = dim();
  doc["weights"] = std::vector<double>(weights_.data(), weights_.data() + weights_.size());
  auto& comps = doc["components"] = nlohmann::json::array();
  for (std::size_t c = 0; c < n_components(); ++c) {
    std::vector<double> lower;
    for (Eigen::Index i = 0; i < chol_[c].rows(); ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) lower.push_back(chol_[c](i, j));
    }
    comps.push_back({{"mean", std::vector<double>(means_[c].data(), means_[c].data() + means_[c].size())},
                     {"chol_lower", lower}});
  }
  std::vector<std::string> tags;
  for (auto k : transform_.kinds()) tags.push_back(to_string(k));
  doc["transform"] = tags;
  return doc.dump(2);
}

MixtureProposal MixtureProposal::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("mixture JSON: ") + e.what());
  }
  if (doc.value("format", "") != "raisor.mixture") {
    throw InvalidArgument("mixture JSON: unexpected format tag");
  }
  if (doc.value("version", 0) != kMixtureFormatVersion) {
    throw InvalidArgument("mixture JSON: unsupported version");
  }
  const auto d = doc.at("dim").get<Eigen::Index>();
  const auto w = doc.at("weights").get<std::vector<double>>();
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  for (const auto& comp : doc.at("components")) {
    const auto mean = comp.at("mean").get<std::vector<double>>();
    const auto lower = comp.at("chol_lower").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(mean.size()) != d ||
        static_cast<Eigen::Index>(lower.size()) != d * (d + 1) / 2) {
      throw InvalidArgument("mixture JSON: component has wrong dimension");
    }
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(d, d);
    std::size_t pos = 0;
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) l(i, j) = lower[pos++];
    }
    means.push_back(Eigen::Map<const Eigen::VectorXd>(mean.data(), d));
    covs.push_back(l * l.transpose());
  }
  std::vector<TransformKind> kinds;
  for (const auto& tag : doc.at("transform")) kinds.push_back(transform_from_string(tag.get<std::string>()));
  return MixtureProposal(Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size())),
                         std::move(means), std::move(covs), Transform(std::move(kinds)));
}

double weighted_loglik(const MixtureProposal& mixture,
                       const Eigen::Ref<const Eigen::MatrixXd>& points,
                       const Eigen::Ref<const Eigen::VectorXd>& weights) {
  return weights.dot(mixture.log_density_many(points));
}

namespace {

struct EmState {
  Eigen::VectorXd pi;
  std::vector<Eigen::VectorXd> mu;
  std::vector<Eigen::MatrixXd> sigma;
};

// Weighted k-means++ centers, then one hard assignment to build a start.
EmState seed_kmeanspp(const Eigen::Ref<const Eigen::MatrixXd>& x,
                      const Eigen::Ref<const Eigen::VectorXd>& w, std::size_t K,
                      const Eigen::MatrixXd& reg, const Eigen::MatrixXd& global_cov, Rng& rng) {
  const auto n = x.cols();
  std::vector<Eigen::Index> centers;
  auto pick = [&](const Eigen::VectorXd& mass) {
    const double total = mass.sum();
    double u = rng.uniform() * total;
    for (Eigen::Index i = 0; i < n; ++i) {
      u -= mass[i];
      if (u < 0.0) return i;
    }
    Eigen::Index last = n - 1;
    while (last > 0 && mass[last] <= 0.0) --last;
    return last;
  };
  centers.push_back(pick(w));
  Eigen::VectorXd d2 = (x.colwise() - x.col(centers[0])).colwise().squaredNorm().transpose();
  while (centers.size() < K) {
    Eigen::VectorXd mass = w.cwiseProduct(d2);
    if (!(mass.sum() > 0.0)) break;
    const Eigen::Index c = pick(mass);
    centers.push_back(c);
    d2 = d2.cwiseMin((x.colwise() - x.col(c)).colwise().squaredNorm().transpose());
  }
  while (centers.size() < K) centers.push_back(pick(w));

  std::vector<Eigen::Index> label(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < K; ++c) {
      const double dist = (x.col(i) - x.col(centers[c])).squaredNorm();
      if (dist < best) {
        best = dist;
        label[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(c);
      }
    }
  }
  EmState s;
  s.pi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K));
  const auto d = x.rows();
  for (std::size_t c = 0; c < K; ++c) {
    Eigen::VectorXd wc = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (label[static_cast<std::size_t>(i)] == static_cast<Eigen::Index>(c)) wc[i] = w[i];
    }
    const double mass = wc.sum();
    if (mass > 0.0) {
      s.pi[static_cast<Eigen::Index>(c)] = mass;
      s.mu.push_back(x * wc / mass);
      const Eigen::MatrixXd centered = x.colwise() - s.mu.back();
      s.sigma.push_back(centered * wc.asDiagonal() * centered.transpose() / mass + reg);
    } else {
      s.pi[static_cast<Eigen::Index>(c)] = 1e-3;
      s.mu.push_back(x.col(centers[c]));
      s.sigma.push_back(global_cov + reg);
    }
  }
  s.pi /= s.pi.sum();
  (void)d;
  return s;
}

struct EmRun {
  EmState state;
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
};

// Returns false if a component collapsed (zero responsibility mass).
bool run_em(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& w,
            const Eigen::MatrixXd& reg, const EmOptions& opt, EmRun& run) {
  const auto n = x.cols();
  const auto d = x.rows();
  auto& s = run.state;
  const auto K = s.pi.size();
  Eigen::MatrixXd logr(K, n);
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < opt.max_iter; ++it) {
    // E-step on the current parameters; also yields the log-likelihood.
    for (Eigen::Index c = 0; c < K; ++c) {
      Eigen::LLT<Eigen::MatrixXd> llt(s.sigma[static_cast<std::size_t>(c)]);
      if (llt.info() != Eigen::Success) return false;
      Eigen::MatrixXd z = x.colwise() - s.mu[static_cast<std::size_t>(c)];
      llt.matrixL().solveInPlace(z);
      const double log_det = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
      logr.row(c) = (std::log(s.pi[c]) - 0.5 * (static_cast<double>(d) * kLog2Pi + log_det)) -
                    0.5 * z.colwise().squaredNorm().array();
    }
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double lse = log_sum_exp(logr.col(i));
      ll += w[i] * lse;
      logr.col(i).array() -= lse;
    }
    run.trace.push_back(ll);
    run.iterations = it + 1;
    if (std::isfinite(prev) && std::abs(ll - prev) <= opt.tol * std::abs(prev)) {
      run.converged = true;
      return true;
    }
    prev = ll;

    // M-step.
    const Eigen::MatrixXd resp = logr.array().exp().matrix();
    for (Eigen::Index c = 0; c < K; ++c) {
      const Eigen::VectorXd wc = resp.row(c).transpose().cwiseProduct(w);
      const double mass = wc.sum();
      if (!(mass > 1e-12)) return false;
      s.pi[c] = mass;
      const auto ci = static_cast<std::size_t>(c);
      s.mu[ci] = x * wc / mass;
      const Eigen::MatrixXd centered = x.colwise() - s.mu[ci];
      s.sigma[ci] = centered * wc.asDiagonal() * centered.transpose() / mass + reg;
    }
    s.pi /= s.pi.sum();
  }
  return true;
}

}  // namespace

EmFit fit_weighted_em_detailed(const Eigen::Ref<const Eigen::MatrixXd>& points,
                               const Eigen::Ref<const Eigen::VectorXd>& weights, std::size_t K,
                               Rng& rng, const EmOptions& options, Transform transform) {
  const auto d = points.rows();
  const auto n = points.cols();
  if (K == 0) throw InvalidArgument("fit_weighted_em: K must be positive");
  if (weights.size() != n) throw InvalidArgument("fit_weighted_em: weights/points length mismatch");
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-8) {
    throw InvalidArgument("fit_weighted_em: weights must be probabilities");
  }
  const auto support = static_cast<std::size_t>((weights.array() > 0.0).count());
  if (support < K * static_cast<std::size_t>(d + 1)) {
    throw ComponentStarvation("fit_weighted_em: " + std::to_string(support) +
                              " supported points cannot feed " + std::to_string(K) + " components");
  }
  if (transform.dim() == 0) transform = Transform::identity(static_cast<std::size_t>(d));

  const Eigen::MatrixXd global_cov = weighted_covariance(points, weights);
  const double scale = std::max(global_cov.trace() / static_cast<double>(d),
                                std::numeric_limits<double>::min());
  const Eigen::MatrixXd reg = options.reg_scale * scale * Eigen::MatrixXd::Identity(d, d);

  EmRun best;
  bool have_best = false;
  for (int restart = 0; restart < std::max(1, options.restarts); ++restart) {
    EmRun run;
    run.state = seed_kmeanspp(points, weights, K, reg, global_cov, rng);
    if (!run_em(points, weights, reg, options, run)) continue;
    if (!have_best || run.trace.back() > best.trace.back()) {
      best = std::move(run);
      have_best = true;
    }
    if (K == 1) break;  // deterministic: no point restarting
  }
  if (!have_best) {
    throw ComponentStarvation("fit_weighted_em: every restart lost a component");
  }
  EmFit fit{MixtureProposal(best.state.pi, best.state.mu, best.state.sigma, std::move(transform)),
            std::move(best.trace), best.iterations, best.converged};
  return fit;
}

MixtureProposal fit_weighted_em(const Eigen::Ref<const Eigen::MatrixXd>& points,
                                const Eigen::Ref<const Eigen::VectorXd>& weights, std::size_t K,
                                Rng& rng, const EmOptions& options, Transform transform) {
  return fit_weighted_em_detailed(points, weights, K, rng, options, std::move(transform)).mixture;
}

double divergence_generator(DivergenceKind kind, double ratio) {
  switch (kind) {
    case DivergenceKind::kl: return -std::log(ratio);
    case DivergenceKind::chi2: return (ratio - 1.0) * (ratio - 1.0) / ratio;
    case DivergenceKind::tv: return 0.5 * std::abs(ratio - 1.0);
  }
  return 0.0;
}

double estimate_divergence(DivergenceKind kind, const WeightedSample& sample,
                           const MixtureProposal& proposal,
                           const std::function<double(const Eigen::VectorXd&)>& target_logpdf) {
  sample.validate();
  const Eigen::VectorXd w = normalize(sample.log_weights);
  const Eigen::VectorXd log_q = proposal.log_density_many(sample.particles);
  double acc = 0.0;
  for (Eigen::Index m = 0; m < w.size(); ++m) {
    if (w[m] == 0.0) continue;
    const double log_ratio = log_q[m] - target_logpdf(sample.particles.col(m));
    const double ratio = std::exp(log_ratio);
    double term = 0.0;
    switch (kind) {
      case DivergenceKind::kl: term = -log_ratio + (ratio - 1.0); break;
      case DivergenceKind::chi2: term = divergence_generator(kind, ratio); break;
      case DivergenceKind::tv: term = std::max(0.0, 1.0 - ratio); break;
    }
    acc += w[m] * term;
  }
  return acc;
}

}  // namespace raisor
