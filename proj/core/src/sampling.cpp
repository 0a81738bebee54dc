#include "raisor/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace raisor {

void WeightedSample::validate() const {
  const auto m = particles.cols();
  if (m == 0) throw InvalidArgument("weighted sample is empty");
  if (log_weights.size() != m || cum_loglik.size() != m) {
    throw InvalidArgument("weighted sample: particles, log_weights and cum_loglik differ in length");
  }
}

WeightedSample WeightedSample::equally_weighted(Eigen::MatrixXd particles,
                                                Eigen::VectorXd cum_loglik,
                                                std::size_t prefix_len) {
  WeightedSample s;
  s.log_weights = Eigen::VectorXd::Zero(particles.cols());
  s.particles = std::move(particles);
  s.cum_loglik = std::move(cum_loglik);
  s.prefix_len = prefix_len;
  s.replenish_prefix = prefix_len;
  s.validate();
  return s;
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& log_values) {
  if (log_values.size() == 0) return -std::numeric_limits<double>::infinity();
  const double top = log_values.maxCoeff();
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double v : log_values) acc += std::exp(v - top);
  return top + std::log(acc);
}

Eigen::VectorXd normalize(const Eigen::Ref<const Eigen::VectorXd>& log_weights) {
  if (log_weights.size() == 0) throw InvalidArgument("normalize: empty weight vector");
  double top = -std::numeric_limits<double>::infinity();
  for (double v : log_weights) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw DegenerateWeights("normalize: NaN or +inf log-weight");
    }
    top = std::max(top, v);
  }
  if (!std::isfinite(top)) throw DegenerateWeights("normalize: every log-weight is -inf");
  // scalar exp: the vectorized one maps -inf to a denormal instead of 0
  Eigen::VectorXd w(log_weights.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i] - top);
  w /= w.sum();
  return w;
}

double ress_of_log_weights(const Eigen::Ref<const Eigen::VectorXd>& log_weights) {
  const Eigen::VectorXd w = normalize(log_weights);
  return 1.0 / (static_cast<double>(w.size()) * w.squaredNorm());
}

RessEstimate ress(const WeightedSample& sample) {
  sample.validate();
  RessEstimate out;
  out.ress = std::min(1.0, ress_of_log_weights(sample.log_weights));
  out.ess = out.ress * static_cast<double>(sample.size());
  out.n = sample.prefix_len;
  out.n0 = sample.replenish_prefix;
  return out;
}

void require_support(const Eigen::Ref<const Eigen::VectorXd>& normalized_weights) {
  const auto carrying = (normalized_weights.array() > 1e-300).count();
  if (carrying < 2) {
    throw DegenerateWeights("fewer than two particles carry non-negligible weight");
  }
}

Eigen::VectorXd weighted_mean(const Eigen::Ref<const Eigen::MatrixXd>& points,
                              const Eigen::Ref<const Eigen::VectorXd>& weights) {
  return points * weights / weights.sum();
}

Eigen::MatrixXd weighted_covariance(const Eigen::Ref<const Eigen::MatrixXd>& points,
                                    const Eigen::Ref<const Eigen::VectorXd>& weights) {
  const double total = weights.sum();
  const Eigen::VectorXd mean = points * weights / total;
  const Eigen::MatrixXd centered = points.colwise() - mean;
  return centered * weights.asDiagonal() * centered.transpose() / total;
}

double weighted_quantile(const Eigen::Ref<const Eigen::VectorXd>& values,
                         const Eigen::Ref<const Eigen::VectorXd>& weights, double q) {
  if (values.size() == 0 || values.size() != weights.size()) {
    throw InvalidArgument("weighted_quantile: empty or mismatched input");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return values[a] < values[b]; });
  const double total = weights.sum();
  double acc = 0.0;
  for (Eigen::Index idx : order) {
    acc += weights[idx] / total;
    if (acc >= q) return values[idx];
  }
  return values[order.back()];
}

namespace {

// Failures before the first success, success probability p.
double draw_geometric(double p, Rng& rng) {
  if (p >= 1.0) return 0.0;
  if (p <= 0.0) return std::numeric_limits<double>::infinity();
  return std::floor(std::log(rng.uniform_pos()) / std::log1p(-p));
}

// Adds a Multinomial(count, weights[0..j) / sum) draw into counts[0..j).
void add_multinomial(double count, std::span<const double> weights,
                     std::span<const double> cumulative, std::span<double> counts, Rng& rng) {
  const std::size_t j = weights.size();
  const double total = cumulative[j - 1];
  if (count <= 32.0) {
    for (int draw = 0; draw < static_cast<int>(count); ++draw) {
      const double u = rng.uniform() * total;
      auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
      std::size_t idx = static_cast<std::size_t>(it - cumulative.begin());
      counts[std::min(idx, j - 1)] += 1.0;
    }
    return;
  }
  double remaining = count;
  double mass_left = total;
  for (std::size_t i = 0; i + 1 < j && remaining > 0.0; ++i) {
    const double prob = std::clamp(weights[i] / mass_left, 0.0, 1.0);
    double got;
    if (remaining < 9.0e15) {
      std::binomial_distribution<long long> binom(static_cast<long long>(remaining), prob);
      got = static_cast<double>(binom(rng));
    } else {
      got = std::round(remaining * prob);
    }
    counts[i] += got;
    remaining -= got;
    mass_left -= weights[i];
    if (mass_left <= 0.0) break;
  }
  counts[j - 1] += std::max(remaining, 0.0);
}

}  // namespace

WeightedSample weighted_sir(const WeightedSample& sample, std::size_t target_size, Rng& rng) {
  sample.validate();
  const std::size_t m_total = sample.size();
  if (target_size == 0 || target_size >= m_total) {
    throw InvalidArgument("weighted_sir: target size must satisfy 0 < N < M");
  }
  const Eigen::VectorXd w = normalize(sample.log_weights);
  const auto positive = static_cast<std::size_t>((w.array() > 0.0).count());
  if (positive < target_size) {
    throw InsufficientSupport("weighted_sir: fewer positive-weight particles than target size");
  }

  // Sequential weighted sampling without replacement via exponential keys:
  // sorting by log(u)/w descending reproduces the successive draw order.
  std::vector<double> key(m_total);
  for (std::size_t m = 0; m < m_total; ++m) {
    const double u = rng.uniform_pos();
    key[m] = w[static_cast<Eigen::Index>(m)] > 0.0
                 ? std::log(u) / w[static_cast<Eigen::Index>(m)]
                 : -std::numeric_limits<double>::infinity();
  }
  std::vector<std::size_t> order(m_total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });

  // Mass left outside the first j selected particles, summed from the tail.
  std::vector<double> unselected(m_total + 1, 0.0);
  for (std::size_t pos = m_total; pos-- > 0;) {
    unselected[pos] = unselected[pos + 1] + w[static_cast<Eigen::Index>(order[pos])];
  }

  std::vector<double> chosen_w(target_size);
  std::vector<double> cumulative(target_size);
  for (std::size_t j = 0; j < target_size; ++j) {
    chosen_w[j] = w[static_cast<Eigen::Index>(order[j])];
    cumulative[j] = chosen_w[j] + (j > 0 ? cumulative[j - 1] : 0.0);
  }

  // Repeats between the j-th and (j+1)-th new value. The last round (j = N)
  // counts the repeats drawn after the N-th new value; stopping on the draw
  // that produced it instead leaves an O(1/N) bias towards light particles.
  std::vector<double> counts(target_size, 1.0);
  constexpr double kMaxRepeats = 1.0e15;
  for (std::size_t j = 1; j <= target_size; ++j) {
    const double p = std::min(1.0, unselected[j]);
    const double k = std::min(draw_geometric(p, rng), kMaxRepeats);
    if (k > 0.0) {
      add_multinomial(k, std::span<const double>(chosen_w).first(j),
                      std::span<const double>(cumulative).first(j),
                      std::span<double>(counts).first(j), rng);
    }
  }

  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  WeightedSample out;
  out.particles.resize(sample.particles.rows(), static_cast<Eigen::Index>(target_size));
  out.log_weights.resize(static_cast<Eigen::Index>(target_size));
  out.cum_loglik.resize(static_cast<Eigen::Index>(target_size));
  for (std::size_t j = 0; j < target_size; ++j) {
    const auto src = static_cast<Eigen::Index>(order[j]);
    const auto dst = static_cast<Eigen::Index>(j);
    out.particles.col(dst) = sample.particles.col(src);
    out.cum_loglik[dst] = sample.cum_loglik[src];
    out.log_weights[dst] = std::log(counts[j] / total);
  }
  out.prefix_len = sample.prefix_len;
  out.replenish_prefix = sample.replenish_prefix;
  return out;
}

}  // namespace raisor
