#include "raisor/model.hpp"

#include <cmath>

#include "raisor/errors.hpp"

namespace raisor {

void Model::check_range(std::size_t from, std::size_t to) const {
  if (from > to || to > n_obs()) {
    throw InvalidArgument("observation range [" + std::to_string(from) + ", " + std::to_string(to) +
                          ") outside [0, " + std::to_string(n_obs()) + "]");
  }
}

double Model::batch_loglik(const Eigen::Ref<const Eigen::VectorXd>& theta, std::size_t from,
                           std::size_t to) const {
  check_range(from, to);
  if (from == to) return 0.0;
  std::vector<double> terms(to - from);
  conditional_logliks(theta, from, to, terms);
  long double acc = 0.0L;
  for (const double t : terms) acc += t;
  return static_cast<double>(acc);
}

void Model::ladder_logliks(const Eigen::Ref<const Eigen::VectorXd>& theta, std::size_t from,
                           std::span<const std::size_t> prefixes, std::span<double> out) const {
  if (prefixes.empty()) return;
  check_range(from, prefixes.back());
  std::vector<double> terms(prefixes.back() - from);
  conditional_logliks(theta, from, prefixes.back(), terms);
  long double acc = 0.0L;
  std::size_t pos = from;
  for (std::size_t j = 0; j < prefixes.size(); ++j) {
    if (prefixes[j] < pos) throw InvalidArgument("ladder prefixes must be increasing");
    for (; pos < prefixes[j]; ++pos) acc += terms[pos - from];
    out[j] = static_cast<double>(acc);
  }
}

double Model::log_target_unconstrained(const Eigen::Ref<const Eigen::VectorXd>& x,
                                       std::size_t n) const {
  const Eigen::VectorXd theta = transform().to_model(x);
  const double lp = log_prior(theta);
  if (!std::isfinite(lp)) return lp;
  return batch_loglik(theta, 0, n) + lp + transform().log_abs_det_jacobian(x);
}

}  // namespace raisor
