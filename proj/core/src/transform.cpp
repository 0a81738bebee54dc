#include "raisor/transform.hpp"

#include <cmath>

#include "raisor/errors.hpp"

namespace raisor {

namespace {

// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

std::string to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::identity: return "identity";
    case TransformKind::log: return "log";
    case TransformKind::logit: return "logit";
  }
  return "identity";
}

TransformKind transform_from_string(const std::string& name) {
  if (name == "identity") return TransformKind::identity;
  if (name == "log") return TransformKind::log;
  if (name == "logit") return TransformKind::logit;
  throw InvalidArgument("unknown transform tag: " + name);
}

Eigen::VectorXd Transform::to_unconstrained(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  if (static_cast<std::size_t>(theta.size()) != kinds_.size()) {
    throw InvalidArgument("transform: dimension mismatch");
  }
  Eigen::VectorXd x(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    switch (kinds_[static_cast<std::size_t>(i)]) {
      case TransformKind::identity: x[i] = theta[i]; break;
      case TransformKind::log: x[i] = std::log(theta[i]); break;
      case TransformKind::logit: x[i] = std::log(theta[i]) - std::log1p(-theta[i]); break;
    }
  }
  return x;
}

Eigen::VectorXd Transform::to_model(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (static_cast<std::size_t>(x.size()) != kinds_.size()) {
    throw InvalidArgument("transform: dimension mismatch");
  }
  Eigen::VectorXd theta(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    switch (kinds_[static_cast<std::size_t>(i)]) {
      case TransformKind::identity: theta[i] = x[i]; break;
      case TransformKind::log: theta[i] = std::exp(x[i]); break;
      case TransformKind::logit: theta[i] = std::exp(-softplus(-x[i])); break;
    }
  }
  return theta;
}

double Transform::log_abs_det_jacobian(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    switch (kinds_[static_cast<std::size_t>(i)]) {
      case TransformKind::identity: break;
      case TransformKind::log: acc += x[i]; break;
      case TransformKind::logit: acc -= softplus(x[i]) + softplus(-x[i]); break;
    }
  }
  return acc;
}

}  // namespace raisor
