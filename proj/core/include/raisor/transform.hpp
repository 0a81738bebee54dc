#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace raisor {

/// Per-coordinate bijection from model space onto the real line.
enum class TransformKind { identity, log, logit };

std::string to_string(TransformKind kind);
TransformKind transform_from_string(const std::string& name);

/// Coordinate-wise map g: model space -> R^d and its inverse.
class Transform {
 public:
  Transform() = default;
  explicit Transform(std::vector<TransformKind> kinds) : kinds_(std::move(kinds)) {}

  static Transform identity(std::size_t dim) {
    return Transform(std::vector<TransformKind>(dim, TransformKind::identity));
  }

  std::size_t dim() const noexcept { return kinds_.size(); }
  const std::vector<TransformKind>& kinds() const noexcept { return kinds_; }

  Eigen::VectorXd to_unconstrained(const Eigen::Ref<const Eigen::VectorXd>& theta) const;
  Eigen::VectorXd to_model(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// log |d theta / d x| evaluated at unconstrained x.
  double log_abs_det_jacobian(const Eigen::Ref<const Eigen::VectorXd>& x) const;

 private:
  std::vector<TransformKind> kinds_;
};

}  // namespace raisor
