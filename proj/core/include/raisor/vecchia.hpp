#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <vector>

namespace raisor {

enum class DistanceKind { euclidean, geodesic };

/// Spherical Earth radius used by the great-circle distance, in km.
inline constexpr double kEarthRadiusKm = 6371.0088;

/// Distance between two 2-d locations. Geodesic expects (lon, lat) in
/// degrees and returns kilometres (haversine).
double location_distance(DistanceKind kind, double ax, double ay, double bx, double by);

/// ceil(1.2 * log10(n)^2), at least 1.
std::size_t default_neighbor_count(std::size_t n);

/// Ordering and nearest-previous-neighbour sets of a Vecchia approximation.
///
/// Positions refer to the ordering: neighbors[i] holds positions j < i of
/// the (up to) k closest previously ordered locations, nearest first.
struct VecchiaStructure {
  std::vector<std::size_t> ordering;  // ordering[i] = original row of position i
  std::vector<std::vector<std::size_t>> neighbors;
  std::size_t k = 0;
  DistanceKind distance = DistanceKind::euclidean;
};

/// Random ordering drawn from `ordering_seed`. Rejects duplicate locations.
VecchiaStructure build_vecchia(const Eigen::Ref<const Eigen::MatrixXd>& coords, std::size_t k,
                               std::uint64_t ordering_seed, DistanceKind distance);

/// Same, with an explicit ordering (a permutation of 0..n-1).
VecchiaStructure build_vecchia(const Eigen::Ref<const Eigen::MatrixXd>& coords, std::size_t k,
                               std::vector<std::size_t> ordering, DistanceKind distance);

/// Throws DuplicateLocation if two rows of coords coincide.
void require_distinct_locations(const Eigen::Ref<const Eigen::MatrixXd>& coords);

/// Indices of the k rows of coords closest to (x, y), nearest first.
std::vector<std::size_t> nearest_rows(const Eigen::Ref<const Eigen::MatrixXd>& coords, double x,
                                      double y, std::size_t k, DistanceKind distance);

/// Sparse inverse-Cholesky factor of a correlation matrix under Vecchia.
///
/// Row i of L is (e_i - sum_a coeffs[i][a] e_{neighbors[i][a]}) / sqrt(cond_var[i]),
/// so that Sigma^{-1} ~= L' L / sigma^2.
struct VecchiaFactor {
  std::shared_ptr<const VecchiaStructure> structure;
  std::size_t rows = 0;                // prefix length covered
  std::vector<std::size_t> offsets;    // rows + 1
  std::vector<double> coeffs;
  std::vector<double> cond_var;

  /// L v for the first `rows` entries of v.
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  /// L V, column by column.
  Eigen::MatrixXd apply_columns(const Eigen::Ref<const Eigen::MatrixXd>& v) const;
  /// sum_i log cond_var[i]
  double log_det() const;
};

}  // namespace raisor
