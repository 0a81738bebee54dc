#include "raisor/vecchia.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <utility>

#include "raisor/errors.hpp"
#include "raisor/rng.hpp"

namespace raisor {

double location_distance(DistanceKind kind, double ax, double ay, double bx, double by) {
  if (kind == DistanceKind::euclidean) return std::hypot(ax - bx, ay - by);
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double lat1 = ay * kDeg;
  const double lat2 = by * kDeg;
  const double dlat = lat2 - lat1;
  const double dlon = (bx - ax) * kDeg;
  const double s1 = std::sin(0.5 * dlat);
  const double s2 = std::sin(0.5 * dlon);
  const double h = std::min(1.0, s1 * s1 + std::cos(lat1) * std::cos(lat2) * s2 * s2);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

std::size_t default_neighbor_count(std::size_t n) {
  if (n < 2) return 1;
  const double l = std::log10(static_cast<double>(n));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(1.2 * l * l - 1e-12)));
}

void require_distinct_locations(const Eigen::Ref<const Eigen::MatrixXd>& coords) {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(static_cast<std::size_t>(coords.rows()));
  for (Eigen::Index i = 0; i < coords.rows(); ++i) pts.emplace_back(coords(i, 0), coords(i, 1));
  std::sort(pts.begin(), pts.end());
  if (std::adjacent_find(pts.begin(), pts.end()) != pts.end()) {
    throw DuplicateLocation("duplicate spatial location in coordinates");
  }
}

VecchiaStructure build_vecchia(const Eigen::Ref<const Eigen::MatrixXd>& coords, std::size_t k,
                               std::uint64_t ordering_seed, DistanceKind distance) {
  const auto n = static_cast<std::size_t>(coords.rows());
  std::vector<std::size_t> ordering(n);
  for (std::size_t i = 0; i < n; ++i) ordering[i] = i;
  Rng rng(ordering_seed, 0x0DE5);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(ordering[i - 1], ordering[j]);
  }
  return build_vecchia(coords, k, std::move(ordering), distance);
}

VecchiaStructure build_vecchia(const Eigen::Ref<const Eigen::MatrixXd>& coords, std::size_t k,
                               std::vector<std::size_t> ordering, DistanceKind distance) {
  const auto n = static_cast<std::size_t>(coords.rows());
  if (coords.cols() != 2) throw InvalidArgument("build_vecchia: coordinates must have 2 columns");
  if (k == 0) throw InvalidArgument("build_vecchia: k must be at least 1");
  if (ordering.size() != n) throw InvalidArgument("build_vecchia: ordering has wrong length");
  {
    std::vector<bool> seen(n, false);
    for (auto o : ordering) {
      if (o >= n || seen[o]) throw InvalidArgument("build_vecchia: ordering is not a permutation");
      seen[o] = true;
    }
  }
  require_distinct_locations(coords);

  VecchiaStructure s;
  s.k = k;
  s.distance = distance;
  s.ordering = std::move(ordering);
  s.neighbors.resize(n);
  std::vector<double> ox(n), oy(n);
  for (std::size_t i = 0; i < n; ++i) {
    ox[i] = coords(static_cast<Eigen::Index>(s.ordering[i]), 0);
    oy[i] = coords(static_cast<Eigen::Index>(s.ordering[i]), 1);
  }
  using Entry = std::pair<double, std::size_t>;
  for (std::size_t i = 1; i < n; ++i) {
    std::priority_queue<Entry> heap;  // max-heap on (distance, position)
    for (std::size_t j = 0; j < i; ++j) {
      const Entry e{location_distance(distance, ox[i], oy[i], ox[j], oy[j]), j};
      if (heap.size() < k) {
        heap.push(e);
      } else if (e < heap.top()) {
        heap.pop();
        heap.push(e);
      }
    }
    auto& nb = s.neighbors[i];
    nb.resize(heap.size());
    for (std::size_t a = heap.size(); a-- > 0;) {
      nb[a] = heap.top().second;
      heap.pop();
    }
  }
  return s;
}

std::vector<std::size_t> nearest_rows(const Eigen::Ref<const Eigen::MatrixXd>& coords, double x,
                                      double y, std::size_t k, DistanceKind distance) {
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry> heap;
  for (Eigen::Index j = 0; j < coords.rows(); ++j) {
    const Entry e{location_distance(distance, x, y, coords(j, 0), coords(j, 1)),
                  static_cast<std::size_t>(j)};
    if (heap.size() < k) {
      heap.push(e);
    } else if (e < heap.top()) {
      heap.pop();
      heap.push(e);
    }
  }
  std::vector<std::size_t> out(heap.size());
  for (std::size_t a = heap.size(); a-- > 0;) {
    out[a] = heap.top().second;
    heap.pop();
  }
  return out;
}

Eigen::VectorXd VecchiaFactor::apply(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows));
  for (std::size_t i = 0; i < rows; ++i) {
    const auto& nb = structure->neighbors[i];
    double acc = v[static_cast<Eigen::Index>(i)];
    for (std::size_t a = 0; a < nb.size(); ++a) {
      acc -= coeffs[offsets[i] + a] * v[static_cast<Eigen::Index>(nb[a])];
    }
    out[static_cast<Eigen::Index>(i)] = acc / std::sqrt(cond_var[i]);
  }
  return out;
}

Eigen::MatrixXd VecchiaFactor::apply_columns(const Eigen::Ref<const Eigen::MatrixXd>& v) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows), v.cols());
  for (Eigen::Index c = 0; c < v.cols(); ++c) out.col(c) = apply(Eigen::VectorXd(v.col(c)));
  return out;
}

double VecchiaFactor::log_det() const {
  double acc = 0.0;
  for (std::size_t i = 0; i < rows; ++i) acc += std::log(cond_var[i]);
  return acc;
}

}  // namespace raisor
