#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "raisor/gp_model.hpp"

namespace raisor::tools {

/// Generating values for the synthetic GP study.
struct GpTruth {
  Eigen::VectorXd beta = Eigen::Vector3d(8.0, 4.0, 16.0);
  double sigma_sq = 4.0;
  double tau_sq = 0.05;
  double phi = 0.05;
  double nu = 1.5;
};

/// Largest n simulated with a dense Cholesky factor.
inline constexpr std::size_t kMaxDenseSimulation = 20000;

/// Locations ~ U(0,1)^2, X = [1, s1, s2], y ~ N(X beta, sigma^2 {(1 - tau^2) R + tau^2 I}).
/// Dense simulation is exact; nngp = true draws from the Vecchia
/// approximation with k neighbours instead (0 = default k) and lifts the size cap.
GpData simulate_gp(std::size_t n, const GpTruth& truth, std::uint64_t seed, bool nngp = false,
                   std::size_t k = 0);

/// y_i ~ N(mu, sigma_sq), i.i.d.
std::vector<double> simulate_normal(std::size_t n, double mu, double sigma_sq, std::uint64_t seed);

/// Coordinate column names: {"lon", "lat"} or {"x", "y"}.
using CoordNames = std::array<std::string, 2>;

/// Columns x,y,value,c0..c{p-1} (or lon,lat,...). A file without covariate
/// columns reads as an intercept-only design. NaN and inf are rejected.
void write_gp_csv(std::ostream& out, const GpData& data, const CoordNames& names = {"x", "y"});
GpData read_gp_csv(std::istream& in, CoordNames* names = nullptr);

/// Prediction locations: x,y (or lon,lat) followed by the covariates.
struct GridData {
  CoordNames names{"x", "y"};
  Eigen::MatrixXd coords;
  Eigen::MatrixXd covariates;
};
GridData read_grid_csv(std::istream& in);
/// Columns x,y,mean,sd (coordinate names follow the grid).
void write_prediction_csv(std::ostream& out, const GridData& grid, const Prediction& pred);

/// Single column y.
void write_normal_csv(std::ostream& out, const std::vector<double>& y);
std::vector<double> read_normal_csv(std::istream& in);

/// Splits one CSV line on commas (no quoting).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace raisor::tools
