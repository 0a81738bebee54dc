#include "raisor_tools/data.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "raisor/errors.hpp"
#include "raisor/matern.hpp"
#include "raisor/rng.hpp"

namespace raisor::tools {

namespace {

constexpr std::uint64_t kLocationStream = 1;
constexpr std::uint64_t kNoiseStream = 2;

double parse_number(const std::string& field, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != field.size()) {
    throw InvalidArgument("CSV line " + std::to_string(line) + ": '" + field + "' is not a number");
  }
  if (!std::isfinite(v)) {
    throw InvalidArgument("CSV line " + std::to_string(line) + ": non-finite value '" + field + "'");
  }
  return v;
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

GpData simulate_gp(std::size_t n, const GpTruth& truth, std::uint64_t seed, bool nngp, std::size_t k) {
  if (n == 0) throw InvalidArgument("simulate_gp: n must be at least 1");
  if (n > kMaxDenseSimulation && !nngp) {
    throw InvalidArgument("simulate_gp: n = " + std::to_string(n) + " exceeds the dense limit of " +
                          std::to_string(kMaxDenseSimulation) + "; use the NNGP simulation flag");
  }
  if (truth.beta.size() != 3) throw InvalidArgument("simulate_gp: beta must have 3 entries");
  const auto nn = static_cast<Eigen::Index>(n);
  GpData data;
  data.coords.resize(nn, 2);
  Rng loc_rng(seed, kLocationStream);
  for (Eigen::Index i = 0; i < nn; ++i) {
    data.coords(i, 0) = loc_rng.uniform();
    data.coords(i, 1) = loc_rng.uniform();
  }
  data.covariates.resize(nn, 3);
  data.covariates.col(0).setOnes();
  data.covariates.col(1) = data.coords.col(0);
  data.covariates.col(2) = data.coords.col(1);

  Rng noise_rng(seed, kNoiseStream);
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(nn);
  for (Eigen::Index i = 0; i < nn; ++i) z[i] = normal(noise_rng);
  Eigen::VectorXd e(nn);
  if (!nngp) {
    Eigen::MatrixXd c = dense_correlation(data.coords, truth.tau_sq, truth.phi, truth.nu, DistanceKind::euclidean);
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) throw NumericalError("simulate_gp: covariance is not positive definite");
    e = llt.matrixL() * z;
  } else {
    GpData shell = data;
    shell.y = Eigen::VectorXd::Zero(nn);
    GpOptions options;
    options.k_neighbors = k;
    options.nu = truth.nu;
    options.ordering_seed = seed;
    const GpModel model(shell, GpPriors::weak(3), options);
    const VecchiaFactor f = model.factor(truth.tau_sq, truth.phi, n);
    // Invert the unit-lower-triangular recursion in Vecchia order.
    Eigen::VectorXd ordered(nn);
    for (std::size_t i = 0; i < n; ++i) {
      double mean = 0.0;
      const auto& nb = f.structure->neighbors[i];
      for (std::size_t a = 0; a < nb.size(); ++a) mean += f.coeffs[f.offsets[i] + a] * ordered[static_cast<Eigen::Index>(nb[a])];
      ordered[static_cast<Eigen::Index>(i)] = mean + std::sqrt(f.cond_var[i]) * z[static_cast<Eigen::Index>(i)];
    }
    for (std::size_t i = 0; i < n; ++i) {
      e[static_cast<Eigen::Index>(f.structure->ordering[i])] = ordered[static_cast<Eigen::Index>(i)];
    }
  }
  data.y = data.covariates * truth.beta + std::sqrt(truth.sigma_sq) * e;
  return data;
}

std::vector<double> simulate_normal(std::size_t n, double mu, double sigma_sq, std::uint64_t seed) {
  if (!(sigma_sq > 0.0)) throw InvalidArgument("simulate_normal: sigma_sq must be positive");
  Rng rng(seed, kNoiseStream);
  std::normal_distribution<double> normal(mu, std::sqrt(sigma_sq));
  std::vector<double> y(n);
  for (auto& v : y) v = normal(rng);
  return y;
}

void write_gp_csv(std::ostream& out, const GpData& data, const CoordNames& names) {
  out << names[0] << ',' << names[1] << ",value";
  for (Eigen::Index j = 0; j < data.covariates.cols(); ++j) out << ",c" << j;
  out << '\n';
  std::ostringstream line;
  line.precision(17);
  for (Eigen::Index i = 0; i < data.y.size(); ++i) {
    line.str("");
    line << data.coords(i, 0) << ',' << data.coords(i, 1) << ',' << data.y[i];
    for (Eigen::Index j = 0; j < data.covariates.cols(); ++j) line << ',' << data.covariates(i, j);
    line << '\n';
    out << line.str();
  }
}

namespace {

// Header must open with a coordinate pair; the rest of the table is numeric.
struct Table {
  CoordNames names;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

Table read_table(std::istream& in, const char* what) {
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument(std::string(what) + ": empty input");
  t.header = split_csv_line(line);
  if (t.header.size() < 2) throw InvalidArgument(std::string(what) + ": header needs two coordinate columns");
  t.names = {t.header[0], t.header[1]};
  if (t.names != CoordNames{"lon", "lat"} && t.names != CoordNames{"x", "y"}) {
    throw InvalidArgument(std::string(what) + ": header must start with lon,lat or x,y");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != t.header.size()) {
      throw InvalidArgument(std::string(what) + " line " + std::to_string(line_no) + ": expected " +
                            std::to_string(t.header.size()) + " fields");
    }
    std::vector<double> row;
    for (const auto& f : fields) row.push_back(parse_number(f, line_no));
    t.rows.push_back(std::move(row));
  }
  return t;
}

// Covariates from columns [first, end); an intercept when there are none.
Eigen::MatrixXd covariate_block(const Table& t, std::size_t first) {
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  const std::size_t p = t.header.size() - first;
  if (p == 0) return Eigen::MatrixXd::Ones(n, 1);
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) x(i, static_cast<Eigen::Index>(j)) = t.rows[static_cast<std::size_t>(i)][first + j];
  }
  return x;
}

Eigen::MatrixXd coord_block(const Table& t) {
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  Eigen::MatrixXd c(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, 0) = t.rows[static_cast<std::size_t>(i)][0];
    c(i, 1) = t.rows[static_cast<std::size_t>(i)][1];
  }
  return c;
}

}  // namespace

GpData read_gp_csv(std::istream& in, CoordNames* names) {
  const Table t = read_table(in, "GP CSV");
  if (t.header.size() < 3 || t.header[2] != "value") {
    throw InvalidArgument("GP CSV: third column must be 'value'");
  }
  GpData data;
  data.coords = coord_block(t);
  data.y.resize(static_cast<Eigen::Index>(t.rows.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) data.y[static_cast<Eigen::Index>(i)] = t.rows[i][2];
  data.covariates = covariate_block(t, 3);
  if (names) *names = t.names;
  return data;
}

GridData read_grid_csv(std::istream& in) {
  const Table t = read_table(in, "grid CSV");
  GridData grid;
  grid.names = t.names;
  grid.coords = coord_block(t);
  grid.covariates = covariate_block(t, 2);
  return grid;
}

void write_prediction_csv(std::ostream& out, const GridData& grid, const Prediction& pred) {
  out << grid.names[0] << ',' << grid.names[1] << ",mean,sd\n";
  std::ostringstream line;
  line.precision(17);
  for (Eigen::Index i = 0; i < grid.coords.rows(); ++i) {
    line.str("");
    line << grid.coords(i, 0) << ',' << grid.coords(i, 1) << ',' << pred.mean[i] << ',' << pred.sd[i] << '\n';
    out << line.str();
  }
}

void write_normal_csv(std::ostream& out, const std::vector<double>& y) {
  out << "y\n";
  std::ostringstream line;
  line.precision(17);
  for (double v : y) {
    line.str("");
    line << v << '\n';
    out << line.str();
  }
}

std::vector<double> read_normal_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"y"}) {
    throw InvalidArgument("normal CSV: header must be 'y'");
  }
  std::vector<double> y;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 1) throw InvalidArgument("normal CSV line " + std::to_string(line_no) + ": expected 1 field");
    y.push_back(parse_number(fields[0], line_no));
  }
  return y;
}

}  // namespace raisor::tools
