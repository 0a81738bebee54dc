#include "raisor_tools/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

#include "raisor/conjugate_normal.hpp"
#include "raisor/errors.hpp"

namespace raisor::tools {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& obj, const std::string& where, const char* key, T& target) {
  if (!obj.contains(key)) return;
  try {
    target = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

Eigen::VectorXd read_vector(const json& v, const std::string& where) {
  std::vector<double> values;
  try {
    values = v.get<std::vector<double>>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": expected an array of numbers");
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

DistanceKind distance_from_string(const std::string& s) {
  if (s == "euclidean") return DistanceKind::euclidean;
  if (s == "geodesic") return DistanceKind::geodesic;
  throw ConfigError("model.distance: expected 'euclidean' or 'geodesic'");
}

void parse_model(const json& m, const std::filesystem::path& base, RunConfig& c) {
  check_keys(m, "model", {"type", "mu0", "sigma0_sq", "sigma_sq", "data", "simulate_n", "simulate_mu",
                          "k_neighbors", "ordering_seed", "distance", "nu", "priors"});
  read(m, "model", "type", c.model_type);
  if (c.model_type != "gp" && c.model_type != "conjugate_normal") {
    throw ConfigError("model.type: expected 'gp' or 'conjugate_normal'");
  }
  read(m, "model", "mu0", c.mu0);
  read(m, "model", "sigma0_sq", c.sigma0_sq);
  read(m, "model", "sigma_sq", c.sigma_sq);
  read(m, "model", "simulate_n", c.simulate_n);
  read(m, "model", "simulate_mu", c.simulate_mu);
  if (m.contains("data")) {
    std::string p;
    read(m, "model", "data", p);
    std::filesystem::path path(p);
    c.data = path.is_absolute() ? path : base / path;
  }
  read(m, "model", "k_neighbors", c.gp_options.k_neighbors);
  read(m, "model", "ordering_seed", c.gp_options.ordering_seed);
  read(m, "model", "nu", c.gp_options.nu);
  if (m.contains("distance")) {
    std::string d;
    read(m, "model", "distance", d);
    c.gp_options.distance = distance_from_string(d);
  }
  if (m.contains("priors")) {
    const auto& pr = m.at("priors");
    check_keys(pr, "model.priors", {"beta_mean", "beta_var", "alpha1", "alpha2", "gamma_sq"});
    GpPriors priors;
    if (pr.contains("beta_mean") != pr.contains("beta_var")) {
      throw ConfigError("model.priors: give both beta_mean and beta_var or neither");
    }
    if (pr.contains("beta_mean")) {
      priors.beta_mean = read_vector(pr.at("beta_mean"), "model.priors.beta_mean");
      const Eigen::VectorXd var = read_vector(pr.at("beta_var"), "model.priors.beta_var");
      if (var.size() != priors.beta_mean.size() || (var.array() <= 0.0).any()) {
        throw ConfigError("model.priors.beta_var: need one positive variance per coefficient");
      }
      priors.beta_cov = var.asDiagonal();
    }
    read(pr, "model.priors", "alpha1", priors.alpha1);
    read(pr, "model.priors", "alpha2", priors.alpha2);
    read(pr, "model.priors", "gamma_sq", priors.gamma_sq);
    c.gp_priors = priors;
  }
}

void parse_engine(const json& e, EngineConfig& c) {
  check_keys(e, "engine", {"M", "r", "r_min", "alpha", "B", "K_mix", "N_reduce", "n0_init",
                           "anneal_max_steps", "inflation", "policy"});
  read(e, "engine", "M", c.M);
  read(e, "engine", "r", c.r);
  read(e, "engine", "r_min", c.r_min);
  read(e, "engine", "alpha", c.alpha);
  read(e, "engine", "B", c.B);
  read(e, "engine", "K_mix", c.K_mix);
  read(e, "engine", "N_reduce", c.N_reduce);
  read(e, "engine", "n0_init", c.n0_init);
  read(e, "engine", "anneal_max_steps", c.anneal_max_steps);
  read(e, "engine", "inflation", c.inflation);
  if (e.contains("policy")) {
    std::string p;
    read(e, "engine", "policy", p);
    c.policy = replenish_policy_from_string(p);
  }
}

void parse_mcmc(const json& m, McmcConfig& c) {
  check_keys(m, "mcmc", {"iterations", "burn_in", "thin", "tune_log_var", "target_accept"});
  read(m, "mcmc", "iterations", c.iterations);
  read(m, "mcmc", "burn_in", c.burn_in);
  read(m, "mcmc", "thin", c.thin);
  read(m, "mcmc", "target_accept", c.target_accept);
  if (m.contains("tune_log_var")) {
    double v = 0.0;
    read(m, "mcmc", "tune_log_var", v);
    c.tune_log_var = v;
  }
  if (c.iterations <= c.burn_in) throw ConfigError("mcmc: iterations must exceed burn_in");
  if (c.thin == 0) throw ConfigError("mcmc.thin: must be positive");
}

void parse_simulate(const json& s, RunConfig& c) {
  check_keys(s, "simulate", {"n", "beta", "sigma_sq", "tau_sq", "phi", "nngp"});
  read(s, "simulate", "n", c.sim_n);
  if (s.contains("beta")) c.truth.beta = read_vector(s.at("beta"), "simulate.beta");
  read(s, "simulate", "sigma_sq", c.truth.sigma_sq);
  read(s, "simulate", "tau_sq", c.truth.tau_sq);
  read(s, "simulate", "phi", c.truth.phi);
  read(s, "simulate", "nngp", c.nngp);
  if (c.truth.beta.size() != 3) throw ConfigError("simulate.beta: expected 3 coefficients");
  if (!(c.truth.sigma_sq > 0.0) || !(c.truth.tau_sq >= 0.0 && c.truth.tau_sq < 1.0) || !(c.truth.phi > 0.0)) {
    throw ConfigError("simulate: need sigma_sq > 0, tau_sq in [0, 1), phi > 0");
  }
}

void parse_benchmark(const json& b, BenchmarkSpec& c) {
  check_keys(b, "benchmark", {"methods", "sizes", "threads", "M", "mcmc_iterations", "mcmc_burn_in"});
  read(b, "benchmark", "methods", c.methods);
  read(b, "benchmark", "sizes", c.sizes);
  read(b, "benchmark", "threads", c.threads);
  read(b, "benchmark", "M", c.M);
  read(b, "benchmark", "mcmc_iterations", c.mcmc_iterations);
  read(b, "benchmark", "mcmc_burn_in", c.mcmc_burn_in);
  if (c.sizes.empty()) throw ConfigError("benchmark.sizes: must be nonempty");
}

}  // namespace

RunConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(doc, "config", {"schema_version", "model", "method", "engine", "mcmc", "simulate", "benchmark"});
  int version = 0;
  read(doc, "config", "schema_version", version);
  if (version != kConfigSchemaVersion) {
    throw ConfigError("config.schema_version: expected " + std::to_string(kConfigSchemaVersion));
  }
  RunConfig c;
  if (doc.contains("model")) parse_model(doc.at("model"), base_dir, c);
  read(doc, "config", "method", c.method);
  if (c.method != "raisor" && c.method != "mcmc") throw ConfigError("config.method: expected 'raisor' or 'mcmc'");
  if (c.method == "mcmc" && c.model_type != "gp") throw ConfigError("config.method: mcmc is available for gp models only");
  if (doc.contains("engine")) parse_engine(doc.at("engine"), c.engine);
  c.engine.validate();
  if (doc.contains("mcmc")) parse_mcmc(doc.at("mcmc"), c.mcmc);
  if (doc.contains("simulate")) parse_simulate(doc.at("simulate"), c);
  if (doc.contains("benchmark")) parse_benchmark(doc.at("benchmark"), c.benchmark);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path.parent_path().empty() ? "." : path.parent_path());
}

std::unique_ptr<Model> build_model(const RunConfig& config, std::uint64_t seed) {
  if (config.model_type == "conjugate_normal") {
    std::vector<double> y;
    if (config.data) {
      std::ifstream in(*config.data);
      if (!in) throw ConfigError("cannot read data '" + config.data->string() + "'");
      y = read_normal_csv(in);
    } else if (config.simulate_n > 0) {
      y = simulate_normal(config.simulate_n, config.simulate_mu, config.sigma_sq, seed);
    } else {
      throw ConfigError("model: conjugate_normal needs 'data' or 'simulate_n'");
    }
    return std::make_unique<ConjugateNormalModel>(config.mu0, config.sigma0_sq, config.sigma_sq, std::move(y));
  }
  if (!config.data) throw ConfigError("model: gp needs a 'data' CSV path");
  std::ifstream in(*config.data);
  if (!in) throw ConfigError("cannot read data '" + config.data->string() + "'");
  const GpData data = read_gp_csv(in);
  GpPriors priors = config.gp_priors.value_or(GpPriors{});
  if (!config.gp_priors || priors.beta_mean.size() == 0) {
    const GpPriors weak = GpPriors::weak(static_cast<std::size_t>(data.covariates.cols()));
    priors.beta_mean = weak.beta_mean;
    priors.beta_cov = weak.beta_cov;
  }
  return std::make_unique<GpModel>(data, std::move(priors), config.gp_options);
}

}  // namespace raisor::tools
