#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "raisor/engine.hpp"
#include "raisor/mcmc.hpp"
#include "raisor/model.hpp"
#include "raisor_tools/data.hpp"
#include "raisor_tools/experiments.hpp"

namespace raisor::tools {

inline constexpr int kConfigSchemaVersion = 1;

/// Parsed run configuration (JSON, schema_version 1). Unknown keys are
/// rejected so that typos fail loudly.
struct RunConfig {
  std::string model_type = "gp";  // "gp" or "conjugate_normal"

  // conjugate_normal
  double mu0 = 0.0;
  double sigma0_sq = 1e4;
  double sigma_sq = 1.0;
  std::size_t simulate_n = 0;  // > 0: simulate instead of reading data
  double simulate_mu = 0.0;

  // gp
  GpOptions gp_options;
  std::optional<GpPriors> gp_priors;

  std::optional<std::filesystem::path> data;  // dataset CSV

  std::string method = "raisor";  // "raisor" or "mcmc"
  EngineConfig engine;
  McmcConfig mcmc;

  // simulate command
  std::size_t sim_n = 640;
  GpTruth truth;
  bool nngp = false;

  BenchmarkSpec benchmark;
};

/// Throws ConfigError with a field path on any problem.
RunConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);

/// Builds the model described by the configuration; `seed` drives simulated data.
std::unique_ptr<Model> build_model(const RunConfig& config, std::uint64_t seed);

}  // namespace raisor::tools
