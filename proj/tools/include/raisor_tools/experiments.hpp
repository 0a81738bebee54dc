#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "raisor/conjugate_normal.hpp"
#include "raisor/engine.hpp"
#include "raisor/gp_model.hpp"
#include "raisor/mcmc.hpp"
#include "raisor_tools/data.hpp"

namespace raisor::tools {

/// Default engine settings with N_reduce capped at M * r_min.
EngineConfig desk_engine_config(std::size_t M, std::uint64_t seed);

/// Equally weighted exact draws from [mu | y_{1:n0_init}].
Engine::Initializer exact_conjugate_initializer(const ConjugateNormalModel& model);

/// Replenishes from the exact partial posterior instead of a fitted mixture.
Engine::Fitter exact_conjugate_fitter(const ConjugateNormalModel& model);

/// MCMC draws from [theta | y_{1:n0_init}], thinned and equally weighted.
Engine::Initializer gp_mcmc_initializer(const GpModel& model);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double ess = 0.0;  // effective draws behind the mean
};

struct FitSummary {
  std::vector<ParameterSummary> params;
  double ess = 0.0;  // M * RESS, or the mean chain ESS
  double seconds = 0.0;
  std::uint64_t n_evals = 0;

  const ParameterSummary& at(const std::string& name) const;
};

/// Weighted moments and quantiles in model space.
FitSummary summarize_sample(const Model& model, const WeightedSample& sample);
FitSummary summarize_chain(const GpModel& model, const ChainResult& chain);

/// |a - b| <= z * sqrt(se_a^2 + se_b^2) for every parameter mean.
bool means_agree(const FitSummary& a, const FitSummary& b, double z = 3.0);

struct GpFit {
  WeightedSample sample;
  RessTrace trace;
  FitSummary summary;
};

/// Full importance-sampling fit of a GP model with the MCMC initializer.
GpFit fit_gp_raisor(const GpModel& model, const EngineConfig& config, std::size_t threads,
                    const Engine::Observer& observer = {});

struct FigureOptions {
  double scale = 1.0;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  bool full = false;  // full-size runs
  std::filesystem::path out = ".";
};

/// Writes the CSV files for fig1..fig4 under options.out and returns their paths.
std::vector<std::filesystem::path> replicate_figure(const std::string& id, const FigureOptions& options);

struct BenchmarkSpec {
  std::vector<std::string> methods{"raisor", "mcmc"};
  std::vector<std::size_t> sizes{160, 320, 640, 1280};
  std::vector<std::size_t> threads{1};
  std::size_t M = 20000;
  std::size_t mcmc_iterations = 20000;
  std::size_t mcmc_burn_in = 5000;
  std::uint64_t seed = 1;
};

struct BenchmarkRow {
  std::string method;
  std::size_t n = 0;
  std::size_t threads = 1;
  double seconds = 0.0;
  std::uint64_t n_evals = 0;
  double ess = 0.0;
  double ess_per_minute = 0.0;
  double evals_per_second = 0.0;
};

std::vector<BenchmarkRow> run_benchmark(const BenchmarkSpec& spec);
void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows);

/// Conditional evaluations per second of recursive_update on a GP model
/// over `batch` observations with `particles` prior draws.
double update_throughput(const GpModel& model, std::size_t particles, std::size_t batch,
                         std::size_t threads, std::uint64_t seed);

}  // namespace raisor::tools
