#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "raisor/conjugate_normal.hpp"
#include "raisor/errors.hpp"
#include "raisor/gp_model.hpp"
#include "raisor_tools/config.hpp"

namespace fs = std::filesystem;
using namespace raisor;
using namespace raisor::tools;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Flags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  double scale = 1.0;
  std::string out = "out";
  bool nngp = false;
  bool full = false;
  std::optional<std::size_t> n;
  std::string figure;
  std::optional<std::string> resume;
  std::optional<std::string> predict;
};

std::ofstream open_in(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream out(dir / name);
  if (!out) throw ConfigError("cannot write '" + (dir / name).string() + "'");
  return out;
}

RunConfig config_or_default(const Flags& f) {
  return f.config ? load_config(*f.config) : parse_config(R"({"schema_version": 1})");
}

nlohmann::json summary_json(const FitSummary& s) {
  nlohmann::json j;
  j["ess"] = s.ess;
  j["seconds"] = s.seconds;
  j["n_evals"] = s.n_evals;
  for (const auto& p : s.params) {
    j["parameters"][p.name] = {{"mean", p.mean}, {"sd", p.sd}, {"q025", p.q025}, {"q975", p.q975}, {"ess", p.ess}};
  }
  return j;
}

int cmd_simulate(const Flags& f) {
  RunConfig c = config_or_default(f);
  const std::uint64_t seed = f.seed.value_or(1);
  const fs::path out(f.out);
  if (c.model_type == "conjugate_normal") {
    const std::size_t n = f.n.value_or(c.simulate_n > 0 ? c.simulate_n : 10000);
    auto file = open_in(out, "data.csv");
    write_normal_csv(file, simulate_normal(n, c.simulate_mu, c.sigma_sq, seed));
  } else {
    const std::size_t n = f.n.value_or(c.sim_n);
    const GpData data = simulate_gp(n, c.truth, seed, f.nngp || c.nngp, c.gp_options.k_neighbors);
    auto file = open_in(out, "data.csv");
    write_gp_csv(file, data);
  }
  std::cout << (out / "data.csv").string() << '\n';
  return kExitOk;
}

// Posterior predictive at the grid locations, written next to the fit.
void write_predictions(const Flags& f, const Model& model, const WeightedSample& sample,
                       std::size_t threads) {
  if (!f.predict) return;
  const auto* gp = dynamic_cast<const GpModel*>(&model);
  if (!gp) throw ConfigError("--predict needs a gp model");
  std::ifstream in(*f.predict);
  if (!in) throw ConfigError("cannot read grid '" + *f.predict + "'");
  const GridData grid = read_grid_csv(in);
  const Prediction pred = gp->predict(sample, grid.coords, grid.covariates, ThreadPool(threads));
  auto file = open_in(f.out, "predictions.csv");
  write_prediction_csv(file, grid, pred);
}

int cmd_fit(const Flags& f) {
  if (!f.config) throw ConfigError("fit needs --config");
  RunConfig c = load_config(*f.config);
  const std::uint64_t seed = f.seed.value_or(c.engine.seed);
  c.engine.seed = seed;
  const auto model = build_model(c, seed);
  const fs::path out(f.out);
  if (c.method == "mcmc") {
    const auto& gp = dynamic_cast<const GpModel&>(*model);
    Rng rng(seed, 0x3C3C);
    const ChainResult chain = run_chain(gp, c.mcmc, rng);
    auto file = open_in(out, "chain.csv");
    write_chain_csv(file, gp, chain, c.mcmc.burn_in);
    const FitSummary s = summarize_chain(gp, chain);
    auto js = summary_json(s);
    js["acceptance"] = chain.acceptance;
    js["tune_log_var"] = chain.tune_log_var;
    open_in(out, "summary.json") << js.dump(2) << '\n';
    if (f.predict) {
      Eigen::MatrixXd particles(gp.dim(), chain.draws.rows());
      for (Eigen::Index i = 0; i < chain.draws.rows(); ++i) {
        particles.col(i) = gp.transform().to_unconstrained(chain.draws.row(i).transpose());
      }
      const auto rows = static_cast<Eigen::Index>(particles.cols());
      write_predictions(f, gp, WeightedSample::equally_weighted(particles, Eigen::VectorXd::Zero(rows), gp.n_obs()),
                        f.threads);
    }
    return kExitOk;
  }
  Engine engine(*model, c.engine, f.threads);
  if (auto* conj = dynamic_cast<const ConjugateNormalModel*>(model.get())) {
    engine.set_initializer(exact_conjugate_initializer(*conj));
  } else if (auto* gp = dynamic_cast<const GpModel*>(model.get())) {
    engine.set_initializer(gp_mcmc_initializer(*gp));
  }
  std::optional<WeightedSample> start;
  if (f.resume) {
    Checkpoint cp = load_checkpoint(*f.resume);
    if (cp.sample.dim() != model->dim() || cp.sample.size() != c.engine.M) {
      throw ConfigError("checkpoint does not match the configured model and particle count");
    }
    engine.set_n_evals(cp.n_evals);
    start = std::move(cp.sample);
  }
  WeightedSample sample;
  try {
    sample = engine.run(std::move(start));
  } catch (const Error&) {
    auto trace_file = open_in(out, "trace.csv");
    engine.trace().write_csv(trace_file);
    throw;
  }
  {
    auto trace_file = open_in(out, "trace.csv");
    engine.trace().write_csv(trace_file);
    auto posterior = open_in(out, "posterior.csv");
    write_posterior_csv(posterior, *model, sample);
  }
  save_checkpoint((out / "checkpoint.json").string(), {sample, engine.last_proposal(), engine.n_evals()});
  FitSummary s = summarize_sample(*model, sample);
  s.n_evals = engine.n_evals();
  auto js = summary_json(s);
  js["replenishments"] = engine.trace().count(EventKind::replenish);
  open_in(out, "summary.json") << js.dump(2) << '\n';
  write_predictions(f, *model, sample, f.threads);
  return kExitOk;
}

int cmd_replicate(const Flags& f) {
  if (!f.seed) throw ConfigError("replicate-figure needs --seed");
  FigureOptions o;
  o.scale = f.scale;
  o.seed = *f.seed;
  o.threads = f.threads == 0 ? ThreadPool(0).size() : f.threads;
  o.full = f.full;
  o.out = f.out;
  for (const auto& p : replicate_figure(f.figure, o)) std::cout << p.string() << '\n';
  return kExitOk;
}

int cmd_benchmark(const Flags& f) {
  RunConfig c = config_or_default(f);
  BenchmarkSpec spec = c.benchmark;
  spec.seed = f.seed.value_or(spec.seed);
  if (f.threads != 0) spec.threads = {f.threads};
  if (f.scale != 1.0) {
    spec.M = std::max<std::size_t>(200, static_cast<std::size_t>(static_cast<double>(spec.M) * f.scale));
    spec.mcmc_iterations = std::max<std::size_t>(400, static_cast<std::size_t>(static_cast<double>(spec.mcmc_iterations) * f.scale));
    spec.mcmc_burn_in = spec.mcmc_iterations / 4;
  }
  const auto rows = run_benchmark(spec);
  auto file = open_in(f.out, "benchmark.csv");
  write_benchmark_csv(file, rows);
  write_benchmark_csv(std::cout, rows);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive importance sampling with replenishment for sequential Bayesian updating"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "Run configuration JSON");
  app.add_option("--seed", f.seed, "Random seed");
  app.add_option("--threads", f.threads, "Worker threads (0 = all cores)");
  app.add_option("--scale", f.scale, "Shrink factor for figure and benchmark sizes")->check(CLI::PositiveNumber);
  app.add_option("--out", f.out, "Output directory");

  auto* simulate = app.add_subcommand("simulate", "Write a synthetic dataset");
  simulate->add_option("--n", f.n, "Number of observations");
  simulate->add_flag("--nngp", f.nngp, "Simulate from the nearest-neighbour approximation");
  auto* fit = app.add_subcommand("fit", "Fit a model (importance sampling or MCMC)");
  fit->add_option("--resume", f.resume, "Checkpoint to resume from");
  fit->add_option("--predict", f.predict, "Grid CSV (x,y or lon,lat, then covariates) to predict at");
  auto* replicate = app.add_subcommand("replicate-figure", "Regenerate figure data");
  replicate->add_option("figure", f.figure, "fig1, fig2, fig3 or fig4")->required();
  replicate->add_flag("--full", f.full, "Use the full-size experiment");
  auto* bench = app.add_subcommand("benchmark", "Time both samplers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(f);
    if (fit->parsed()) return cmd_fit(f);
    if (replicate->parsed()) return cmd_replicate(f);
    if (bench->parsed()) return cmd_benchmark(f);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitConfig;
}
