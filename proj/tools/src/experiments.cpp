#include "raisor_tools/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "raisor/errors.hpp"
#include "raisor/sampling.hpp"
#include "raisor/theory.hpp"

namespace raisor::tools {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  Rng rng(seed, stream, index);
  return rng();
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path.string() + "'");
  out.precision(17);
  return out;
}

// Log-spaced integer prefixes in [lo, hi], both ends included.
std::vector<std::size_t> log_grid(std::size_t lo, std::size_t hi, std::size_t points) {
  std::vector<std::size_t> out{lo};
  const double ratio = static_cast<double>(hi) / static_cast<double>(lo);
  for (std::size_t j = 1; j <= points; ++j) {
    const double t = static_cast<double>(j) / static_cast<double>(points);
    const auto v = static_cast<std::size_t>(std::llround(static_cast<double>(lo) * std::pow(ratio, t)));
    if (v > out.back() && v <= hi) out.push_back(v);
  }
  if (out.back() != hi) out.push_back(hi);
  return out;
}

WeightedSample exact_draws(const ConjugateNormalModel& model, std::size_t n0, std::size_t M, Rng& rng) {
  Eigen::MatrixXd x = model.posterior_sample(n0, M, rng);
  Eigen::VectorXd cum(x.cols());
  for (Eigen::Index m = 0; m < x.cols(); ++m) cum[m] = model.batch_loglik(x.col(m), 0, n0);
  return WeightedSample::equally_weighted(std::move(x), std::move(cum), n0);
}

std::filesystem::path fig1(const FigureOptions& o) {
  const std::size_t n = o.full ? 10000 : std::max<std::size_t>(1000, static_cast<std::size_t>(1e4 * o.scale));
  const std::size_t n0 = 250;
  const std::size_t M = o.full ? 50000 : 20000;
  const std::size_t reps = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(30 * std::min(o.scale, 1.0))));
  const auto path = o.out / "fig1.csv";
  auto out = open_output(path);
  out << "replicate,n,ress,u1_bound\n";
  const ThreadPool pool(o.threads);
  for (std::size_t r = 0; r < reps; ++r) {
    const auto y = simulate_normal(n, 0.0, 1.0, derive_seed(o.seed, 0xF1, r));
    const ConjugateNormalModel model(0.0, 1e4, 1.0, y);
    Rng rng(o.seed, 0xF1F1, r);
    WeightedSample s = exact_draws(model, n0, M, rng);
    for (std::size_t p : log_grid(n0, n, 100)) {
      recursive_update(s, model, p, pool);
      out << r << ',' << p << ',' << ress(s).ress << ',' << u1(static_cast<double>(n0) / static_cast<double>(p), 1) << '\n';
    }
  }
  return path;
}

std::filesystem::path fig2(const FigureOptions& o) {
  const std::size_t n = o.full ? 1000000 : std::max<std::size_t>(2000, static_cast<std::size_t>(1e6 * o.scale));
  const std::size_t M = o.full ? 50000 : 20000;
  const std::size_t reps = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(30 * std::min(o.scale, 1.0))));
  std::vector<std::size_t> times;
  for (std::size_t t : {std::size_t{1}, std::size_t{100}, std::size_t{10000}}) {
    if (t < n) times.push_back(t);
  }
  const auto path = o.out / "fig2.csv";
  auto out = open_output(path);
  out << "replicate,n,ress,u1_bound,event\n";
  const ThreadPool pool(o.threads);
  for (std::size_t r = 0; r < reps; ++r) {
    const auto y = simulate_normal(n, 0.0, 1.0, derive_seed(o.seed, 0xF2, r));
    const ConjugateNormalModel model(0.0, 1e4, 1.0, y);
    Rng rng(o.seed, 0xF2F2, r);
    for (std::size_t k = 0; k < times.size(); ++k) {
      const std::size_t n0 = times[k];
      const std::size_t end = k + 1 < times.size() ? times[k + 1] : n;
      WeightedSample s = exact_draws(model, n0, M, rng);
      out << r << ',' << n0 << ',' << ress(s).ress << ",1,replenish\n";
      const auto grid = log_grid(n0, end, 60);
      for (std::size_t j = 1; j < grid.size(); ++j) {
        recursive_update(s, model, grid[j], pool);
        out << r << ',' << grid[j] << ',' << ress(s).ress << ','
            << u1(static_cast<double>(n0) / static_cast<double>(grid[j]), 1) << ",update\n";
      }
    }
  }
  return path;
}

std::vector<std::size_t> fig3_sizes(const FigureOptions& o) {
  if (o.full) return {320, 640, 1280, 2560, 5120, 10240};
  std::vector<std::size_t> sizes;
  for (std::size_t n : {160, 320, 640, 1280}) {
    if (n == 160 || static_cast<double>(n) <= 1280.0 * o.scale) sizes.push_back(n);
  }
  return sizes;
}

BenchmarkSpec figure_benchmark(const FigureOptions& o) {
  BenchmarkSpec spec;
  spec.sizes = fig3_sizes(o);
  spec.threads = {o.threads};
  spec.seed = o.seed;
  if (o.full) {
    spec.M = 50000;
    spec.mcmc_iterations = 50000;
    spec.mcmc_burn_in = 5000;
  } else {
    const double s = std::min(o.scale, 1.0);
    spec.M = std::max<std::size_t>(2000, static_cast<std::size_t>(20000 * s));
    spec.mcmc_iterations = std::max<std::size_t>(2000, static_cast<std::size_t>(20000 * s));
    spec.mcmc_burn_in = spec.mcmc_iterations / 4;
  }
  return spec;
}

std::vector<std::filesystem::path> fig3(const FigureOptions& o) {
  const auto rows = run_benchmark(figure_benchmark(o));
  const auto path = o.out / "fig3.csv";
  const auto timing_path = o.out / "fig3_timing.csv";
  auto out = open_output(path);
  auto timing = open_output(timing_path);
  out << "method,n,threads,n_evals,ess\n";
  timing << "method,n,threads,seconds,ess_per_minute\n";
  for (const auto& r : rows) {
    if (r.method == "update") continue;
    out << r.method << ',' << r.n << ',' << r.threads << ',' << r.n_evals << ',' << r.ess << '\n';
    timing << r.method << ',' << r.n << ',' << r.threads << ',' << r.seconds << ',' << r.ess_per_minute << '\n';
  }
  return {path, timing_path};
}

std::filesystem::path fig4(const FigureOptions& o) {
  const std::size_t n = o.full ? 10240 : std::max<std::size_t>(160, static_cast<std::size_t>(1280 * std::min(o.scale, 1.0)));
  const BenchmarkSpec spec = figure_benchmark(o);
  const GpData data = simulate_gp(n, GpTruth{}, derive_seed(o.seed, 0xF4, 0));
  const GpModel model(data, GpPriors::weak(3));
  const EngineConfig config = desk_engine_config(spec.M, o.seed);
  const auto path = o.out / "fig4.csv";
  auto out = open_output(path);
  out << "n,ress,event,n_evals,temperature,r,r_min,phi_mean,phi_q025,phi_q975\n";
  const auto phi_index = static_cast<Eigen::Index>(model.dim() - 1);
  auto observer = [&](const TraceEvent& e, const WeightedSample& s) {
    Eigen::VectorXd w;
    try {
      w = normalize(s.log_weights);
    } catch (const DegenerateWeights&) {
      return;
    }
    Eigen::VectorXd phi(s.particles.cols());
    for (Eigen::Index m = 0; m < phi.size(); ++m) phi[m] = std::exp(s.particles(phi_index, m));
    out << e.n << ',' << e.ress << ',' << to_string(e.kind) << ',' << e.n_evals << ',' << e.temperature << ','
        << config.r << ',' << config.r_min << ',' << phi.dot(w) << ',' << weighted_quantile(phi, w, 0.025) << ','
        << weighted_quantile(phi, w, 0.975) << '\n';
  };
  fit_gp_raisor(model, config, o.threads, observer);
  return path;
}

}  // namespace

EngineConfig desk_engine_config(std::size_t M, std::uint64_t seed) {
  EngineConfig c;
  c.M = M;
  c.N_reduce = std::min<std::size_t>(5000, static_cast<std::size_t>(static_cast<double>(M) * c.r_min));
  c.seed = seed;
  return c;
}

Engine::Initializer exact_conjugate_initializer(const ConjugateNormalModel& model) {
  return [&model](const Model&, const EngineConfig& c, Rng& rng) {
    return exact_draws(model, c.n0_init, c.M, rng);
  };
}

Engine::Fitter exact_conjugate_fitter(const ConjugateNormalModel& model) {
  return [&model](const WeightedSample& s, std::size_t, Rng&) { return model.posterior_proposal(s.prefix_len); };
}

Engine::Initializer gp_mcmc_initializer(const GpModel& model) {
  return [&model](const Model&, const EngineConfig& c, Rng& rng) {
    if (c.n0_init == 0) throw ConfigError("the GP initializer needs n0_init >= 1");
    return sample_partial_posterior(model, c.n0_init, c.M, rng);
  };
}

const ParameterSummary& FitSummary::at(const std::string& name) const {
  for (const auto& p : params) {
    if (p.name == name) return p;
  }
  throw InvalidArgument("no parameter named '" + name + "'");
}

FitSummary summarize_sample(const Model& model, const WeightedSample& sample) {
  const Eigen::VectorXd w = normalize(sample.log_weights);
  const double ess = ress(sample).ess;
  Eigen::MatrixXd theta(sample.particles.rows(), sample.particles.cols());
  for (Eigen::Index m = 0; m < theta.cols(); ++m) theta.col(m) = model.transform().to_model(sample.particles.col(m));
  FitSummary out;
  out.ess = ess;
  const auto names = model.parameter_names();
  for (Eigen::Index j = 0; j < theta.rows(); ++j) {
    const Eigen::VectorXd v = theta.row(j).transpose();
    ParameterSummary p;
    p.name = names[static_cast<std::size_t>(j)];
    p.mean = v.dot(w);
    p.sd = std::sqrt(std::max(0.0, (v.array() - p.mean).square().matrix().dot(w)));
    p.q025 = weighted_quantile(v, w, 0.025);
    p.q975 = weighted_quantile(v, w, 0.975);
    p.ess = ess;
    out.params.push_back(p);
  }
  return out;
}

FitSummary summarize_chain(const GpModel& model, const ChainResult& chain) {
  FitSummary out;
  const auto names = model.parameter_names();
  const auto n = chain.draws.rows();
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  double ess_sum = 0.0;
  for (Eigen::Index j = 0; j < chain.draws.cols(); ++j) {
    const Eigen::VectorXd v = chain.draws.col(j);
    ParameterSummary p;
    p.name = names[static_cast<std::size_t>(j)];
    p.mean = v.mean();
    p.sd = std::sqrt((v.array() - p.mean).square().sum() / static_cast<double>(std::max<Eigen::Index>(1, n - 1)));
    p.q025 = weighted_quantile(v, w, 0.025);
    p.q975 = weighted_quantile(v, w, 0.975);
    p.ess = chain.ess[static_cast<std::size_t>(j)];
    ess_sum += p.ess;
    out.params.push_back(p);
  }
  out.ess = ess_sum / static_cast<double>(chain.draws.cols());
  out.seconds = chain.seconds;
  out.n_evals = chain.n_evals;
  return out;
}

bool means_agree(const FitSummary& a, const FitSummary& b, double z) {
  if (a.params.size() != b.params.size()) return false;
  for (std::size_t j = 0; j < a.params.size(); ++j) {
    const auto& pa = a.params[j];
    const auto& pb = b.params[j];
    const double se = std::sqrt(pa.sd * pa.sd / pa.ess + pb.sd * pb.sd / pb.ess);
    if (!(std::abs(pa.mean - pb.mean) <= z * se)) return false;
  }
  return true;
}

GpFit fit_gp_raisor(const GpModel& model, const EngineConfig& config, std::size_t threads,
                    const Engine::Observer& observer) {
  const auto start = Clock::now();
  Engine engine(model, config, threads);
  engine.set_initializer(gp_mcmc_initializer(model));
  if (observer) engine.set_observer(observer);
  GpFit fit;
  fit.sample = engine.run();
  fit.trace = engine.trace();
  fit.summary = summarize_sample(model, fit.sample);
  fit.summary.seconds = seconds_since(start);
  fit.summary.n_evals = engine.n_evals();
  return fit;
}

double update_throughput(const GpModel& model, std::size_t particles, std::size_t batch,
                         std::size_t threads, std::uint64_t seed) {
  batch = std::min(batch, model.n_obs());
  Rng rng(seed, 0xB0);
  const Eigen::MatrixXd theta = model.prior_sample(particles, rng);
  Eigen::MatrixXd x(theta.rows(), theta.cols());
  for (Eigen::Index m = 0; m < x.cols(); ++m) x.col(m) = model.transform().to_unconstrained(theta.col(m));
  WeightedSample s = WeightedSample::equally_weighted(std::move(x), Eigen::VectorXd::Zero(theta.cols()), 0);
  const ThreadPool pool(threads);
  const auto start = Clock::now();
  const auto evals = recursive_update(s, model, batch, pool);
  return static_cast<double>(evals) / std::max(seconds_since(start), 1e-9);
}

std::vector<BenchmarkRow> run_benchmark(const BenchmarkSpec& spec) {
  if (spec.sizes.empty()) throw ConfigError("benchmark: sizes must be nonempty");
  if (spec.threads.empty()) throw ConfigError("benchmark: thread list must be nonempty");
  std::vector<BenchmarkRow> rows;
  for (std::size_t n : spec.sizes) {
    const GpData data = simulate_gp(n, GpTruth{}, derive_seed(spec.seed, 0xBE, n));
    const GpModel model(data, GpPriors::weak(3));
    for (const auto& method : spec.methods) {
      if (method == "raisor") {
        for (std::size_t t : spec.threads) {
          const GpFit fit = fit_gp_raisor(model, desk_engine_config(spec.M, spec.seed), t);
          BenchmarkRow r{method, n, t, fit.summary.seconds, fit.summary.n_evals, fit.summary.ess};
          r.ess_per_minute = r.ess / (r.seconds / 60.0);
          r.evals_per_second = static_cast<double>(r.n_evals) / r.seconds;
          rows.push_back(r);
        }
      } else if (method == "mcmc") {
        McmcConfig mc;
        mc.iterations = spec.mcmc_iterations;
        mc.burn_in = spec.mcmc_burn_in;
        Rng rng(spec.seed, 0x3C3C, n);
        const ChainResult chain = run_chain(model, mc, rng);
        const FitSummary s = summarize_chain(model, chain);
        BenchmarkRow r{method, n, 1, chain.seconds, chain.n_evals, s.ess};
        r.ess_per_minute = r.ess / (r.seconds / 60.0);
        r.evals_per_second = static_cast<double>(r.n_evals) / r.seconds;
        rows.push_back(r);
      } else if (method == "update") {
        for (std::size_t t : spec.threads) {
          BenchmarkRow r{method, n, t};
          r.evals_per_second = update_throughput(model, spec.M, n, t, spec.seed);
          r.n_evals = static_cast<std::uint64_t>(spec.M) * n;
          r.seconds = static_cast<double>(r.n_evals) / r.evals_per_second;
          rows.push_back(r);
        }
      } else {
        throw ConfigError("benchmark: unknown method '" + method + "'");
      }
    }
  }
  return rows;
}

void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows) {
  out << "method,n,threads,seconds,n_evals,ess,ess_per_minute,evals_per_second\n";
  std::ostringstream line;
  line.precision(17);
  for (const auto& r : rows) {
    line.str("");
    line << r.method << ',' << r.n << ',' << r.threads << ',' << r.seconds << ',' << r.n_evals << ',' << r.ess
         << ',' << r.ess_per_minute << ',' << r.evals_per_second << '\n';
    out << line.str();
  }
}

std::vector<std::filesystem::path> replicate_figure(const std::string& id, const FigureOptions& options) {
  if (!(options.scale > 0.0)) throw ConfigError("scale must be positive");
  if (id == "fig1") return {fig1(options)};
  if (id == "fig2") return {fig2(options)};
  if (id == "fig3") return fig3(options);
  if (id == "fig4") return {fig4(options)};
  throw ConfigError("unknown figure id '" + id + "' (expected fig1, fig2, fig3 or fig4)");
}

}  // namespace raisor::tools
