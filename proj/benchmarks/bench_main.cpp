#include <benchmark/benchmark.h>

#include <map>
#include <memory>

#include "raisor/approx.hpp"
#include "raisor/conjugate_normal.hpp"
#include "raisor/engine.hpp"
#include "raisor/gp_model.hpp"
#include "raisor/sampling.hpp"
#include "raisor_tools/data.hpp"

using namespace raisor;

namespace {

const GpModel& gp_model(std::size_t n) {
  static std::map<std::size_t, std::unique_ptr<GpModel>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<GpModel>(tools::simulate_gp(n, tools::GpTruth{}, 7), GpPriors::weak(3));
  return *slot;
}

void BM_GpConditionals(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const GpModel& model = gp_model(n);
  Eigen::VectorXd theta(6);
  theta << 8, 4, 16, 4, 0.05, 0.05;
  std::vector<double> out(n);
  for (auto _ : state) {
    model.conditional_logliks(theta, 0, n, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_GpConditionals)->Arg(640)->Arg(2560);

void BM_RecursiveUpdate(benchmark::State& state) {
  const GpModel& model = gp_model(640);
  const auto threads = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const Eigen::MatrixXd theta = model.prior_sample(2000, rng);
  Eigen::MatrixXd x(theta.rows(), theta.cols());
  for (Eigen::Index m = 0; m < x.cols(); ++m) x.col(m) = model.transform().to_unconstrained(theta.col(m));
  const ThreadPool pool(threads);
  for (auto _ : state) {
    WeightedSample s = WeightedSample::equally_weighted(x, Eigen::VectorXd::Zero(x.cols()), 0);
    benchmark::DoNotOptimize(recursive_update(s, model, 640, pool));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * 2000 * 640);
}
BENCHMARK(BM_RecursiveUpdate)->Arg(1)->Arg(2)->Arg(4)->UseRealTime();

void BM_ConjugateLadder(benchmark::State& state) {
  const ConjugateNormalModel model(0.0, 1e4, 1.0, tools::simulate_normal(100000, 0.3, 1.0, 5));
  const std::vector<std::size_t> prefixes{1000, 2000, 5000, 10000, 50000, 100000};
  std::vector<double> out(prefixes.size());
  Eigen::VectorXd theta(1);
  theta << 0.3;
  for (auto _ : state) {
    model.ladder_logliks(theta, 0, prefixes, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_ConjugateLadder);

void BM_WeightedSir(benchmark::State& state) {
  Rng rng(11);
  const auto m = static_cast<Eigen::Index>(state.range(0));
  WeightedSample s;
  s.particles = Eigen::MatrixXd::Random(3, m);
  s.log_weights = Eigen::VectorXd::Random(m) * 5.0;
  s.cum_loglik = Eigen::VectorXd::Zero(m);
  for (auto _ : state) benchmark::DoNotOptimize(weighted_sir(s, static_cast<std::size_t>(m / 10), rng));
}
BENCHMARK(BM_WeightedSir)->Arg(20000)->Arg(50000);

void BM_WeightedEm(benchmark::State& state) {
  Rng rng(13);
  const Eigen::MatrixXd points = Eigen::MatrixXd::Random(6, 2000);
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(2000, 1.0 / 2000.0);
  const auto k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fit_weighted_em(points, w, k, rng));
}
BENCHMARK(BM_WeightedEm)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
