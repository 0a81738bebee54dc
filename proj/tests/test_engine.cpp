#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "raisor/conjugate_normal.hpp"
#include "raisor/engine.hpp"
#include "raisor/gp_model.hpp"
#include "raisor_tools/data.hpp"
#include "raisor_tools/experiments.hpp"

using namespace raisor;

namespace {

ConjugateNormalModel conjugate(std::size_t n, double sigma0_sq = 1e4, std::uint64_t seed = 1) {
  return ConjugateNormalModel(0.0, sigma0_sq, 1.0, tools::simulate_normal(n, 0.5, 1.0, seed));
}

EngineConfig small_config(std::size_t M) {
  EngineConfig c;
  c.M = M;
  c.N_reduce = std::min<std::size_t>(2000, M / 10);
  c.seed = 7;
  return c;
}

WeightedSample prior_particles(const Model& model, std::size_t M, std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::MatrixXd theta = model.prior_sample(M, rng);
  return WeightedSample::equally_weighted(theta, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(M)), 0);
}

// Mean and Monte Carlo SE of mu from a weighted sample.
std::pair<double, double> weighted_mu(const WeightedSample& s) {
  const Eigen::VectorXd w = normalize(s.log_weights);
  const double mean = s.particles.row(0).dot(w);
  const double var = (s.particles.row(0).array() - mean).square().matrix().dot(w);
  const double ess = 1.0 / w.squaredNorm();
  return {mean, std::sqrt(var / ess)};
}

}  // namespace

TEST(PlanBatches, HandExamples) {
  EngineConfig c;
  c.alpha = 2.0 / 3.0;
  auto ladder = plan_batches(100, 100000, c);
  EXPECT_EQ(ladder.back(), 150u);
  EXPECT_EQ(ladder.front(), 101u);
  EXPECT_LE(ladder.size(), c.B + 1);
  c.alpha = 0.5;
  EXPECT_EQ(plan_batches(1, 100, c).back(), 2u);
  EXPECT_EQ(plan_batches(1, 100, c).size(), 1u);
}

TEST(PlanBatches, StrictlyIncreasingAndClamped) {
  EngineConfig c;
  for (std::size_t n : {1u, 7u, 50u, 999u, 12345u}) {
    const auto ladder = plan_batches(n, 13000, c);
    ASSERT_FALSE(ladder.empty());
    EXPECT_GT(ladder.front(), n);
    EXPECT_LE(ladder.back(), 13000u);
    for (std::size_t i = 1; i < ladder.size(); ++i) EXPECT_GT(ladder[i], ladder[i - 1]);
  }
  EXPECT_EQ(plan_batches(12345, 13000, c).back(), 13000u);
  EXPECT_THROW(plan_batches(5, 5, c), InvalidArgument);
}

TEST(EngineConfigTest, Validation) {
  EngineConfig c;
  EXPECT_NO_THROW(c.validate());
  c.r_min = 0.3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.alpha = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.M = 1000;  // M * r_min < N_reduce
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.K_mix = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RecursiveUpdate, ZeroLengthIsIdentity) {
  const auto model = conjugate(50);
  auto s = prior_particles(model, 100, 1);
  recursive_update(s, model, 10);
  const auto before = s;
  EXPECT_EQ(recursive_update(s, model, 10), 0u);
  EXPECT_EQ(s.log_weights, before.log_weights);
  EXPECT_EQ(s.particles, before.particles);
}

TEST(RecursiveUpdate, BatchingIdentity) {
  const auto model = conjugate(500);
  Rng rng(2);
  const Eigen::MatrixXd draws = model.posterior_sample(10, 300, rng);
  auto one = WeightedSample::equally_weighted(draws, Eigen::VectorXd::Zero(300), 10);
  auto two = one;
  recursive_update(one, model, 500);
  recursive_update(two, model, 123);
  recursive_update(two, model, 500);
  EXPECT_LT((one.log_weights - two.log_weights).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(two.prefix_len, 500u);
}

TEST(RecursiveUpdate, BatchingIdentityFarFromPosterior) {
  // vague-prior particles carry log-weights near -1e7; compare to double resolution
  const auto model = conjugate(500);
  auto one = prior_particles(model, 300, 2);
  auto two = one;
  recursive_update(one, model, 500);
  recursive_update(two, model, 123);
  recursive_update(two, model, 500);
  for (Eigen::Index m = 0; m < 300; ++m) {
    EXPECT_NEAR(one.log_weights[m], two.log_weights[m], 4e-16 * std::abs(one.log_weights[m]) + 1e-10);
  }
}

TEST(RecursiveUpdate, MatchesExactPosterior) {
  const auto model = conjugate(50, 1.0, 3);
  auto s = prior_particles(model, 100000, 4);
  recursive_update(s, model, 50);
  const auto [mean, se] = weighted_mu(s);
  EXPECT_LT(std::abs(mean - model.exact_posterior(50).mean), 3.0 * se);
}

TEST(RecursiveUpdate, ThreadCountDoesNotChangeResult) {
  const auto model = conjugate(200);
  auto a = prior_particles(model, 1001, 5);
  auto b = a;
  recursive_update(a, model, 200, ThreadPool(1));
  recursive_update(b, model, 200, ThreadPool(3));
  EXPECT_EQ(a.log_weights, b.log_weights);
  EXPECT_THROW(recursive_update(a, model, 100), InvalidArgument);
}

TEST(Replenish, ExactProposalIsNearPerfect) {
  const auto model = conjugate(1000);
  EngineConfig c = small_config(10000);
  Engine engine(model, c);
  engine.set_fitter(tools::exact_conjugate_fitter(model));
  auto s = prior_particles(model, 10000, 6);
  recursive_update(s, model, 1000);
  engine.replenish(s);
  EXPECT_GE(ress(s).ress, 0.99);
}

TEST(Replenish, WeightsFollowDefinition) {
  const auto model = conjugate(300);
  EngineConfig c = small_config(4000);
  c.K_mix = 3;
  Engine engine(model, c);
  auto s = prior_particles(model, 4000, 7);
  recursive_update(s, model, 300);
  engine.replenish(s);
  ASSERT_TRUE(engine.last_proposal().has_value());
  const auto& q = *engine.last_proposal();
  for (Eigen::Index m = 0; m < 50; ++m) {
    const Eigen::VectorXd x = s.particles.col(m);
    const double expected = model.batch_loglik(x, 0, 300) + model.log_prior(x) - q.log_density(x);
    EXPECT_NEAR(s.log_weights[m], expected, 1e-10);
    EXPECT_NEAR(s.cum_loglik[m], model.batch_loglik(x, 0, 300), 1e-10);
  }
  EXPECT_GT(ress(s).ress, 0.5);
}

TEST(Advance, NoReplenishWhenRessStaysHigh) {
  const auto model = conjugate(2000);
  EngineConfig c = small_config(5000);
  Engine engine(model, c);
  engine.set_initializer(tools::exact_conjugate_initializer(model));
  engine.set_fitter(tools::exact_conjugate_fitter(model));
  auto s = engine.initialize();
  // n0 = 10 -> 15: the exact RESS is about 0.94
  engine.advance(s);
  EXPECT_EQ(s.prefix_len, 15u);
  EXPECT_EQ(engine.trace().count(EventKind::replenish), 0u);
}

TEST(Advance, AnnealRescueOnSharpLikelihood) {
  // tiny M, vague prior and a large first batch: every ladder rung is degenerate
  const auto model = conjugate(3000, 1e4, 9);
  EngineConfig c;
  c.M = 500;
  c.N_reduce = 50;
  c.K_mix = 2;
  c.n0_init = 1000;
  c.alpha = 0.001;
  c.seed = 3;
  Engine engine(model, c);
  auto s = prior_particles(model, 500, 8);
  recursive_update(s, model, 1);
  engine.advance(s);
  EXPECT_GT(engine.trace().count(EventKind::anneal_step), 0u);
  EXPECT_GE(ress(s).ress, c.r);
  double last_t = 0.0;
  for (const auto& e : engine.trace().events) {
    if (e.kind == EventKind::anneal_step) {
      EXPECT_GT(e.temperature, last_t);
      last_t = e.temperature;
    }
  }
  EXPECT_DOUBLE_EQ(last_t, 1.0);
}

TEST(AnnealRescue, BisectionTargetsThreshold) {
  const auto model = conjugate(10010);
  EngineConfig c = small_config(10000);
  c.K_mix = 1;
  Engine engine(model, c);
  engine.set_initializer(tools::exact_conjugate_initializer(model));
  auto s = engine.initialize();
  engine.anneal_rescue(s, 10010);
  const auto& ev = engine.trace().events;
  bool saw_intermediate = false;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (ev[i].kind == EventKind::anneal_step && ev[i].temperature < 1.0) {
      saw_intermediate = true;
      EXPECT_GE(ev[i].ress, c.r - 0.01);
      EXPECT_LT(ev[i].ress, 1.0);
    }
    if (ev[i].kind == EventKind::replenish) EXPECT_GE(ev[i].ress, c.r);
  }
  EXPECT_TRUE(saw_intermediate);
  EXPECT_EQ(s.prefix_len, 10010u);
  EXPECT_GE(ress(s).ress, c.r);
  const auto [mean, se] = weighted_mu(s);
  EXPECT_LT(std::abs(mean - model.exact_posterior(10010).mean), 3.0 * se);
}

TEST(AnnealRescue, OneStepWhenTargetIsEasy) {
  const auto model = conjugate(20);
  EngineConfig c = small_config(5000);
  Engine engine(model, c);
  engine.set_initializer(tools::exact_conjugate_initializer(model));
  engine.set_fitter(tools::exact_conjugate_fitter(model));
  auto s = engine.initialize();
  engine.anneal_rescue(s, 11);
  EXPECT_EQ(engine.trace().count(EventKind::anneal_step), 1u);
  EXPECT_EQ(engine.trace().count(EventKind::replenish), 0u);
  EXPECT_EQ(s.prefix_len, 11u);
}

TEST(Run, ConjugateEndToEnd) {
  const std::size_t n = 10000;
  const auto model = conjugate(n, 1e4, 11);
  EngineConfig c = small_config(20000);
  Engine engine(model, c);
  engine.set_initializer(tools::exact_conjugate_initializer(model));
  const auto s = engine.run();
  const auto exact = model.exact_posterior(n);
  const auto [mean, se] = weighted_mu(s);
  EXPECT_LT(std::abs(mean - exact.mean), 3.0 * se);
  const std::size_t bound =
      static_cast<std::size_t>(std::ceil(std::log(double(n) / c.n0_init) / std::log(1.0 / c.alpha))) + 3;
  EXPECT_LE(engine.trace().count(EventKind::replenish), bound);
  for (const auto& e : engine.trace().events) {
    if (e.kind != EventKind::anneal_step) EXPECT_GE(e.ress, c.r_min) << e.n;
  }
}

TEST(Run, DeterministicTrace) {
  const auto model = conjugate(2000);
  auto go = [&](std::size_t threads) {
    EngineConfig c = small_config(3000);
    Engine engine(model, c, threads);
    engine.set_initializer(tools::exact_conjugate_initializer(model));
    const auto s = engine.run();
    return std::make_pair(engine.trace(), s);
  };
  const auto [t1, s1] = go(1);
  const auto [t2, s2] = go(1);
  const auto [t3, s3] = go(2);
  ASSERT_EQ(t1.events.size(), t2.events.size());
  ASSERT_EQ(t1.events.size(), t3.events.size());
  for (std::size_t i = 0; i < t1.events.size(); ++i) {
    EXPECT_EQ(t1.events[i].n, t2.events[i].n);
    EXPECT_EQ(t1.events[i].ress, t2.events[i].ress);
    EXPECT_EQ(t1.events[i].ress, t3.events[i].ress);
    EXPECT_EQ(t1.events[i].n_evals, t3.events[i].n_evals);
  }
  EXPECT_EQ(s1.log_weights, s2.log_weights);
  EXPECT_EQ(s1.log_weights, s3.log_weights);
}

TEST(Run, GpReplenishmentsImproveRess) {
  tools::GpTruth truth;
  const GpData data = tools::simulate_gp(160, truth, 4);
  const GpModel model(data, GpPriors::weak(3));
  EngineConfig c;
  c.M = 3000;
  c.N_reduce = 300;
  c.seed = 2;
  std::size_t total = 0, improved = 0;
  double pre = 1.0;
  const auto fit = tools::fit_gp_raisor(model, c, 1, [&](const TraceEvent& e, const WeightedSample&) {
    if (e.kind == EventKind::replenish && e.temperature == 1.0) {
      ++total;
      improved += e.ress > pre;
    }
    pre = e.ress;
  });
  ASSERT_GT(total, 0u);
  EXPECT_GE(static_cast<double>(improved), 0.95 * static_cast<double>(total));
  EXPECT_EQ(fit.sample.prefix_len, 160u);
  EXPECT_GT(fit.summary.at("phi").mean, 0.0);
}

TEST(TraceCsv, RoundTrip) {
  RessTrace t;
  t.events.push_back({10, 1.0, EventKind::init, 0.5, 0, 1.0});
  t.events.push_back({15, 0.123456789012345678, EventKind::update, 0.25, 50, 1.0});
  t.events.push_back({22, 0.3, EventKind::anneal_step, 0.125, 90, 0.37});
  std::stringstream buf;
  t.write_csv(buf);
  EXPECT_EQ(buf.str().substr(0, buf.str().find('\n')), "n,ress,event,seconds,n_evals,temperature");
  const auto back = RessTrace::read_csv(buf);
  ASSERT_EQ(back.events.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.events[i].n, t.events[i].n);
    EXPECT_EQ(back.events[i].ress, t.events[i].ress);
    EXPECT_EQ(back.events[i].kind, t.events[i].kind);
    EXPECT_EQ(back.events[i].seconds, t.events[i].seconds);
    EXPECT_EQ(back.events[i].n_evals, t.events[i].n_evals);
    EXPECT_EQ(back.events[i].temperature, t.events[i].temperature);
  }
}

TEST(CheckpointTest, RoundTripAndResume) {
  const auto model = conjugate(3000);
  EngineConfig c = small_config(2000);
  Engine engine(model, c);
  engine.set_initializer(tools::exact_conjugate_initializer(model));
  auto s = engine.initialize();
  while (s.prefix_len < 500) engine.advance(s);
  s.log_weights[0] = -std::numeric_limits<double>::infinity();
  const auto path = std::filesystem::temp_directory_path() / "raisor_ckpt_test.json";
  save_checkpoint(path.string(), {s, engine.last_proposal(), engine.n_evals()});
  const Checkpoint cp = load_checkpoint(path.string());
  EXPECT_EQ(cp.sample.particles, s.particles);
  EXPECT_EQ(cp.sample.log_weights, s.log_weights);
  EXPECT_EQ(cp.sample.cum_loglik, s.cum_loglik);
  EXPECT_EQ(cp.sample.prefix_len, s.prefix_len);
  EXPECT_EQ(cp.n_evals, engine.n_evals());
  Engine resumed(model, c);
  const auto done = resumed.run(cp.sample);
  EXPECT_EQ(done.prefix_len, 3000u);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path.string()), InvalidArgument);
}

TEST(PosteriorCsv, HeaderAndWeights) {
  const auto model = conjugate(10);
  auto s = prior_particles(model, 4, 1);
  std::stringstream out;
  write_posterior_csv(out, model, s);
  std::string header;
  std::getline(out, header);
  EXPECT_EQ(header, "mu,weight");
  double total = 0.0;
  std::string line;
  while (std::getline(out, line)) total += std::stod(line.substr(line.find(',') + 1));
  EXPECT_NEAR(total, 1.0, 1e-12);
}
