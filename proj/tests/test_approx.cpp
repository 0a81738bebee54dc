#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "raisor/approx.hpp"

using namespace raisor;

namespace {

MixtureProposal two_component(double w0, double m0, double m1, double v0 = 1.0, double v1 = 1.0) {
  std::vector<Eigen::VectorXd> means{Eigen::VectorXd::Constant(1, m0), Eigen::VectorXd::Constant(1, m1)};
  std::vector<Eigen::MatrixXd> covs{Eigen::MatrixXd::Constant(1, 1, v0), Eigen::MatrixXd::Constant(1, 1, v1)};
  return MixtureProposal(Eigen::Vector2d(w0, 1.0 - w0), means, covs, Transform::identity(1));
}

double normal_pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

}  // namespace

TEST(MixtureLogDensity, StandardNormalAtZero) {
  const auto q = MixtureProposal::gaussian(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1),
                                           Transform::identity(1));
  EXPECT_NEAR(q.log_density(Eigen::VectorXd::Zero(1)), -0.9189385332046727, 1e-12);
}

TEST(MixtureLogDensity, SymmetricMixture) {
  const auto q = two_component(0.5, -2.0, 2.0);
  for (double x : {0.3, 1.7, 5.0, 40.0}) {
    EXPECT_NEAR(q.log_density(Eigen::VectorXd::Constant(1, x)), q.log_density(Eigen::VectorXd::Constant(1, -x)), 1e-12);
  }
}

TEST(MixtureLogDensity, DirectSummationOracle) {
  const auto q = two_component(0.3, -1.0, 2.5, 0.5, 2.0);
  for (double x : {-3.0, -1.0, 0.0, 0.7, 2.5, 4.0}) {
    const double direct = std::log(0.3 * normal_pdf(x, -1.0, 0.5) + 0.7 * normal_pdf(x, 2.5, 2.0));
    EXPECT_NEAR(q.log_density(Eigen::VectorXd::Constant(1, x)), direct, 1e-12);
  }
}

TEST(MixtureLogDensity, MultivariateOracle) {
  Eigen::Matrix2d cov;
  cov << 2.0, 0.6, 0.6, 1.0;
  const Eigen::Vector2d mean(1.0, -1.0);
  const auto q = MixtureProposal::gaussian(mean, cov, Transform::identity(2));
  const Eigen::Vector2d x(0.3, 0.4);
  const Eigen::Vector2d dx = x - mean;
  const double expected = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(cov.determinant()) -
                          0.5 * dx.dot(cov.inverse() * dx);
  EXPECT_NEAR(q.log_density(x), expected, 1e-12);
}

TEST(MixtureLogDensity, DimensionMismatch) {
  const auto q = two_component(0.5, 0.0, 1.0);
  EXPECT_THROW(q.log_density(Eigen::VectorXd::Zero(2)), InvalidArgument);
}

TEST(MixtureConstruction, RejectsBadInput) {
  std::vector<Eigen::VectorXd> means{Eigen::VectorXd::Zero(1)};
  std::vector<Eigen::MatrixXd> covs{Eigen::MatrixXd::Constant(1, 1, -1.0)};
  EXPECT_THROW(MixtureProposal(Eigen::VectorXd::Ones(1), means, covs, Transform::identity(1)), Error);
  covs[0](0, 0) = 1.0;
  EXPECT_THROW(MixtureProposal(Eigen::VectorXd::Constant(1, 0.5), means, covs, Transform::identity(1)), Error);
}

TEST(MixtureSample, NarrowComponentMean) {
  const double var = 1e-8;
  const auto q = MixtureProposal::gaussian(Eigen::VectorXd::Constant(1, 3.0), Eigen::MatrixXd::Constant(1, 1, var),
                                           Transform::identity(1));
  Rng rng(4);
  const Eigen::MatrixXd x = q.sample(10000, rng);
  EXPECT_LT(std::abs(x.mean() - 3.0), 3.0 * std::sqrt(var / 10000.0));
}

TEST(MixtureSample, ComponentSplit) {
  const auto q = two_component(0.5, -10.0, 10.0);
  Rng rng(11);
  const Eigen::MatrixXd x = q.sample(10000, rng);
  const double share = (x.array() > 0.0).cast<double>().mean();
  EXPECT_GE(share, 0.47);
  EXPECT_LE(share, 0.53);
}

TEST(MixtureSample, Deterministic) {
  const auto q = two_component(0.4, -1.0, 1.0);
  Rng a(99), b(99);
  EXPECT_EQ(q.sample(500, a), q.sample(500, b));
}

TEST(MixtureSample, MatchesDensityMoments) {
  const auto q = two_component(0.3, -1.0, 2.5, 0.5, 2.0);
  Rng rng(5);
  const Eigen::MatrixXd x = q.sample(200000, rng);
  const double mean = 0.3 * -1.0 + 0.7 * 2.5;
  const double var = 0.3 * (0.5 + 1.0) + 0.7 * (2.0 + 6.25) - mean * mean;
  EXPECT_NEAR(x.mean(), mean, 4.0 * std::sqrt(var / 200000.0));
}

TEST(MixtureTransform, ModelSpaceDensityIncludesJacobian) {
  const Transform t({TransformKind::log});
  const auto q = MixtureProposal::gaussian(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), t);
  // log-normal density at theta = 2
  const double theta = 2.0;
  const double expected = -0.9189385332046727 - 0.5 * std::log(theta) * std::log(theta) - std::log(theta);
  EXPECT_NEAR(q.log_density_model_space(Eigen::VectorXd::Constant(1, theta)), expected, 1e-12);
}

TEST(MixtureJson, RoundTrip) {
  auto q = two_component(0.3, -1.0, 2.5, 0.5, 2.0).inflated(1.2);
  const auto back = MixtureProposal::from_json(q.to_json());
  for (double x : {-2.0, 0.0, 3.0}) {
    EXPECT_NEAR(back.log_density(Eigen::VectorXd::Constant(1, x)), q.log_density(Eigen::VectorXd::Constant(1, x)), 1e-12);
  }
  EXPECT_NEAR(q.covariance(1)(0, 0), 2.4, 1e-12);
}

TEST(WeightedEm, SingleComponentIsWeightedMoments) {
  Rng rng(8);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd pts(3, 400);
  for (auto& v : pts.reshaped()) v = normal(rng);
  pts.row(1) += 0.5 * pts.row(0);
  Eigen::VectorXd w(400);
  for (auto& v : w) v = rng.uniform_pos();
  w /= w.sum();
  const auto fit = fit_weighted_em(pts, w, 1, rng);
  const Eigen::VectorXd mean = weighted_mean(pts, w);
  const Eigen::MatrixXd cov = weighted_covariance(pts, w);
  EXPECT_LT((fit.mean(0) - mean).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((fit.covariance(0) - cov).cwiseAbs().maxCoeff(), 1e-8 * (1.0 + cov.trace()));
}

TEST(WeightedEm, RecoversSeparatedClusters) {
  Rng rng(12);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd pts(2, 2000);
  for (Eigen::Index i = 0; i < 2000; ++i) {
    const double cx = i < 1000 ? -5.0 : 5.0;
    pts(0, i) = cx + 0.5 * normal(rng);
    pts(1, i) = 2.0 + 0.5 * normal(rng);
  }
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(2000, 1.0 / 2000);
  const auto fit = fit_weighted_em(pts, w, 2, rng);
  std::vector<double> xs{fit.mean(0)[0], fit.mean(1)[0]};
  std::sort(xs.begin(), xs.end());
  EXPECT_NEAR(xs[0], -5.0, 0.1);
  EXPECT_NEAR(xs[1], 5.0, 0.1);
  EXPECT_NEAR(fit.mean(0)[1], 2.0, 0.1);
  EXPECT_NEAR(fit.weights()[0], 0.5, 0.05);
}

TEST(WeightedEm, LikelihoodNonDecreasing) {
  Rng rng(3);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd pts(2, 600);
  for (Eigen::Index i = 0; i < 600; ++i) {
    pts(0, i) = (i % 3) * 3.0 + normal(rng);
    pts(1, i) = normal(rng);
  }
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(600, 1.0 / 600);
  const auto fit = fit_weighted_em_detailed(pts, w, 3, rng);
  ASSERT_GE(fit.loglik_trace.size(), 2u);
  for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i) {
    EXPECT_GE(fit.loglik_trace[i], fit.loglik_trace[i - 1] - 1e-9);
  }
}

TEST(WeightedEm, TooFewPointsStarves) {
  Rng rng(1);
  Eigen::MatrixXd pts(1, 3);
  pts << 0.0, 1.0, 2.0;
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(3, 1.0 / 3);
  EXPECT_THROW(fit_weighted_em(pts, w, 5, rng), ComponentStarvation);
}

TEST(Divergence, GeneratorsVanishAtOne) {
  for (auto k : {DivergenceKind::kl, DivergenceKind::chi2, DivergenceKind::tv}) {
    EXPECT_DOUBLE_EQ(divergence_generator(k, 1.0), 0.0);
  }
}

TEST(Divergence, KlOfIdenticalDistributionsIsZero) {
  const auto q = two_component(0.4, -1.0, 2.0);
  Rng rng(2);
  auto s = WeightedSample::equally_weighted(q.sample(100000, rng), Eigen::VectorXd::Zero(100000), 0);
  const double est = estimate_divergence(DivergenceKind::kl, s, q,
                                         [&](const Eigen::VectorXd& x) { return q.log_density(x); });
  EXPECT_LT(std::abs(est), 0.01);
}

TEST(Divergence, ChiSquareMatchesScaleClosedForm) {
  // target N(0, 1), proposal N(0, 1 / alpha) with alpha = 0.25
  const double alpha = 0.25;
  const auto target = MixtureProposal::gaussian(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1),
                                                Transform::identity(1));
  const auto q = MixtureProposal::gaussian(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 1.0 / alpha),
                                           Transform::identity(1));
  Rng rng(6);
  auto s = WeightedSample::equally_weighted(target.sample(100000, rng), Eigen::VectorXd::Zero(100000), 0);
  const double est = estimate_divergence(DivergenceKind::chi2, s, q,
                                         [&](const Eigen::VectorXd& x) { return target.log_density(x); });
  EXPECT_NEAR(est, 1.0 / std::sqrt(alpha * (2.0 - alpha)) - 1.0, 0.05);
}

TEST(Divergence, TotalVariationOfDisjointSupports) {
  const auto target = MixtureProposal::gaussian(Eigen::VectorXd::Constant(1, -50.0), Eigen::MatrixXd::Identity(1, 1),
                                                Transform::identity(1));
  const auto q = MixtureProposal::gaussian(Eigen::VectorXd::Constant(1, 50.0), Eigen::MatrixXd::Identity(1, 1),
                                           Transform::identity(1));
  Rng rng(7);
  auto s = WeightedSample::equally_weighted(target.sample(10000, rng), Eigen::VectorXd::Zero(10000), 0);
  const double est = estimate_divergence(DivergenceKind::tv, s, q,
                                         [&](const Eigen::VectorXd& x) { return target.log_density(x); });
  EXPECT_NEAR(est, 1.0, 1e-9);
}

TEST(TransformTest, RoundTripAndJacobian) {
  const Transform t({TransformKind::identity, TransformKind::log, TransformKind::logit});
  const Eigen::Vector3d theta(-2.0, 3.0, 0.2);
  const Eigen::VectorXd x = t.to_unconstrained(theta);
  EXPECT_LT((t.to_model(x) - theta).cwiseAbs().maxCoeff(), 1e-14);
  // d theta/dx: 1, theta, theta (1 - theta)
  EXPECT_NEAR(t.log_abs_det_jacobian(x), std::log(3.0) + std::log(0.2 * 0.8), 1e-12);
  EXPECT_EQ(transform_from_string(to_string(TransformKind::logit)), TransformKind::logit);
}
