#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

#include "sgdlab/errors.hpp"
#include "sgdlab/harness.hpp"

namespace sgdlab {
namespace {

FiniteSumProblem small_quadratic(std::size_t n = 6, bool interpolation = false) {
  QuadraticSuiteSpec spec;
  spec.n = n;
  spec.d = 4;
  spec.eig_min = 1.0;
  spec.eig_max = 4.0;
  spec.interpolation = interpolation;
  spec.seed = 5;
  return make_random_quadratic(spec);
}

ExperimentConfig config_for(EstimatorKind kind, std::size_t K, std::size_t trials,
                            FiniteSumProblem problem = small_quadratic()) {
  RunSettings run;
  run.K = K;
  run.trials = trials;
  run.base_seed = 17;
  return {std::move(problem), std::move(kind), run};
}

TEST(Experiment, ResolvesAutoSettings) {
  const Experiment e(config_for(LSVRG{1.0 / 6.0}, 100, 1));
  EXPECT_DOUBLE_EQ(e.M(), 4.0 * 6.0);
  EXPECT_DOUBLE_EQ(e.gamma(), 1.0 / (6.0 * e.constants().L_max));
  EXPECT_EQ(e.gamma(), e.max_stepsize());
  EXPECT_NEAR((e.x0() - e.constants().x_star).norm(), 1.0, 1e-15);
  EXPECT_EQ(e.record_every(), 1u);
  EXPECT_EQ(e.recorded_steps().size(), 101u);
}

TEST(Experiment, Errors) {
  auto cfg = config_for(FullGradient{}, 10, 1);
  cfg.run.gamma = 10.0;
  EXPECT_THROW(Experiment{cfg}, CertificateError);
  cfg.run.gamma.reset();
  cfg.run.trials = 0;
  EXPECT_THROW(Experiment{cfg}, ConfigError);
  cfg.run.trials = 1;
  cfg.run.x0 = Vector::Zero(3);
  EXPECT_THROW(Experiment{cfg}, ConfigError);
}

TEST(Experiment, RecordedStepsIncludeLastIteration) {
  auto cfg = config_for(UniformSGD{}, 25, 1);
  cfg.run.record_every = 10;
  const Experiment e(cfg);
  EXPECT_EQ(e.recorded_steps(), (std::vector<std::size_t>{0, 10, 20, 25}));
  const auto series = run_trajectory(e, 0);
  EXPECT_EQ(series.k, e.recorded_steps());
}

TEST(RunTrajectory, GradientDescentWithinClosedForm) {
  const Experiment e(config_for(FullGradient{}, 500, 1));
  ASSERT_DOUBLE_EQ(e.gamma(), 1.0 / e.constants().L);
  const auto s = run_trajectory(e, 0);
  const double q = 1 - e.gamma() * e.constants().mu;
  for (std::size_t r = 0; r < s.k.size(); ++r) {
    const double bound = std::pow(q, static_cast<double>(s.k[r])) * s.dist_sq[0];
    EXPECT_LE(s.dist_sq[r], bound * (1 + 1e-12) + 1e-30) << "k " << s.k[r];
  }
}

TEST(RunTrajectory, SGDStarStaysAtOptimum) {
  auto cfg = config_for(SGDStar{}, 200, 1);
  cfg.run.radius = 0.0;
  const Experiment e(cfg);
  const auto s = run_trajectory(e, 0);
  for (double v : s.dist_sq) EXPECT_EQ(v, 0.0);
}

TEST(RunTrajectory, ZeroIterations) {
  for (const EstimatorKind& kind : {EstimatorKind{UniformSGD{}}, EstimatorKind{LSVRG{0.5}}}) {
    const Experiment e(config_for(kind, 0, 1));
    const auto s = run_trajectory(e, 0);
    ASSERT_EQ(s.k.size(), 1u);
    EXPECT_EQ(s.k[0], 0u);
    EXPECT_NEAR(s.dist_sq[0], 1.0, 1e-15);
  }
}

TEST(RunTrajectory, NonFiniteIterateIsDiagnosed) {
  auto cfg = config_for(FullGradient{}, 5000, 1);
  cfg.run.radius = 1.7e308;
  const Experiment e(cfg);
  EXPECT_THROW(run_trajectory(e, 0), DiagnosticError);
}

TEST(RunMonteCarlo, SingleDeterministicTrialEqualsTrajectory) {
  const Experiment e(config_for(FullGradient{}, 50, 1));
  const auto s = run_trajectory(e, 0);
  const auto stats = run_monte_carlo(e, 1);
  EXPECT_EQ(stats.k, s.k);
  EXPECT_EQ(stats.mean_dist_sq, s.dist_sq);
  for (double v : stats.std_V) EXPECT_EQ(v, 0.0);
}

TEST(RunMonteCarlo, BoundColumnMatchesTheory) {
  const Experiment e(config_for(LSVRG{0.2}, 300, 4));
  const auto stats = run_monte_carlo(e, 1);
  for (std::size_t r = 0; r < stats.k.size(); ++r) {
    EXPECT_EQ(stats.bound_V[r], bound_at(e.curve(), stats.k[r]));
  }
}

TEST(RunMonteCarlo, LyapunovConsistency) {
  for (const EstimatorKind& kind :
       {EstimatorKind{LSVRG{0.2}}, EstimatorKind{DIANA{CompressorSpec::rand_k(1, 4), 0.25}}}) {
    const Experiment e(config_for(kind, 300, 8));
    const auto stats = run_monte_carlo(e, 1);
    const double w = e.M() * e.gamma() * e.gamma();
    for (std::size_t r = 0; r < stats.k.size(); ++r) {
      const double expected = stats.mean_dist_sq[r] + w * stats.mean_sigma_sq[r];
      EXPECT_NEAR(stats.mean_V[r], expected, 1e-12 * expected);
      EXPECT_GE(stats.mean_dist_sq[r], 0.0);
      EXPECT_GE(stats.mean_sigma_sq[r], 0.0);
    }
  }
}

TEST(RunMonteCarlo, IndependentOfThreadCount) {
  const Experiment e(config_for(DIANA{CompressorSpec::bernoulli(0.5), 0.5}, 400, 13));
  const auto one = run_monte_carlo(e, 1);
  for (std::size_t threads : {2u, 3u, 8u}) {
    const auto many = run_monte_carlo(e, threads);
    EXPECT_EQ(one.mean_dist_sq, many.mean_dist_sq);
    EXPECT_EQ(one.mean_sigma_sq, many.mean_sigma_sq);
    EXPECT_EQ(one.mean_V, many.mean_V);
    EXPECT_EQ(one.std_V, many.std_V);
  }
  const auto again = run_monte_carlo(e, 1);
  EXPECT_EQ(one.mean_V, again.mean_V);
}

TEST(ThreadCount, FromEnvironment) {
  ::setenv("SGDLAB_THREADS", "3", 1);
  EXPECT_EQ(thread_count_from_env(), 3u);
  ::setenv("SGDLAB_THREADS", "0", 1);
  EXPECT_GE(thread_count_from_env(), 1u);
  ::setenv("SGDLAB_THREADS", "many", 1);
  EXPECT_THROW(thread_count_from_env(), ConfigError);
  ::unsetenv("SGDLAB_THREADS");
}

TEST(VerifyBound, DeterministicGradientDescentIsTight) {
  const Experiment e(config_for(FullGradient{}, 300, 1));
  const auto report = verify_bound(run_monte_carlo(e, 1), 1e-12, 0.0);
  EXPECT_TRUE(report.pass);
}

TEST(VerifyBound, SGDStarAtOptimum) {
  auto cfg = config_for(SGDStar{}, 100, 10);
  cfg.run.radius = 0.0;
  const auto stats = run_monte_carlo(Experiment(cfg), 1);
  for (double v : stats.mean_V) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(verify_bound(stats).pass);
}

TEST(VerifyBound, DetectsViolation) {
  TrajectoryStats stats;
  stats.k = {0, 1, 2};
  stats.mean_V = {1.0, 0.5, 0.5};
  stats.std_V = {0.0, 0.0, 0.0};
  stats.bound_V = {1.0, 0.5, 0.25};
  stats.mean_dist_sq = stats.mean_V;
  stats.mean_sigma_sq = {0, 0, 0};
  stats.trials = 1;
  const auto report = verify_bound(stats, 0.1, 4.0);
  EXPECT_FALSE(report.pass);
  EXPECT_EQ(report.first_violation, 2u);
  EXPECT_NEAR(report.excess[2], 0.5 - 0.275, 1e-15);
  EXPECT_TRUE(verify_bound(stats, 1.0, 4.0).pass);
}

TEST(VerifyBound, DianaRandKPassesAtDefaults) {
  const Experiment e(config_for(DIANA{CompressorSpec::rand_k(1, 4), 0.25}, 1500, 1000));
  EXPECT_TRUE(verify_bound(run_monte_carlo(e, thread_count_from_env())).pass);
}

TEST(VerifyAssumption, PassesForEveryKind) {
  for (const EstimatorKind& kind :
       {EstimatorKind{FullGradient{}}, EstimatorKind{UniformSGD{}}, EstimatorKind{NoisyGradient{0.2}},
        EstimatorKind{SGDStar{}}, EstimatorKind{LSVRG{0.25}}, EstimatorKind{CDGD{CompressorSpec::rand_k(2, 4)}},
        EstimatorKind{DIANA{CompressorSpec::bernoulli(0.5), 0.5}}, EstimatorKind{RCD{}}}) {
    const Experiment e(config_for(kind, 10, 1));
    const auto report = verify_assumption(e, 100, 500);
    EXPECT_TRUE(report.pass) << kind_name(kind);
    const bool sigma = e.estimator().has_sigma();
    EXPECT_EQ(report.checks.size(), sigma ? 200u : 100u) << kind_name(kind);
    for (const auto& c : report.checks) {
      EXPECT_EQ(c.exact, !std::holds_alternative<NoisyGradient>(kind));
      EXPECT_EQ(c.margin, c.rhs - c.lhs);
    }
  }
}

TEST(VerifyAssumption, HalvedConstantFailsOnFullGradient) {
  auto cfg = config_for(FullGradient{}, 10, 1);
  cfg.run.cert_A_scale = 0.5;
  const auto report = verify_assumption(Experiment(cfg), 100, 100);
  EXPECT_FALSE(report.pass);
}

TEST(VarianceReduction, ExactVersusNeighborhood) {
  const auto problem = small_quadratic(6);
  auto tail_ratio = [&](EstimatorKind kind, double& floor) {
    auto probe = config_for(kind, 1, 1, problem);
    const Experiment p(probe);
    const auto& cert = p.certificate();
    double rate = p.gamma() * p.constants().mu;
    if (cert.has_sigma) rate = std::min(rate, cert.rho / 2);
    auto cfg = config_for(kind, static_cast<std::size_t>(std::ceil(20.0 / rate)), 50, problem);
    const Experiment e(cfg);
    floor = e.curve().floor;
    const auto stats = run_monte_carlo(e, thread_count_from_env());
    return tail_plateau(stats).mean / stats.mean_dist_sq[0];
  };
  double floor = 0.0;
  EXPECT_LE(tail_ratio(LSVRG{1.0 / 6.0}, floor), 1e-8);
  EXPECT_LE(tail_ratio(DIANA{CompressorSpec::rand_k(1, 4), 0.25}, floor), 1e-8);
  EXPECT_LE(tail_ratio(SGDStar{}, floor), 1e-8);
  EXPECT_GE(tail_ratio(UniformSGD{}, floor), 0.1 * floor);
  EXPECT_GT(floor, 0.0);
  EXPECT_GE(tail_ratio(CDGD{CompressorSpec::rand_k(1, 4)}, floor), 0.1 * floor);
  EXPECT_GT(floor, 0.0);
}

TEST(TailPlateau, AveragesLastTenPercent) {
  TrajectoryStats stats;
  for (std::size_t k = 0; k < 20; ++k) {
    stats.k.push_back(k);
    stats.mean_dist_sq.push_back(k < 18 ? 100.0 : 2.0);
    stats.std_V.push_back(k < 18 ? 0.0 : 4.0);
  }
  stats.trials = 4;
  const auto t = tail_plateau(stats, 0.1);
  EXPECT_EQ(t.mean, 2.0);
  EXPECT_EQ(t.standard_error, 2.0);
}

}  // namespace
}  // namespace sgdlab
