#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "sgdlab/errors.hpp"
#include "sgdlab/estimator.hpp"

namespace sgdlab {
namespace {

Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

Vector random_vector(RandomStream& rng, std::size_t d, double scale) {
  Vector v(static_cast<Eigen::Index>(d));
  for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = scale * rng.normal();
  return v;
}

struct Fixture {
  FiniteSumProblem problem;
  ProblemConstants constants;

  Fixture() : problem(make()), constants(compute_constants(problem)) {}

  static FiniteSumProblem make() {
    QuadraticSuiteSpec spec;
    spec.n = 6;
    spec.d = 4;
    spec.eig_min = 1.0;
    spec.eig_max = 4.0;
    spec.seed = 5;
    return make_random_quadratic(spec);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

std::vector<EstimatorKind> all_kinds() {
  return {FullGradient{},
          UniformSGD{},
          NoisyGradient{0.3},
          SGDStar{},
          LSVRG{1.0 / 6.0},
          CDGD{CompressorSpec::rand_k(2, 4)},
          DIANA{CompressorSpec::rand_k(1, 4), 0.25},
          RCD{}};
}

// Random (x, state): state from a random start advanced by a few samples at random points.
struct RandomState {
  Vector x;
  EstimatorState state;
};

RandomState random_state(const Estimator& est, RandomStream& rng) {
  const std::size_t d = est.problem().d();
  const Vector& xs = est.constants().x_star;
  EstimatorState state = est.init_state(xs + random_vector(rng, d, 1.0));
  const auto warmup = rng.uniform_index(6);
  for (std::uint64_t s = 0; s < warmup; ++s) est.sample(state, xs + random_vector(rng, d, 1.0), rng);
  return {xs + random_vector(rng, d, std::pow(10.0, 2.0 * rng.uniform01() - 1.0)), state};
}

// E|g|^2 and E sigma_{k+1}^2 from direct enumeration of the outcome space, or
// closed form, without the library's exact_expectation.
struct OracleMoments {
  double second_moment;
  double next_sigma_sq;
};

std::optional<OracleMoments> oracle_moments(const Estimator& est, const EstimatorState& state, const Vector& x) {
  const auto& p = est.problem();
  const auto& c = est.constants();
  const double n = static_cast<double>(p.n());
  const Vector full = p.eval_full_grad(x);
  if (std::holds_alternative<FullGradient>(est.kind())) return OracleMoments{full.squaredNorm(), 0.0};
  if (const auto* k = std::get_if<NoisyGradient>(&est.kind())) {
    return OracleMoments{full.squaredNorm() + static_cast<double>(p.d()) * k->sigma * k->sigma, 0.0};
  }
  if (std::holds_alternative<RCD>(est.kind())) {
    // Each coordinate w.p. 1/d with value d * grad_j: E|g|^2 = d |grad f|^2.
    return OracleMoments{static_cast<double>(p.d()) * full.squaredNorm(), 0.0};
  }
  double m2 = 0.0;
  double sigma_at_x = 0.0;
  for (std::size_t i = 0; i < p.n(); ++i) {
    const Vector gi = p.eval_grad_i(i, x);
    const Vector gi_star = p.eval_grad_i(i, c.x_star);
    sigma_at_x += (gi - gi_star).squaredNorm() / n;
    if (std::holds_alternative<UniformSGD>(est.kind())) {
      m2 += gi.squaredNorm() / n;
    } else if (std::holds_alternative<SGDStar>(est.kind())) {
      m2 += (gi - gi_star).squaredNorm() / n;
    } else if (std::holds_alternative<LSVRG>(est.kind())) {
      m2 += (gi - p.eval_grad_i(i, state.w) + p.eval_full_grad(state.w)).squaredNorm() / n;
    } else {
      return std::nullopt;
    }
  }
  double next = 0.0;
  if (const auto* k = std::get_if<LSVRG>(&est.kind())) {
    double sigma_w = 0.0;
    for (std::size_t i = 0; i < p.n(); ++i) {
      sigma_w += (p.eval_grad_i(i, state.w) - p.eval_grad_i(i, c.x_star)).squaredNorm() / n;
    }
    next = (1.0 - k->p) * sigma_w + k->p * sigma_at_x;
  }
  return OracleMoments{m2, next};
}

class EstimatorKinds : public ::testing::TestWithParam<EstimatorKind> {};

std::string kind_label(const ::testing::TestParamInfo<EstimatorKind>& info) { return kind_name(info.param); }

TEST_P(EstimatorKinds, StatisticallyUnbiased) {
  const auto& f = fixture();
  const Estimator est(GetParam(), f.problem, f.constants);
  RandomStream rng(2024);
  const std::size_t draws = 100000;
  for (int point = 0; point < 20; ++point) {
    auto rs = random_state(est, rng);
    const Vector grad = f.problem.eval_full_grad(rs.x);
    Vector s1 = Vector::Zero(grad.size());
    Vector s2 = Vector::Zero(grad.size());
    for (std::size_t t = 0; t < draws; ++t) {
      EstimatorState state = rs.state;
      const Vector g = est.sample(state, rs.x, rng);
      s1 += g;
      s2 += g.cwiseProduct(g);
    }
    const double r = static_cast<double>(draws);
    for (Eigen::Index j = 0; j < grad.size(); ++j) {
      const double mean = s1(j) / r;
      const double var = std::max(0.0, (s2(j) - r * mean * mean) / (r - 1));
      // Summation round-off grows with the number of draws.
      const double roundoff = r * std::numeric_limits<double>::epsilon() * std::max(1.0, grad.norm());
      const double allowed = 4.0 * std::sqrt(var / r) + roundoff;
      EXPECT_LE(std::fabs(mean - grad(j)), allowed) << "point " << point << " coord " << j;
    }
  }
}

TEST_P(EstimatorKinds, ExactExpectationMatchesOracle) {
  const auto& f = fixture();
  const Estimator est(GetParam(), f.problem, f.constants);
  RandomStream rng(77);
  for (int point = 0; point < 20; ++point) {
    auto rs = random_state(est, rng);
    const auto exact = est.exact_expectation(rs.state, rs.x);
    if (!exact) {
      EXPECT_TRUE(std::holds_alternative<NoisyGradient>(est.kind()));
      continue;
    }
    const Vector grad = f.problem.eval_full_grad(rs.x);
    EXPECT_LE((exact->mean - grad).norm(), 1e-12 * std::max(1.0, grad.norm()));
    if (const auto oracle = oracle_moments(est, rs.state, rs.x)) {
      EXPECT_NEAR(exact->second_moment, oracle->second_moment, 1e-12 * std::max(1.0, oracle->second_moment));
      EXPECT_NEAR(exact->next_sigma_sq, oracle->next_sigma_sq, 1e-12 * std::max(1.0, oracle->next_sigma_sq));
    }
  }
}

TEST_P(EstimatorKinds, ExactExpectationMatchesSampling) {
  const auto& f = fixture();
  const Estimator est(GetParam(), f.problem, f.constants);
  RandomStream rng(78);
  const std::size_t draws = 100000;
  for (int point = 0; point < 3; ++point) {
    auto rs = random_state(est, rng);
    const auto exact = est.exact_expectation(rs.state, rs.x);
    if (!exact) continue;
    double m1 = 0.0, m2 = 0.0, s1 = 0.0, s2 = 0.0;
    for (std::size_t t = 0; t < draws; ++t) {
      EstimatorState state = rs.state;
      const double g2 = est.sample(state, rs.x, rng).squaredNorm();
      m1 += g2;
      m2 += g2 * g2;
      s1 += state.sigma_sq;
      s2 += state.sigma_sq * state.sigma_sq;
    }
    const double r = static_cast<double>(draws);
    auto se = [r](double a, double b) { return std::sqrt(std::max(0.0, (b / r - (a / r) * (a / r)) / (r - 1))); };
    EXPECT_NEAR(m1 / r, exact->second_moment, 4.0 * se(m1, m2) + 1e-10 * exact->second_moment);
    EXPECT_NEAR(s1 / r, exact->next_sigma_sq, 4.0 * se(s1, s2) + 1e-10 * std::max(1.0, exact->next_sigma_sq));
  }
}

TEST_P(EstimatorKinds, CertificateHoldsAtRandomStates) {
  const auto& f = fixture();
  const Estimator est(GetParam(), f.problem, f.constants);
  const Certificate cert = est.certificate();
  EXPECT_NO_THROW(cert.validate());
  EXPECT_EQ(cert.has_sigma, est.has_sigma());
  RandomStream rng(314);
  for (int point = 0; point < 100; ++point) {
    auto rs = random_state(est, rng);
    const double gap = f.problem.eval_f(rs.x) - f.constants.f_star;
    const auto oracle = oracle_moments(est, rs.state, rs.x);
    const auto exact = est.exact_expectation(rs.state, rs.x);
    ASSERT_TRUE(oracle || exact);
    const double second = oracle ? oracle->second_moment : exact->second_moment;
    const double next = oracle ? oracle->next_sigma_sq : exact->next_sigma_sq;
    const double rhs1 = 2 * cert.A * gap + cert.B * rs.state.sigma_sq + cert.D1;
    EXPECT_GE(rhs1 - second, -1e-10 * rhs1) << "point " << point;
    if (cert.has_sigma) {
      const double rhs2 = (1 - cert.rho) * rs.state.sigma_sq + 2 * cert.C * gap + cert.D2;
      EXPECT_GE(rhs2 - next, -1e-10 * rhs2) << "point " << point;
    }
  }
}

TEST_P(EstimatorKinds, SigmaTrackerConsistentAfterSampling) {
  const auto& f = fixture();
  const Estimator est(GetParam(), f.problem, f.constants);
  RandomStream rng(55);
  EstimatorState state = est.init_state(f.constants.x_star + Vector::Ones(4));
  for (int t = 0; t < 200; ++t) {
    est.sample(state, f.constants.x_star + random_vector(rng, 4, 1.0), rng);
    const double fresh = est.tracked_sigma_sq(state);
    EXPECT_NEAR(state.sigma_sq, fresh, 1e-12 * std::max(1e-300, fresh));
    if (!est.has_sigma()) {
      EXPECT_EQ(state.sigma_sq, 0.0);
    }
  }
}

TEST_P(EstimatorKinds, DeterministicGivenSeed) {
  const auto& f = fixture();
  const Estimator est(GetParam(), f.problem, f.constants);
  EstimatorState a = est.init_state(Vector::Ones(4));
  EstimatorState b = est.init_state(Vector::Ones(4));
  RandomStream ra(6);
  RandomStream rb(6);
  for (int t = 0; t < 50; ++t) {
    const Vector x = Vector::Constant(4, 0.1 * t);
    EXPECT_EQ(est.sample(a, x, ra), est.sample(b, x, rb));
  }
  EXPECT_EQ(a.sigma_sq, b.sigma_sq);
}

INSTANTIATE_TEST_SUITE_P(All, EstimatorKinds, ::testing::ValuesIn(all_kinds()), kind_label);

TEST(InitState, Examples) {
  const auto& f = fixture();
  const Estimator lsvrg(LSVRG{0.5}, f.problem, f.constants);
  EXPECT_EQ(lsvrg.init_state(f.constants.x_star).sigma_sq, 0.0);
  EXPECT_EQ(lsvrg.init_state(f.constants.x_star).w, f.constants.x_star);

  const Estimator diana(DIANA{CompressorSpec::identity(), 1.0}, f.problem, f.constants);
  const auto ds = diana.init_state(Vector::Ones(4));
  ASSERT_EQ(ds.h.size(), f.problem.n());
  for (const auto& h : ds.h) EXPECT_EQ(h, Vector::Zero(4));
  EXPECT_NEAR(ds.sigma_sq, f.constants.sigma_star_sq, 1e-14 * f.constants.sigma_star_sq);

  const Estimator gd(FullGradient{}, f.problem, f.constants);
  EXPECT_EQ(gd.init_state(Vector::Ones(4)).sigma_sq, 0.0);
}

TEST(Sample, SGDStarAtOptimumIsZero) {
  const auto& f = fixture();
  const Estimator est(SGDStar{}, f.problem, f.constants);
  EstimatorState state = est.init_state(f.constants.x_star);
  RandomStream rng(1);
  for (int t = 0; t < 200; ++t) EXPECT_EQ(est.sample(state, f.constants.x_star, rng), Vector::Zero(4));
}

TEST(Sample, LSVRGAtReferencePointIsFullGradient) {
  const auto& f = fixture();
  const Estimator est(LSVRG{0.1}, f.problem, f.constants);
  const Vector x = vec({0.3, -1.2, 2.0, 0.5});
  RandomStream rng(2);
  for (int t = 0; t < 100; ++t) {
    EstimatorState state = est.init_state(x);
    EXPECT_LE((est.sample(state, x, rng) - f.problem.eval_full_grad(x)).norm(), 1e-14);
  }
}

TEST(Sample, DianaIdentityFullStep) {
  const auto& f = fixture();
  const Estimator est(DIANA{CompressorSpec::identity(), 1.0}, f.problem, f.constants);
  const Vector x = vec({1.0, 0.5, -0.5, 2.0});
  EstimatorState state = est.init_state(Vector::Zero(4));
  RandomStream rng(3);
  const Vector g = est.sample(state, x, rng);
  EXPECT_LE((g - f.problem.eval_full_grad(x)).norm(), 1e-14);
  for (std::size_t i = 0; i < f.problem.n(); ++i) {
    EXPECT_LE((state.h[i] - f.problem.eval_grad_i(i, x)).norm(), 1e-14);
  }
}

TEST(Sample, RCDOutcomes) {
  const auto p = FiniteSumProblem::quadratic({{Matrix::Identity(2, 2), Vector::Zero(2)}});
  const auto c = compute_constants(p);
  const Estimator est(RCD{}, p, c);
  EstimatorState state = est.init_state(Vector::Zero(2));
  RandomStream rng(4);
  std::set<std::pair<double, double>> seen;
  for (int t = 0; t < 100; ++t) {
    const Vector g = est.sample(state, vec({1, 3}), rng);
    seen.insert({g(0), g(1)});
  }
  EXPECT_EQ(seen, (std::set<std::pair<double, double>>{{2, 0}, {0, 6}}));
  const auto exact = est.exact_expectation(state, vec({1, 3}));
  ASSERT_TRUE(exact);
  EXPECT_EQ(exact->mean, vec({1, 3}));
}

TEST(CertificateValues, PerKind) {
  const auto& f = fixture();
  const auto& c = f.constants;
  const double n = static_cast<double>(f.problem.n());
  const double d = static_cast<double>(f.problem.d());

  const auto gd = Estimator(FullGradient{}, f.problem, c).certificate();
  EXPECT_EQ(gd.A, c.L);
  EXPECT_EQ(gd.B + gd.C + gd.D1 + gd.D2, 0.0);
  EXPECT_EQ(gd.rho, 1.0);
  EXPECT_FALSE(gd.has_sigma);

  const auto sgd = Estimator(UniformSGD{}, f.problem, c).certificate();
  EXPECT_EQ(sgd.A, 2 * c.L_max);
  EXPECT_EQ(sgd.D1, 2 * c.sigma_star_sq);

  const auto noisy = Estimator(NoisyGradient{0.3}, f.problem, c).certificate();
  EXPECT_EQ(noisy.A, c.L);
  EXPECT_DOUBLE_EQ(noisy.D1, d * 0.09);

  const auto star = Estimator(SGDStar{}, f.problem, c).certificate();
  EXPECT_EQ(star.A, c.L_max);
  EXPECT_EQ(star.D1, 0.0);

  const double p = 0.2;
  const auto lsvrg = Estimator(LSVRG{p}, f.problem, c).certificate();
  EXPECT_EQ(lsvrg.A, 2 * c.L_max);
  EXPECT_EQ(lsvrg.B, 2.0);
  EXPECT_DOUBLE_EQ(lsvrg.C, p * c.L_max);
  EXPECT_EQ(lsvrg.D1 + lsvrg.D2, 0.0);
  EXPECT_EQ(lsvrg.rho, p);
  EXPECT_TRUE(lsvrg.has_sigma);

  const auto q = CompressorSpec::rand_k(1, 4);
  const double w = q.omega();
  const auto cdgd = Estimator(CDGD{q}, f.problem, c).certificate();
  EXPECT_DOUBLE_EQ(cdgd.A, c.L + 2 * w * c.L_max / n);
  EXPECT_DOUBLE_EQ(cdgd.D1, 2 * w * c.zeta_star_sq / n);
  EXPECT_EQ(cdgd.B + cdgd.C + cdgd.D2, 0.0);

  const auto diana = Estimator(DIANA{q, 0.2}, f.problem, c).certificate();
  EXPECT_DOUBLE_EQ(diana.A, 2 * c.L + 2 * w * c.L_max / n);
  EXPECT_DOUBLE_EQ(diana.B, 2 + 2 * w / n);
  EXPECT_DOUBLE_EQ(diana.C, 0.2 * c.L_max);
  EXPECT_EQ(diana.rho, 0.2);
  EXPECT_EQ(diana.D1 + diana.D2, 0.0);

  const auto rcd = Estimator(RCD{}, f.problem, c).certificate();
  EXPECT_DOUBLE_EQ(rcd.A, d * c.L);
  EXPECT_EQ(rcd.D1, 0.0);
}

TEST(CertificateValues, Presets) {
  const auto bv = bounded_variance_certificate(3.0, 0.5);
  EXPECT_EQ(bv.A, 3.0);
  EXPECT_EQ(bv.D1, 0.5);
  const auto es = expected_smoothness_certificate(4.0, 0.25);
  EXPECT_EQ(es.A, 8.0);
  EXPECT_EQ(es.D1, 0.5);
  const auto ip = interpolation_certificate(2.0);
  EXPECT_EQ(ip.A, 2.0);
  EXPECT_EQ(ip.D1, 0.0);
  const auto wg = weak_growth_certificate(3.0, 2.0, 0.1);
  EXPECT_EQ(wg.A, 6.0);
  EXPECT_EQ(wg.D1, 0.1);
  const auto sg = strong_growth_certificate(3.0, 2.0, 0.0);
  EXPECT_EQ(sg.A, 6.0);
  for (const auto& c : {bv, es, ip, wg, sg}) {
    EXPECT_FALSE(c.has_sigma);
    EXPECT_NO_THROW(c.validate());
  }
}

TEST(CertificateValues, ValidateRejects) {
  EXPECT_THROW((Certificate{.A = -1.0}).validate(), ConfigError);
  EXPECT_THROW((Certificate{.A = 1.0, .rho = 0.0, .has_sigma = true}).validate(), ConfigError);
  EXPECT_THROW((Certificate{.A = 1.0, .B = 1.0}).validate(), ConfigError);
  EXPECT_THROW((Certificate{.A = std::nan("")}).validate(), ConfigError);
}

TEST(EstimatorParameters, Rejected) {
  const auto& f = fixture();
  EXPECT_THROW(Estimator(LSVRG{0.0}, f.problem, f.constants), ConfigError);
  EXPECT_THROW(Estimator(LSVRG{1.5}, f.problem, f.constants), ConfigError);
  EXPECT_THROW(Estimator(DIANA{CompressorSpec::rand_k(1, 4), 0.5}, f.problem, f.constants), ConfigError);
  EXPECT_THROW(Estimator(DIANA{CompressorSpec::rand_k(1, 4), 0.0}, f.problem, f.constants), ConfigError);
  EXPECT_THROW(Estimator(CDGD{CompressorSpec::rand_k(1, 3)}, f.problem, f.constants), ConfigError);
  EXPECT_THROW(Estimator(NoisyGradient{-1.0}, f.problem, f.constants), ConfigError);
}

}  // namespace
}  // namespace sgdlab
