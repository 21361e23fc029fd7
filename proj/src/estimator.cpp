#include "sgdlab/estimator.hpp"

#include <cmath>
#include <string>

#include "sgdlab/errors.hpp"

namespace sgdlab {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

void check_compressor(const CompressorSpec& c, std::size_t d) {
  if (c.kind() == CompressorKind::RandK && c.d() != d) {
    throw ConfigError("rand-k compressor configured for d = " + std::to_string(c.d()) +
                      " but the problem has d = " + std::to_string(d));
  }
}

// Variance E|Q(v) - E Q(v)|^2 from exact moments.
double variance_of(const CompressorMoments& m, const Vector& v) {
  return std::max(0.0, m.mse - (m.mean - v).squaredNorm());
}

}  // namespace

std::string kind_name(const EstimatorKind& kind) {
  return std::visit(overloaded{
                        [](const FullGradient&) { return std::string("full_gradient"); },
                        [](const UniformSGD&) { return std::string("uniform_sgd"); },
                        [](const NoisyGradient&) { return std::string("noisy_gradient"); },
                        [](const SGDStar&) { return std::string("sgd_star"); },
                        [](const LSVRG&) { return std::string("lsvrg"); },
                        [](const CDGD&) { return std::string("cdgd"); },
                        [](const DIANA&) { return std::string("diana"); },
                        [](const RCD&) { return std::string("rcd"); },
                    },
                    kind);
}

void Certificate::validate() const {
  if (!finite_nonneg(A) || !finite_nonneg(B) || !finite_nonneg(C) || !finite_nonneg(D1) ||
      !finite_nonneg(D2)) {
    throw ConfigError("certificate constants must be finite and non-negative");
  }
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("certificate rho must lie in (0, 1]");
  if (!has_sigma && (B != 0.0 || C != 0.0 || D2 != 0.0)) {
    throw ConfigError("certificate without a sigma sequence must have B = C = D2 = 0");
  }
}

Certificate bounded_variance_certificate(double L, double sigma_sq) {
  return {.A = L, .D1 = sigma_sq};
}

Certificate expected_smoothness_certificate(double calL, double sigma_star_sq) {
  return {.A = 2.0 * calL, .D1 = 2.0 * sigma_star_sq};
}

Certificate interpolation_certificate(double L) { return {.A = L}; }

Certificate weak_growth_certificate(double rho_growth, double L, double sigma_sq) {
  return {.A = rho_growth * L, .D1 = sigma_sq};
}

Certificate strong_growth_certificate(double rho_growth, double L, double sigma_sq) {
  return weak_growth_certificate(rho_growth, L, sigma_sq);
}

Estimator::Estimator(EstimatorKind kind, const FiniteSumProblem& problem,
                     const ProblemConstants& constants)
    : kind_(std::move(kind)), problem_(&problem), constants_(&constants) {
  if (static_cast<std::size_t>(constants.x_star.size()) != problem.d()) {
    throw ArgumentError("constants do not belong to this problem");
  }
  std::visit(overloaded{
                 [](const NoisyGradient& k) {
                   if (!finite_nonneg(k.sigma)) throw ConfigError("noise sigma must be >= 0");
                 },
                 [](const LSVRG& k) {
                   if (!(k.p > 0.0 && k.p <= 1.0)) throw ConfigError("lsvrg p must lie in (0, 1]");
                 },
                 [&](const CDGD& k) { check_compressor(k.compressor, problem.d()); },
                 [&](const DIANA& k) {
                   check_compressor(k.compressor, problem.d());
                   const double max_alpha = 1.0 / (1.0 + k.compressor.omega());
                   if (!(k.alpha > 0.0 && k.alpha <= max_alpha)) {
                     throw ConfigError("diana alpha must lie in (0, 1/(1+omega)] = (0, " +
                                       std::to_string(max_alpha) + "]");
                   }
                 },
                 [](const auto&) {},
             },
             kind_);
  grads_at_optimum_.reserve(problem.n());
  for (std::size_t i = 0; i < problem.n(); ++i) {
    grads_at_optimum_.push_back(problem.eval_grad_i(i, constants.x_star));
  }
}

bool Estimator::has_sigma() const {
  return std::holds_alternative<LSVRG>(kind_) || std::holds_alternative<DIANA>(kind_);
}

double Estimator::sigma_from_reference(const Vector& w) const {
  double total = 0.0;
  for (std::size_t i = 0; i < problem_->n(); ++i) {
    total += (problem_->eval_grad_i(i, w) - grads_at_optimum_[i]).squaredNorm();
  }
  return total / static_cast<double>(problem_->n());
}

double Estimator::sigma_from_shifts(const std::vector<Vector>& shifts) const {
  double total = 0.0;
  for (std::size_t i = 0; i < problem_->n(); ++i) {
    total += (shifts[i] - grads_at_optimum_[i]).squaredNorm();
  }
  return total / static_cast<double>(problem_->n());
}

double Estimator::tracked_sigma_sq(const EstimatorState& state) const {
  if (std::holds_alternative<LSVRG>(kind_)) return sigma_from_reference(state.w);
  if (std::holds_alternative<DIANA>(kind_)) return sigma_from_shifts(state.h);
  return 0.0;
}

EstimatorState Estimator::init_state(const Vector& x0) const {
  if (static_cast<std::size_t>(x0.size()) != problem_->d()) {
    throw ArgumentError("initial point has the wrong dimension");
  }
  EstimatorState state;
  if (std::holds_alternative<LSVRG>(kind_)) {
    state.w = x0;
    state.full_grad_w = problem_->eval_full_grad(x0);
  } else if (std::holds_alternative<DIANA>(kind_)) {
    state.h.assign(problem_->n(), Vector::Zero(static_cast<Eigen::Index>(problem_->d())));
  }
  state.sigma_sq = tracked_sigma_sq(state);
  return state;
}

Vector Estimator::sample(EstimatorState& state, const Vector& x, RandomStream& rng) const {
  const FiniteSumProblem& prob = *problem_;
  const std::size_t n = prob.n();
  const double inv_n = 1.0 / static_cast<double>(n);
  return std::visit(
      overloaded{
          [&](const FullGradient&) -> Vector { return prob.eval_full_grad(x); },
          [&](const UniformSGD&) -> Vector { return prob.eval_grad_i(rng.uniform_index(n), x); },
          [&](const NoisyGradient& k) -> Vector {
            Vector g = prob.eval_full_grad(x);
            for (Eigen::Index j = 0; j < g.size(); ++j) g(j) += k.sigma * rng.normal();
            return g;
          },
          [&](const SGDStar&) -> Vector {
            const auto i = rng.uniform_index(n);
            return prob.eval_grad_i(i, x) - grads_at_optimum_[i];
          },
          [&](const LSVRG& k) -> Vector {
            const auto i = rng.uniform_index(n);
            Vector g = (prob.eval_grad_i(i, x) - prob.eval_grad_i(i, state.w)) + state.full_grad_w;
            if (rng.uniform01() < k.p) {
              state.w = x;
              state.full_grad_w = prob.eval_full_grad(x);
              state.sigma_sq = sigma_from_reference(state.w);
            }
            return g;
          },
          [&](const CDGD& k) -> Vector {
            Vector g = Vector::Zero(x.size());
            for (std::size_t i = 0; i < n; ++i) g += compress(k.compressor, prob.eval_grad_i(i, x), rng);
            return g * inv_n;
          },
          [&](const DIANA& k) -> Vector {
            Vector g = Vector::Zero(x.size());
            for (std::size_t i = 0; i < n; ++i) {
              const Vector delta = compress(k.compressor, prob.eval_grad_i(i, x) - state.h[i], rng);
              g += state.h[i] + delta;
              state.h[i] += k.alpha * delta;
            }
            state.sigma_sq = sigma_from_shifts(state.h);
            return g * inv_n;
          },
          [&](const RCD&) -> Vector {
            const Vector full = prob.eval_full_grad(x);
            const auto j = static_cast<Eigen::Index>(rng.uniform_index(prob.d()));
            Vector g = Vector::Zero(x.size());
            g(j) = static_cast<double>(prob.d()) * full(j);
            return g;
          },
      },
      kind_);
}

Certificate Estimator::certificate() const {
  const ProblemConstants& c = *constants_;
  const double n = static_cast<double>(problem_->n());
  const double d = static_cast<double>(problem_->d());
  return std::visit(
      overloaded{
          [&](const FullGradient&) { return Certificate{.A = c.L}; },
          [&](const UniformSGD&) { return expected_smoothness_certificate(c.L_max, c.sigma_star_sq); },
          // The Gaussian noise has total variance d * sigma^2 per draw.
          [&](const NoisyGradient& k) { return bounded_variance_certificate(c.L, d * k.sigma * k.sigma); },
          [&](const SGDStar&) { return Certificate{.A = c.L_max}; },
          [&](const LSVRG& k) {
            return Certificate{.A = 2.0 * c.L_max, .B = 2.0, .C = k.p * c.L_max, .rho = k.p, .has_sigma = true};
          },
          [&](const CDGD& k) {
            const double w = k.compressor.omega();
            return Certificate{.A = c.L + 2.0 * w * c.L_max / n, .D1 = 2.0 * w * c.zeta_star_sq / n};
          },
          [&](const DIANA& k) {
            const double w = k.compressor.omega();
            return Certificate{.A = 2.0 * c.L + 2.0 * w * c.L_max / n,
                               .B = 2.0 + 2.0 * w / n,
                               .C = k.alpha * c.L_max,
                               .rho = k.alpha,
                               .has_sigma = true};
          },
          [&](const RCD&) { return Certificate{.A = d * c.L}; },
      },
      kind_);
}

std::optional<ConditionalExpectation> Estimator::exact_expectation(const EstimatorState& state,
                                                                   const Vector& x) const {
  const FiniteSumProblem& prob = *problem_;
  const std::size_t n = prob.n();
  const double inv_n = 1.0 / static_cast<double>(n);

  // Uniform average over finitely many equiprobable outcomes.
  auto enumerate = [&](std::size_t count, auto&& outcome) {
    ConditionalExpectation out{Vector::Zero(x.size()), 0.0, 0.0};
    const double prob_each = 1.0 / static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
      const Vector g = outcome(i);
      out.mean += prob_each * g;
      out.second_moment += prob_each * g.squaredNorm();
    }
    return out;
  };

  return std::visit(
      overloaded{
          [&](const FullGradient&) -> std::optional<ConditionalExpectation> {
            const Vector g = prob.eval_full_grad(x);
            return ConditionalExpectation{g, g.squaredNorm(), 0.0};
          },
          [&](const UniformSGD&) -> std::optional<ConditionalExpectation> {
            return enumerate(n, [&](std::size_t i) { return prob.eval_grad_i(i, x); });
          },
          [&](const NoisyGradient&) -> std::optional<ConditionalExpectation> { return std::nullopt; },
          [&](const SGDStar&) -> std::optional<ConditionalExpectation> {
            return enumerate(n, [&](std::size_t i) { return Vector(prob.eval_grad_i(i, x) - grads_at_optimum_[i]); });
          },
          [&](const LSVRG& k) -> std::optional<ConditionalExpectation> {
            auto out = enumerate(n, [&](std::size_t i) {
              return Vector((prob.eval_grad_i(i, x) - prob.eval_grad_i(i, state.w)) + state.full_grad_w);
            });
            // Two branches of the refresh coin.
            out.next_sigma_sq = (1.0 - k.p) * state.sigma_sq + k.p * sigma_from_reference(x);
            return out;
          },
          [&](const CDGD& k) -> std::optional<ConditionalExpectation> {
            if (!enumerable(k.compressor, prob.d())) return std::nullopt;
            ConditionalExpectation out{Vector::Zero(x.size()), 0.0, 0.0};
            double variance = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
              const Vector v = prob.eval_grad_i(i, x);
              const auto m = exact_moments(k.compressor, v);
              out.mean += m.mean;
              variance += variance_of(m, v);
            }
            out.mean *= inv_n;
            // Independent workers: variances add.
            out.second_moment = out.mean.squaredNorm() + variance * inv_n * inv_n;
            return out;
          },
          [&](const DIANA& k) -> std::optional<ConditionalExpectation> {
            if (!enumerable(k.compressor, prob.d())) return std::nullopt;
            ConditionalExpectation out{Vector::Zero(x.size()), 0.0, 0.0};
            double variance = 0.0;
            double next_sigma = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
              const Vector v = prob.eval_grad_i(i, x) - state.h[i];
              const auto m = exact_moments(k.compressor, v);
              const double var_i = variance_of(m, v);
              out.mean += state.h[i] + m.mean;
              variance += var_i;
              next_sigma += (state.h[i] + k.alpha * m.mean - grads_at_optimum_[i]).squaredNorm() +
                            k.alpha * k.alpha * var_i;
            }
            out.mean *= inv_n;
            out.second_moment = out.mean.squaredNorm() + variance * inv_n * inv_n;
            out.next_sigma_sq = next_sigma * inv_n;
            return out;
          },
          [&](const RCD&) -> std::optional<ConditionalExpectation> {
            const Vector full = prob.eval_full_grad(x);
            const double dd = static_cast<double>(prob.d());
            return enumerate(prob.d(), [&](std::size_t j) {
              Vector g = Vector::Zero(x.size());
              g(static_cast<Eigen::Index>(j)) = dd * full(static_cast<Eigen::Index>(j));
              return g;
            });
          },
      },
      kind_);
}

}  // namespace sgdlab
