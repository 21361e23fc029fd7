#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "sgdlab/compressor.hpp"
#include "sgdlab/problem.hpp"
#include "sgdlab/random.hpp"

namespace sgdlab {

// Estimator kinds. Each produces an unbiased estimate g of grad f(x).

/// g = grad f(x).
struct FullGradient {};
/// g = grad f_i(x), i uniform on [n].
struct UniformSGD {};
/// g = grad f(x) + sigma z, z standard Gaussian in R^d.
struct NoisyGradient {
  double sigma = 0.0;
};
/// g = grad f_i(x) - grad f_i(x*), i uniform on [n].
struct SGDStar {};
/// Loopless SVRG: g = grad f_i(x) - grad f_i(w) + grad f(w); w <- x with probability p.
struct LSVRG {
  double p = 1.0;
};
/// g = (1/n) sum_i Q(grad f_i(x)), one independent compression per worker.
struct CDGD {
  CompressorSpec compressor = CompressorSpec::identity();
};
/// Compressed differences against learned shifts h_i, updated with stepsize alpha.
struct DIANA {
  CompressorSpec compressor = CompressorSpec::identity();
  double alpha = 1.0;
};
/// g = d * (grad f(x))_j e_j, j uniform on [d].
struct RCD {};

using EstimatorKind = std::variant<FullGradient, UniformSGD, NoisyGradient, SGDStar, LSVRG, CDGD, DIANA, RCD>;

/// Lower-case identifier used in configuration files ("lsvrg", "diana", ...).
std::string kind_name(const EstimatorKind& kind);

/// Constants (A, B, C, D1, D2, rho) of the parametric second-moment assumption:
///   E|g|^2          <= 2A (f(x) - f*) + B sigma_k^2 + D1
///   E sigma_{k+1}^2 <= (1 - rho) sigma_k^2 + 2C (f(x) - f*) + D2
struct Certificate {
  double A = 0.0;
  double B = 0.0;
  double C = 0.0;
  double D1 = 0.0;
  double D2 = 0.0;
  double rho = 1.0;
  /// False when the tracked sequence sigma_k^2 is identically zero.
  bool has_sigma = false;

  /// Throws ConfigError unless all constants are finite and non-negative,
  /// rho is in (0, 1], and B = C = D2 = 0 whenever has_sigma is false.
  void validate() const;
};

// Presets for the sigma-free special cases.

/// Smooth f with stochastic gradients of total variance at most sigma_sq.
Certificate bounded_variance_certificate(double L, double sigma_sq);
/// Expected smoothness with constant calL and variance at the optimum sigma_star_sq.
Certificate expected_smoothness_certificate(double calL, double sigma_star_sq);
/// Components with a shared minimizer, each L-smooth.
Certificate interpolation_certificate(double L);
/// Relaxed weak growth condition E|grad f_i(x)|^2 = 2 rho_growth L (f(x) - f*) + sigma_sq.
/// rho_growth is the growth parameter, not the rate rho of the assumption.
Certificate weak_growth_certificate(double rho_growth, double L, double sigma_sq);
/// Relaxed strong growth implies weak growth for L-smooth f; same mapping.
Certificate strong_growth_certificate(double rho_growth, double L, double sigma_sq);

/// Mutable per-trajectory state.
struct EstimatorState {
  /// LSVRG reference point and the cached full gradient there.
  Vector w;
  Vector full_grad_w;
  /// DIANA shifts, one per worker.
  std::vector<Vector> h;
  double sigma_sq = 0.0;
};

/// Exact conditional expectations at (x, state), by enumeration of the
/// outcome space or by independence of per-worker compressions.
struct ConditionalExpectation {
  Vector mean;
  /// E|g|^2.
  double second_moment = 0.0;
  /// E sigma_{k+1}^2.
  double next_sigma_sq = 0.0;
};

class Estimator {
 public:
  /// Validates kind parameters against the problem. The problem and constants
  /// must outlive the estimator.
  Estimator(EstimatorKind kind, const FiniteSumProblem& problem, const ProblemConstants& constants);

  const EstimatorKind& kind() const { return kind_; }
  const FiniteSumProblem& problem() const { return *problem_; }
  const ProblemConstants& constants() const { return *constants_; }
  bool has_sigma() const;

  EstimatorState init_state(const Vector& x0) const;

  /// Draws g at x and advances the state in place.
  /// LSVRG draws the component index first, then the refresh coin.
  /// DIANA and CDGD compress workers in index order from the same stream.
  Vector sample(EstimatorState& state, const Vector& x, RandomStream& rng) const;

  Certificate certificate() const;

  /// sigma_k^2 recomputed from scratch from the state payload.
  double tracked_sigma_sq(const EstimatorState& state) const;

  /// Exact conditional moments, or nullopt when the outcome space cannot be enumerated.
  std::optional<ConditionalExpectation> exact_expectation(const EstimatorState& state,
                                                          const Vector& x) const;

 private:
  double sigma_from_shifts(const std::vector<Vector>& shifts) const;
  double sigma_from_reference(const Vector& w) const;

  EstimatorKind kind_;
  const FiniteSumProblem* problem_;
  const ProblemConstants* constants_;
  std::vector<Vector> grads_at_optimum_;
};

}  // namespace sgdlab
