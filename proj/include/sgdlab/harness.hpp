#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sgdlab/estimator.hpp"
#include "sgdlab/problem.hpp"
#include "sgdlab/theory.hpp"

namespace sgdlab {

struct RunSettings {
  /// Stepsize; nullopt resolves to max_stepsize.
  std::optional<double> gamma;
  /// Lyapunov weight; nullopt resolves to default_M.
  std::optional<double> M;
  std::size_t K = 1000;
  std::size_t trials = 1;
  std::uint64_t base_seed = 1;
  /// Thinning stride; 0 resolves to max(1, K / 1000).
  std::size_t record_every = 0;
  /// Distance of the default starting point from x*.
  double radius = 1.0;
  /// Explicit starting point, overriding the radius rule.
  std::optional<Vector> x0;
  /// Multiplies the certificate's A. Only for mutation testing of the verifier.
  double cert_A_scale = 1.0;
};

struct ExperimentConfig {
  FiniteSumProblem problem;
  EstimatorKind estimator;
  RunSettings run;
};

/// Fully resolved experiment: problem constants, certificate, stepsize, M and bound curve.
class Experiment {
 public:
  /// Throws ConfigError on invalid settings and CertificateError when gamma
  /// exceeds the admissible stepsize.
  explicit Experiment(const ExperimentConfig& config);

  /// Same problem and estimator with a different stepsize.
  Experiment with_gamma(double gamma) const;

  const FiniteSumProblem& problem() const { return *problem_; }
  const ProblemConstants& constants() const { return *constants_; }
  const Estimator& estimator() const { return *estimator_; }
  const RunSettings& settings() const { return settings_; }
  const Certificate& certificate() const { return certificate_; }
  double gamma() const { return gamma_; }
  double M() const { return M_; }
  double max_stepsize() const { return max_stepsize_; }
  const BoundCurve& curve() const { return curve_; }
  const Vector& x0() const { return x0_; }
  std::size_t record_every() const { return record_every_; }

  /// Iterations recorded in every series: multiples of the stride, plus K.
  std::vector<std::size_t> recorded_steps() const;

 private:
  Experiment() = default;
  void resolve();

  std::shared_ptr<const FiniteSumProblem> problem_;
  std::shared_ptr<const ProblemConstants> constants_;
  std::shared_ptr<const Estimator> estimator_;
  RunSettings settings_;
  Certificate certificate_;
  double gamma_ = 0.0;
  double M_ = 0.0;
  double max_stepsize_ = 0.0;
  BoundCurve curve_;
  Vector x0_;
  std::size_t record_every_ = 1;
};

struct TrajectorySeries {
  std::vector<std::size_t> k;
  std::vector<double> dist_sq;
  std::vector<double> sigma_sq;
};

/// One SGD trajectory x^{k+1} = x^k - gamma g^k with the stream derived from
/// (base_seed, trial_index). Throws DiagnosticError on a non-finite iterate.
TrajectorySeries run_trajectory(const Experiment& experiment, std::size_t trial_index);

struct TrajectoryStats {
  std::vector<std::size_t> k;
  std::vector<double> mean_dist_sq;
  std::vector<double> mean_sigma_sq;
  std::vector<double> mean_V;
  std::vector<double> std_V;
  std::vector<double> bound_V;
  std::size_t trials = 0;
  /// Squared distance below which iterates are indistinguishable from x* in
  /// binary64: (16 eps kappa max(1, |x*|))^2 with kappa = L_max / mu.
  double roundoff_floor = 0.0;
};

/// Worker count from SGDLAB_THREADS (unset or 0 = hardware concurrency).
std::size_t thread_count_from_env();

/// R independent trajectories on up to `threads` workers, folded in trial order.
/// The result does not depend on the thread count.
TrajectoryStats run_monte_carlo(const Experiment& experiment, std::size_t threads = 1);

struct TailEstimate {
  /// Mean of mean_dist_sq over the last fraction of recorded iterations.
  double mean = 0.0;
  /// Mean of std_V / sqrt(R) over the same window.
  double standard_error = 0.0;
};

TailEstimate tail_plateau(const TrajectoryStats& stats, double fraction = 0.1);

struct AssumptionCheck {
  std::size_t point = 0;
  /// "second_moment" or "sigma_recursion".
  std::string relation;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  double standard_error = 0.0;
  bool exact = false;
  bool pass = false;
};

struct AssumptionReport {
  std::vector<AssumptionCheck> checks;
  bool pass = true;
};

/// Checks both inequalities of the certificate at num_points random states
/// (short warm-up runs plus random perturbations of the iterate). Exact
/// expectations are used when the outcome space enumerates; otherwise
/// samples_per_point draws with a 4 standard error allowance.
AssumptionReport verify_assumption(const Experiment& experiment, std::size_t num_points,
                                   std::size_t samples_per_point);

struct BoundReport {
  /// Per recorded iteration: mean_V - allowed.
  std::vector<double> excess;
  std::size_t first_violation = 0;
  bool pass = true;
};

/// PASS iff mean_V(k) <= bound_V(k) (1 + slack_rel) + slack_stat std_V(k) / sqrt(R) + roundoff_floor
/// for every recorded k.
BoundReport verify_bound(const TrajectoryStats& stats, double slack_rel = 0.1, double slack_stat = 4.0);

}  // namespace sgdlab
