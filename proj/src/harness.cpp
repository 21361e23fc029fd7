#include "sgdlab/harness.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <string>
#include <thread>

#include "sgdlab/errors.hpp"
#include "sgdlab/random.hpp"

namespace sgdlab {
namespace {

constexpr std::uint64_t kDirectionSeed = 0x5EEDD1CE;
// Stream family tag for verifier points, disjoint from trial indices.
constexpr std::uint64_t kVerifyStreamTag = 0xF00D000000000000ULL;
constexpr std::size_t kMaxWarmupSteps = 20;

Vector unit_direction(std::size_t d) {
  RandomStream rng(kDirectionSeed);
  Vector u(static_cast<Eigen::Index>(d));
  for (Eigen::Index j = 0; j < u.size(); ++j) u(j) = rng.normal();
  return u / u.norm();
}

}  // namespace

Experiment::Experiment(const ExperimentConfig& config) {
  problem_ = std::make_shared<const FiniteSumProblem>(config.problem);
  constants_ = std::make_shared<const ProblemConstants>(compute_constants(*problem_));
  estimator_ = std::make_shared<const Estimator>(config.estimator, *problem_, *constants_);
  settings_ = config.run;
  resolve();
}

Experiment Experiment::with_gamma(double gamma) const {
  Experiment out;
  out.problem_ = problem_;
  out.constants_ = constants_;
  out.estimator_ = estimator_;
  out.settings_ = settings_;
  out.settings_.gamma = gamma;
  out.resolve();
  return out;
}

void Experiment::resolve() {
  const RunSettings& s = settings_;
  if (s.trials == 0) throw ConfigError("trial count R must be at least 1");
  if (!(s.radius >= 0.0) || !std::isfinite(s.radius)) throw ConfigError("radius must be finite and >= 0");
  if (!(s.cert_A_scale > 0.0)) throw ConfigError("cert_A_scale must be positive");

  certificate_ = estimator_->certificate();
  certificate_.A *= s.cert_A_scale;
  M_ = s.M ? *s.M : default_M(certificate_);
  max_stepsize_ = sgdlab::max_stepsize(certificate_, constants_->mu, M_);
  gamma_ = s.gamma ? *s.gamma : max_stepsize_;

  if (s.x0) {
    if (static_cast<std::size_t>(s.x0->size()) != problem_->d()) {
      throw ConfigError("x0 has dimension " + std::to_string(s.x0->size()) + ", expected " +
                        std::to_string(problem_->d()));
    }
    x0_ = *s.x0;
  } else {
    x0_ = constants_->x_star + s.radius * unit_direction(problem_->d());
  }
  const EstimatorState init = estimator_->init_state(x0_);
  const double V0 = (x0_ - constants_->x_star).squaredNorm() + M_ * gamma_ * gamma_ * init.sigma_sq;
  curve_ = bound_curve(certificate_, constants_->mu, gamma_, M_, V0);
  record_every_ = s.record_every > 0 ? s.record_every : std::max<std::size_t>(1, s.K / 1000);
}

std::vector<std::size_t> Experiment::recorded_steps() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k <= settings_.K; k += record_every_) out.push_back(k);
  if (out.back() != settings_.K) out.push_back(settings_.K);
  return out;
}

TrajectorySeries run_trajectory(const Experiment& experiment, std::size_t trial_index) {
  const Estimator& est = experiment.estimator();
  const Vector& x_star = experiment.constants().x_star;
  const double gamma = experiment.gamma();
  const std::size_t K = experiment.settings().K;
  const std::size_t stride = experiment.record_every();

  RandomStream rng = RandomStream::derive(experiment.settings().base_seed, trial_index);
  Vector x = experiment.x0();
  EstimatorState state = est.init_state(x);

  TrajectorySeries series;
  const std::size_t records = K / stride + 2;
  series.k.reserve(records);
  series.dist_sq.reserve(records);
  series.sigma_sq.reserve(records);
  auto record = [&](std::size_t k) {
    series.k.push_back(k);
    series.dist_sq.push_back((x - x_star).squaredNorm());
    series.sigma_sq.push_back(state.sigma_sq);
  };

  record(0);
  for (std::size_t k = 0; k < K; ++k) {
    x -= gamma * est.sample(state, x, rng);
    if (!x.allFinite()) {
      throw DiagnosticError("non-finite iterate at iteration " + std::to_string(k + 1) + " of trial " +
                            std::to_string(trial_index));
    }
    const std::size_t step = k + 1;
    if (step % stride == 0 || step == K) record(step);
  }
  return series;
}

std::size_t thread_count_from_env() {
  std::size_t requested = 0;
  if (const char* env = std::getenv("SGDLAB_THREADS")) {
    try {
      requested = static_cast<std::size_t>(std::stoull(env));
    } catch (const std::exception&) {
      throw ConfigError(std::string("SGDLAB_THREADS is not a non-negative integer: ") + env);
    }
  }
  if (requested == 0) requested = std::max(1u, std::thread::hardware_concurrency());
  return requested;
}

TrajectoryStats run_monte_carlo(const Experiment& experiment, std::size_t threads) {
  const std::size_t R = experiment.settings().trials;
  std::vector<TrajectorySeries> per_trial(R);
  std::vector<std::exception_ptr> failures(R);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next.fetch_add(1); t < R; t = next.fetch_add(1)) {
      try {
        per_trial[t] = run_trajectory(experiment, t);
      } catch (...) {
        failures[t] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, R));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t t = 0; t < R; ++t) {
    if (!failures[t]) continue;
    try {
      std::rethrow_exception(failures[t]);
    } catch (const std::exception& e) {
      throw DiagnosticError("trial " + std::to_string(t) + " failed: " + e.what());
    }
  }

  const double weight = experiment.M() * experiment.gamma() * experiment.gamma();
  const std::size_t rows = per_trial.front().k.size();
  const double inv_r = 1.0 / static_cast<double>(R);

  TrajectoryStats stats;
  stats.trials = R;
  const ProblemConstants& c = experiment.constants();
  const double drift = 16.0 * std::numeric_limits<double>::epsilon() * (c.L_max / c.mu) *
                       std::max(1.0, c.x_star.norm());
  stats.roundoff_floor = drift * drift;
  stats.k = per_trial.front().k;
  stats.mean_dist_sq.resize(rows);
  stats.mean_sigma_sq.resize(rows);
  stats.mean_V.resize(rows);
  stats.std_V.resize(rows);
  stats.bound_V.resize(rows);
  for (std::size_t j = 0; j < rows; ++j) {
    double dist = 0.0;
    double sigma = 0.0;
    double v = 0.0;
    for (std::size_t t = 0; t < R; ++t) {
      dist += per_trial[t].dist_sq[j];
      sigma += per_trial[t].sigma_sq[j];
      v += per_trial[t].dist_sq[j] + weight * per_trial[t].sigma_sq[j];
    }
    const double mean_v = v * inv_r;
    double spread = 0.0;
    for (std::size_t t = 0; t < R; ++t) {
      const double dev = per_trial[t].dist_sq[j] + weight * per_trial[t].sigma_sq[j] - mean_v;
      spread += dev * dev;
    }
    stats.mean_dist_sq[j] = dist * inv_r;
    stats.mean_sigma_sq[j] = sigma * inv_r;
    stats.mean_V[j] = mean_v;
    stats.std_V[j] = R > 1 ? std::sqrt(spread / static_cast<double>(R - 1)) : 0.0;
    stats.bound_V[j] = bound_at(experiment.curve(), stats.k[j]);
  }
  return stats;
}

TailEstimate tail_plateau(const TrajectoryStats& stats, double fraction) {
  const std::size_t rows = stats.k.size();
  const auto window = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(rows))));
  const double root_r = std::sqrt(static_cast<double>(stats.trials));
  TailEstimate out;
  for (std::size_t j = rows - window; j < rows; ++j) {
    out.mean += stats.mean_dist_sq[j];
    out.standard_error += stats.std_V[j] / root_r;
  }
  out.mean /= static_cast<double>(window);
  out.standard_error /= static_cast<double>(window);
  return out;
}

AssumptionReport verify_assumption(const Experiment& experiment, std::size_t num_points,
                                   std::size_t samples_per_point) {
  if (num_points == 0) throw ConfigError("verify_assumption needs at least one point");
  if (samples_per_point < 2) throw ConfigError("verify_assumption needs at least two samples per point");

  const Estimator& est = experiment.estimator();
  const FiniteSumProblem& prob = experiment.problem();
  const ProblemConstants& c = experiment.constants();
  const Certificate& cert = experiment.certificate();
  const double radius = experiment.settings().radius > 0.0 ? experiment.settings().radius : 1.0;

  AssumptionReport report;
  auto add = [&](std::size_t point, const char* relation, double lhs, double rhs, double se, bool exact) {
    AssumptionCheck check{point, relation, lhs, rhs, rhs - lhs, se, exact, false};
    check.pass = exact ? check.margin >= -1e-10 * std::abs(rhs) : check.margin >= -4.0 * se;
    report.pass = report.pass && check.pass;
    report.checks.push_back(std::move(check));
  };

  for (std::size_t p = 0; p < num_points; ++p) {
    RandomStream rng = RandomStream::derive(experiment.settings().base_seed, kVerifyStreamTag + p);
    Vector x = experiment.x0();
    EstimatorState state = est.init_state(x);
    const std::size_t warmup = rng.uniform_index(kMaxWarmupSteps + 1);
    for (std::size_t k = 0; k < warmup; ++k) x -= experiment.gamma() * est.sample(state, x, rng);

    Vector direction(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) direction(j) = rng.normal();
    const double scale = radius * std::pow(10.0, -2.0 + 3.0 * rng.uniform01());
    x += scale * direction / direction.norm();

    const double gap = prob.eval_f(x) - c.f_star;
    const double rhs_moment = 2.0 * cert.A * gap + cert.B * state.sigma_sq + cert.D1;
    const double rhs_sigma = (1.0 - cert.rho) * state.sigma_sq + 2.0 * cert.C * gap + cert.D2;

    if (const auto exact = est.exact_expectation(state, x)) {
      add(p, "second_moment", exact->second_moment, rhs_moment, 0.0, true);
      if (cert.has_sigma) add(p, "sigma_recursion", exact->next_sigma_sq, rhs_sigma, 0.0, true);
      continue;
    }

    // Monte Carlo: sample mean and standard error of |g|^2 and sigma_{k+1}^2.
    double sum_m = 0.0, sum_m2 = 0.0, sum_s = 0.0, sum_s2 = 0.0;
    for (std::size_t s = 0; s < samples_per_point; ++s) {
      EstimatorState draw = state;
      const double m = est.sample(draw, x, rng).squaredNorm();
      sum_m += m;
      sum_m2 += m * m;
      sum_s += draw.sigma_sq;
      sum_s2 += draw.sigma_sq * draw.sigma_sq;
    }
    const double S = static_cast<double>(samples_per_point);
    auto standard_error = [S](double sum, double sum2) {
      const double mean = sum / S;
      return std::sqrt(std::max(0.0, (sum2 - S * mean * mean) / (S - 1.0)) / S);
    };
    add(p, "second_moment", sum_m / S, rhs_moment, standard_error(sum_m, sum_m2), false);
    if (cert.has_sigma) add(p, "sigma_recursion", sum_s / S, rhs_sigma, standard_error(sum_s, sum_s2), false);
  }
  return report;
}

BoundReport verify_bound(const TrajectoryStats& stats, double slack_rel, double slack_stat) {
  BoundReport report;
  const double root_r = std::sqrt(static_cast<double>(stats.trials));
  report.excess.resize(stats.k.size());
  for (std::size_t j = 0; j < stats.k.size(); ++j) {
    const double allowed = stats.bound_V[j] * (1.0 + slack_rel) + slack_stat * stats.std_V[j] / root_r +
                          stats.roundoff_floor;
    report.excess[j] = stats.mean_V[j] - allowed;
    if (report.excess[j] > 0.0 && report.pass) {
      report.pass = false;
      report.first_violation = j;
    }
  }
  return report;
}

}  // namespace sgdlab
