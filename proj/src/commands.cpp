#include "sgdlab/commands.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "sgdlab/config.hpp"
#include "sgdlab/errors.hpp"
#include "sgdlab/harness.hpp"

namespace sgdlab {
namespace {

LabConfig load_with_overrides(const CommandOptions& options) {
  if (options.config_path.empty()) throw ConfigError("--config is required");
  LabConfig config = load_config(options.config_path);
  if (options.seed) config.run.set("seed", std::to_string(*options.seed));
  if (options.trials) config.run.set("trials", std::to_string(*options.trials));
  return config;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << content;
  if (!f) throw ConfigError("failed writing '" + path.string() + "'");
}

std::filesystem::path prepare_out_dir(const std::string& dir) {
  std::filesystem::path path(dir);
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
  return path;
}

// Maps library exceptions to exit codes.
template <class Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const CertificateError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ProblemError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFail;
  }
}

const char* verdict(bool pass) { return pass ? "PASS" : "FAIL"; }

// Compressor property checks on the component gradients at x0.
bool check_compressor(const CompressorSpec& spec, const Experiment& experiment, std::size_t samples,
                      std::ostream& out) {
  bool all = true;
  const std::size_t vectors = std::min<std::size_t>(experiment.problem().n(), 5);
  const std::size_t d = experiment.problem().d();
  RandomStream rng = RandomStream::derive(experiment.settings().base_seed, 0xC0FFEE0000000000ULL);
  for (std::size_t i = 0; i < vectors; ++i) {
    const Vector x = experiment.problem().eval_grad_i(i, experiment.x0());
    const double bound = spec.omega() * x.squaredNorm();
    const double scale = std::max(1.0, x.norm());
    if (enumerable(spec, d)) {
      const auto m = exact_moments(spec, x);
      const double bias = (m.mean - x).norm();
      const bool unbiased = bias <= 1e-12 * scale;
      const bool variance = m.mse <= bound * (1.0 + 1e-12) + 1e-300;
      out << verdict(unbiased) << " compressor.unbiased vector=" << i << " exact=1 bias=" << format_double(bias)
          << '\n';
      out << verdict(variance) << " compressor.variance vector=" << i << " exact=1 mse=" << format_double(m.mse)
          << " bound=" << format_double(bound) << " margin=" << format_double(bound - m.mse) << '\n';
      all = all && unbiased && variance;
      continue;
    }
    Vector sum = Vector::Zero(x.size());
    Vector sum2 = Vector::Zero(x.size());
    double err_sum = 0.0, err_sum2 = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
      const Vector q = compress(spec, x, rng);
      sum += q;
      sum2 += q.cwiseProduct(q);
      const double e = (q - x).squaredNorm();
      err_sum += e;
      err_sum2 += e * e;
    }
    const double S = static_cast<double>(samples);
    bool unbiased = true;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double mean = sum(j) / S;
      const double se = std::sqrt(std::max(0.0, (sum2(j) - S * mean * mean) / (S - 1.0)) / S);
      const double z = se > 0.0 ? std::abs(mean - x(j)) / se : (mean == x(j) ? 0.0 : INFINITY);
      worst = std::max(worst, z);
      unbiased = unbiased && z <= 4.0;
    }
    const double mse = err_sum / S;
    const double mse_se = std::sqrt(std::max(0.0, (err_sum2 - S * mse * mse) / (S - 1.0)) / S);
    const bool variance = mse <= bound + 4.0 * mse_se;
    out << verdict(unbiased) << " compressor.unbiased vector=" << i << " exact=0 worst_z=" << format_double(worst)
        << '\n';
    out << verdict(variance) << " compressor.variance vector=" << i << " exact=0 mse=" << format_double(mse)
        << " bound=" << format_double(bound) << " se=" << format_double(mse_se) << '\n';
    all = all && unbiased && variance;
  }
  return all;
}

const CompressorSpec* compressor_of(const EstimatorKind& kind) {
  if (const auto* c = std::get_if<CDGD>(&kind)) return &c->compressor;
  if (const auto* c = std::get_if<DIANA>(&kind)) return &c->compressor;
  return nullptr;
}

}  // namespace

int cmd_run(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const LabConfig config = load_with_overrides(options);
    const Experiment experiment(build_experiment_config(config));
    const auto dir = prepare_out_dir(options.out_dir);
    const TrajectoryStats stats = run_monte_carlo(experiment, thread_count_from_env());
    write_file(dir / "trajectory.csv", format_stats_csv(stats));
    write_file(dir / "manifest", format_manifest(config, experiment));
    if (!options.quiet) {
      out << "wrote " << (dir / "trajectory.csv").string() << " (" << stats.k.size() << " rows, "
          << stats.trials << " trials, gamma=" << format_double(experiment.gamma()) << ")\n";
    }
    return static_cast<int>(kExitOk);
  });
}

int cmd_verify(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const LabConfig config = load_with_overrides(options);
    const VerifySettings vs = verify_settings(config);
    const Experiment experiment(build_experiment_config(config));
    bool all = true;

    const AssumptionReport assumption = verify_assumption(experiment, vs.points, vs.samples);
    std::size_t failed = 0;
    for (const auto& c : assumption.checks) {
      if (!c.pass) ++failed;
      if (options.quiet && c.pass) continue;
      out << verdict(c.pass) << " assumption." << c.relation << " point=" << c.point << " exact=" << c.exact
          << " lhs=" << format_double(c.lhs) << " rhs=" << format_double(c.rhs)
          << " margin=" << format_double(c.margin) << " se=" << format_double(c.standard_error) << '\n';
    }
    out << verdict(assumption.pass) << " assumption estimator=" << kind_name(experiment.estimator().kind())
        << " checks=" << assumption.checks.size() << " failed=" << failed << '\n';
    all = all && assumption.pass;

    if (const CompressorSpec* spec = compressor_of(experiment.estimator().kind())) {
      all = check_compressor(*spec, experiment, vs.samples, out) && all;
    }

    const TrajectoryStats stats = run_monte_carlo(experiment, thread_count_from_env());
    const BoundReport bound = verify_bound(stats);
    double worst = -INFINITY;
    for (double e : bound.excess) worst = std::max(worst, e);
    out << verdict(bound.pass) << " bound trials=" << stats.trials << " K=" << experiment.settings().K
        << " gamma=" << format_double(experiment.gamma()) << " worst_excess=" << format_double(worst);
    if (!bound.pass) out << " first_violation_k=" << stats.k[bound.first_violation];
    out << '\n';
    all = all && bound.pass;

    out << verdict(all) << " verify\n";
    return static_cast<int>(all ? kExitOk : kExitFail);
  });
}

int cmd_sweep(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const LabConfig config = load_with_overrides(options);
    const Experiment base(build_experiment_config(config));
    std::vector<std::string> grid = options.gammas.empty() ? sweep_grid(config) : options.gammas;
    if (grid.empty()) throw ConfigError("[run] sweep_gammas: empty stepsize grid");
    const auto dir = prepare_out_dir(options.out_dir);
    const std::size_t threads = thread_count_from_env();

    std::string csv = "gamma,tail_mean_dist_sq,tail_se,floor,status\n";
    for (const auto& token : grid) {
      const double gamma = resolve_grid_gamma(token, base.max_stepsize());
      if (gamma > base.max_stepsize() * (1.0 + 1e-12)) {
        csv += format_double(gamma) + ",,,,rejected: exceeds max_stepsize " + format_double(base.max_stepsize()) +
               "\n";
        if (!options.quiet) err << "warning: gamma " << format_double(gamma) << " exceeds max_stepsize\n";
        continue;
      }
      const Experiment e = base.with_gamma(gamma);
      const TailEstimate tail = tail_plateau(run_monte_carlo(e, threads));
      csv += format_double(gamma) + ',' + format_double(tail.mean) + ',' + format_double(tail.standard_error) +
             ',' + format_double(e.curve().floor) + ",ok\n";
    }
    write_file(dir / "sweep.csv", csv);
    if (!options.quiet) out << "wrote " << (dir / "sweep.csv").string() << " (" << grid.size() << " rows)\n";
    return static_cast<int>(kExitOk);
  });
}

std::string list_text() {
  std::ostringstream o;
  o << kToolVersion << "\n\n";
  o << "estimators (kind: certificate A, B, C, D1, D2, rho; parameters)\n";
  o << "  full_gradient   A=L, B=0, C=0, D1=0, D2=0, rho=1\n";
  o << "  uniform_sgd     A=2*L_max, B=0, C=0, D1=2*sigma_star_sq, D2=0, rho=1\n";
  o << "  noisy_gradient  A=L, B=0, C=0, D1=d*sigma^2, D2=0, rho=1; sigma\n";
  o << "  sgd_star        A=L_max, B=0, C=0, D1=0, D2=0, rho=1\n";
  o << "  lsvrg           A=2*L_max, B=2, C=p*L_max, D1=0, D2=0, rho=p; p (auto = 1/n)\n";
  o << "  cdgd            A=L+2*omega*L_max/n, B=0, C=0, D1=2*omega*zeta_star_sq/n, D2=0, rho=1; compressor\n";
  o << "  diana           A=2*L+2*omega*L_max/n, B=2+2*omega/n, C=alpha*L_max, D1=0, D2=0, rho=alpha;"
       " compressor, alpha (auto = 1/(1+omega))\n";
  o << "  rcd             A=d*L, B=0, C=0, D1=0, D2=0, rho=1\n";
  o << "\ncertificate presets (sigma-free)\n";
  o << "  bounded_variance     A=L, D1=sigma^2\n";
  o << "  expected_smoothness  A=2*calL, D1=2*sigma_star_sq\n";
  o << "  interpolation        A=L\n";
  o << "  weak_growth          A=rho_growth*L, D1=sigma^2\n";
  o << "  strong_growth        A=rho_growth*L, D1=sigma^2\n";
  o << "\ncompressors\n";
  o << "  identity   omega=0\n";
  o << "  randk      omega=d/k-1; k\n";
  o << "  bernoulli  omega=1/q-1; q\n";
  o << "\nproblem generators\n";
  o << "  random_quadratic         n, d, seed, eig_min, eig_max, b_scale\n";
  o << "  interpolation_quadratic  n, d, seed, eig_min, eig_max\n";
  o << "  random_logistic          n, d, seed, lambda\n";
  o << "  explicit                 family (quadratic|logistic), n, d, A_i, b_i | a_i, y_i, lambda\n";
  o << "\nbound\n";
  o << "  E[V_k] <= (1 - min{gamma*mu, rho - B/M})^k V_0 + (D1 + M*D2)*gamma^2 / min{gamma*mu, rho - B/M}\n";
  o << "  V_k = |x_k - x*|^2 + M*gamma^2*sigma_k^2, gamma <= min{1/mu, 1/(A + C*M)}, default M = 2*B/rho\n";
  return o.str();
}

int cmd_list(std::ostream& out) {
  out << list_text();
  return kExitOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stochastic gradient method laboratory with convergence certificates", "sgdlab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  CommandOptions options;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::string gammas;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", options.config_path, "Experiment configuration file")->required();
    sub->add_option("--out", options.out_dir, "Output directory");
    sub->add_option("--seed", seed, "Override the base seed");
    sub->add_option("--trials", trials, "Override the trial count R");
    sub->add_flag("--quiet", options.quiet, "Suppress progress output");
  };
  CLI::App* run = app.add_subcommand("run", "Run a Monte-Carlo experiment and write trajectory.csv");
  CLI::App* verify = app.add_subcommand("verify", "Check the certificate, compressor and bound");
  CLI::App* sweep = app.add_subcommand("sweep", "Tail plateau over a stepsize grid");
  CLI::App* list = app.add_subcommand("list", "List estimators, compressors and generators");
  add_common(run);
  add_common(verify);
  add_common(sweep);
  sweep->add_option("--gammas", gammas, "Comma-separated stepsizes (number, max, max/N, max*F)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  options.seed = seed;
  options.trials = trials;
  if (!gammas.empty()) {
    std::istringstream in(gammas);
    std::string token;
    while (std::getline(in, token, ',')) {
      if (!token.empty()) options.gammas.push_back(token);
    }
  }

  if (list->parsed()) return cmd_list(out);
  if (run->parsed()) return cmd_run(options, out, err);
  if (verify->parsed()) return cmd_verify(options, out, err);
  return cmd_sweep(options, out, err);
}

}  // namespace sgdlab
