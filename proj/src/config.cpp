#include "sgdlab/config.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <type_traits>
#include <variant>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "sgdlab/errors.hpp"

namespace sgdlab {
namespace {

const std::set<std::string> kProblemKeys = {"generator", "n",       "d",      "seed",  "eig_min",
                                            "eig_max",   "b_scale", "lambda", "family"};
const std::set<std::string> kEstimatorKeys = {"kind", "sigma", "p", "compressor", "k", "q", "alpha"};
const std::set<std::string> kRunKeys = {"gamma",        "M",           "K",           "trials",
                                        "seed",         "record_every", "radius",     "x0",
                                        "verify_points", "verify_samples", "cert_A_scale", "sweep_gammas"};
const std::set<std::string> kCertificateKeys = {"A",     "B",           "C",     "D1",    "D2",  "rho",
                                                "gamma", "M",           "V0",    "mu",    "L",   "L_max",
                                                "max_stepsize", "contraction", "floor", "sigma_star_sq"};
const std::set<std::string> kManifestKeys = {"version", "base_seed"};
const std::regex kComponentKey("(A|b|a|y)_([0-9]+)");

[[noreturn]] void field_error(const ConfigSection& s, const std::string& key, const std::string& what) {
  throw ConfigError("[" + s.name() + "] " + key + ": " + what);
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_number(const std::string& text) {
  const std::string t = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) return std::nullopt;
  return value;
}

std::optional<std::uint64_t> parse_unsigned(const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) return std::nullopt;
  return value;
}

double get_double(const ConfigSection& s, const std::string& key, double fallback) {
  const std::string* raw = s.find(key);
  if (!raw) return fallback;
  const auto v = parse_number(*raw);
  if (!v || !std::isfinite(*v)) field_error(s, key, "expected a finite number, got '" + *raw + "'");
  return *v;
}

std::uint64_t get_unsigned(const ConfigSection& s, const std::string& key, std::uint64_t fallback) {
  const std::string* raw = s.find(key);
  if (!raw) return fallback;
  const auto v = parse_unsigned(*raw);
  if (!v) field_error(s, key, "expected a non-negative integer, got '" + *raw + "'");
  return *v;
}

/// nullopt for "auto" or a missing key.
std::optional<double> get_auto(const ConfigSection& s, const std::string& key) {
  const std::string* raw = s.find(key);
  if (!raw || trim(*raw) == "auto") return std::nullopt;
  return get_double(s, key, 0.0);
}

std::string get_string(const ConfigSection& s, const std::string& key, const std::string& fallback) {
  const std::string* raw = s.find(key);
  return raw ? trim(*raw) : fallback;
}

Vector parse_vector(const ConfigSection& s, const std::string& key, const std::string& text,
                    std::size_t expected) {
  std::istringstream in(text);
  std::vector<double> values;
  std::string token;
  while (in >> token) {
    const auto v = parse_number(token);
    if (!v) field_error(s, key, "'" + token + "' is not a number");
    values.push_back(*v);
  }
  if (values.size() != expected) {
    field_error(s, key, "expected " + std::to_string(expected) + " values, got " + std::to_string(values.size()));
  }
  return Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

// Rows separated by ',', entries by whitespace.
Matrix parse_matrix(const ConfigSection& s, const std::string& key, const std::string& text, std::size_t d) {
  Matrix m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  std::istringstream in(text);
  std::string row;
  std::size_t r = 0;
  while (std::getline(in, row, ',')) {
    if (r >= d) field_error(s, key, "expected " + std::to_string(d) + " rows");
    m.row(static_cast<Eigen::Index>(r)) = parse_vector(s, key, row, d).transpose();
    ++r;
  }
  if (r != d) field_error(s, key, "expected " + std::to_string(d) + " rows, got " + std::to_string(r));
  return m;
}

const std::string& require(const ConfigSection& s, const std::string& key) {
  const std::string* raw = s.find(key);
  if (!raw) field_error(s, key, "missing");
  return *raw;
}

FiniteSumProblem build_problem(const ConfigSection& s) {
  const std::string generator = get_string(s, "generator", "random_quadratic");
  const auto n = static_cast<std::size_t>(get_unsigned(s, "n", 20));
  const auto d = static_cast<std::size_t>(get_unsigned(s, "d", 5));
  if (n == 0) field_error(s, "n", "must be at least 1");
  if (d == 0) field_error(s, "d", "must be at least 1");
  if (d > 1000) field_error(s, "d", "must be at most 1000");

  for (const auto& [key, value] : s.entries()) {
    if (std::regex_match(key, kComponentKey) && generator != "explicit") {
      field_error(s, key, "component data is only allowed with generator = explicit");
    }
  }

  try {
    if (generator == "random_quadratic" || generator == "interpolation_quadratic") {
      QuadraticSuiteSpec spec;
      spec.n = n;
      spec.d = d;
      spec.seed = get_unsigned(s, "seed", 1);
      spec.eig_min = get_double(s, "eig_min", 1.0);
      spec.eig_max = get_double(s, "eig_max", 10.0);
      spec.b_scale = get_double(s, "b_scale", 1.0);
      spec.interpolation = generator == "interpolation_quadratic";
      return make_random_quadratic(spec);
    }
    if (generator == "random_logistic") {
      LogisticSuiteSpec spec;
      spec.n = n;
      spec.d = d;
      spec.seed = get_unsigned(s, "seed", 1);
      spec.lambda = get_double(s, "lambda", 0.1);
      return make_random_logistic(spec);
    }
  } catch (const ArgumentError& e) {
    throw ConfigError("[problem] " + std::string(e.what()));
  }
  if (generator != "explicit") {
    field_error(s, "generator",
                "unknown generator '" + generator +
                    "' (expected random_quadratic, interpolation_quadratic, random_logistic, explicit)");
  }

  if (!s.contains("n")) field_error(s, "n", "missing");
  if (!s.contains("d")) field_error(s, "d", "missing");
  for (const auto& [key, value] : s.entries()) {
    std::smatch match;
    if (std::regex_match(key, match, kComponentKey) && std::stoull(match[2].str()) >= n) {
      field_error(s, key, "component index is not below n = " + std::to_string(n));
    }
  }
  const std::string family = get_string(s, "family", "quadratic");
  try {
    if (family == "quadratic") {
      std::vector<QuadraticComponent> comps(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::string a_key = "A_" + std::to_string(i);
        const std::string b_key = "b_" + std::to_string(i);
        comps[i].A = parse_matrix(s, a_key, require(s, a_key), d);
        comps[i].b = s.contains(b_key) ? parse_vector(s, b_key, *s.find(b_key), d)
                                       : Vector::Zero(static_cast<Eigen::Index>(d));
      }
      return FiniteSumProblem::quadratic(std::move(comps));
    }
    if (family == "logistic") {
      const double lambda = get_double(s, "lambda", 0.1);
      std::vector<LogisticComponent> comps(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::string a_key = "a_" + std::to_string(i);
        const std::string y_key = "y_" + std::to_string(i);
        comps[i].a = parse_vector(s, a_key, require(s, a_key), d);
        comps[i].y = get_double(s, y_key, 0.0);
        if (!s.contains(y_key)) field_error(s, y_key, "missing");
        comps[i].lambda = lambda;
      }
      return FiniteSumProblem::logistic(std::move(comps));
    }
  } catch (const ArgumentError& e) {
    throw ConfigError("[problem] " + std::string(e.what()));
  }
  field_error(s, "family", "unknown family '" + family + "' (expected quadratic or logistic)");
}

CompressorSpec build_compressor(const ConfigSection& s, std::size_t d) {
  const std::string name = get_string(s, "compressor", "identity");
  try {
    if (name == "identity") return CompressorSpec::identity();
    if (name == "randk") return CompressorSpec::rand_k(static_cast<std::size_t>(get_unsigned(s, "k", 1)), d);
    if (name == "bernoulli") return CompressorSpec::bernoulli(get_double(s, "q", 0.5));
  } catch (const ConfigError& e) {
    field_error(s, "compressor", e.what());
  }
  field_error(s, "compressor", "unknown compressor '" + name + "' (expected identity, randk, bernoulli)");
}

EstimatorKind build_estimator(const ConfigSection& s, const FiniteSumProblem& problem) {
  const std::string kind = get_string(s, "kind", "");
  if (kind.empty()) field_error(s, "kind", "missing");
  if (kind == "full_gradient") return FullGradient{};
  if (kind == "uniform_sgd") return UniformSGD{};
  if (kind == "sgd_star") return SGDStar{};
  if (kind == "rcd") return RCD{};
  if (kind == "noisy_gradient") {
    const double sigma = get_double(s, "sigma", 1.0);
    if (sigma < 0.0) field_error(s, "sigma", "must be >= 0");
    return NoisyGradient{sigma};
  }
  if (kind == "lsvrg") {
    const double p = get_auto(s, "p").value_or(1.0 / static_cast<double>(problem.n()));
    if (!(p > 0.0 && p <= 1.0)) field_error(s, "p", "must lie in (0, 1]");
    return LSVRG{p};
  }
  if (kind == "cdgd") return CDGD{build_compressor(s, problem.d())};
  if (kind == "diana") {
    const CompressorSpec c = build_compressor(s, problem.d());
    const double max_alpha = 1.0 / (1.0 + c.omega());
    const double alpha = get_auto(s, "alpha").value_or(max_alpha);
    if (!(alpha > 0.0 && alpha <= max_alpha)) {
      field_error(s, "alpha", "must lie in (0, 1/(1+omega)] = (0, " + format_double(max_alpha) + "]");
    }
    return DIANA{c, alpha};
  }
  field_error(s, "kind", "unknown estimator '" + kind + "'");
}

RunSettings build_run(const ConfigSection& s, std::size_t d) {
  RunSettings run;
  run.gamma = get_auto(s, "gamma");
  if (run.gamma && !(*run.gamma > 0.0)) field_error(s, "gamma", "must be positive");
  run.M = get_auto(s, "M");
  if (run.M && *run.M < 0.0) field_error(s, "M", "must be non-negative");
  run.K = static_cast<std::size_t>(get_unsigned(s, "K", 1000));
  run.trials = static_cast<std::size_t>(get_unsigned(s, "trials", 100));
  if (run.trials == 0) field_error(s, "trials", "must be at least 1");
  run.base_seed = get_unsigned(s, "seed", 1);
  const std::string stride = get_string(s, "record_every", "auto");
  run.record_every = stride == "auto" ? 0 : static_cast<std::size_t>(get_unsigned(s, "record_every", 0));
  if (stride != "auto" && run.record_every == 0) field_error(s, "record_every", "must be at least 1");
  run.radius = get_double(s, "radius", 1.0);
  if (run.radius < 0.0) field_error(s, "radius", "must be >= 0");
  if (const std::string* raw = s.find("x0")) run.x0 = parse_vector(s, "x0", *raw, d);
  run.cert_A_scale = get_double(s, "cert_A_scale", 1.0);
  if (!(run.cert_A_scale > 0.0)) field_error(s, "cert_A_scale", "must be positive");
  return run;
}

void check_keys(const ConfigSection& s, const std::set<std::string>& allowed, bool components) {
  for (const auto& [key, value] : s.entries()) {
    if (allowed.count(key)) continue;
    if (components && std::regex_match(key, kComponentKey)) continue;
    field_error(s, key, "unknown key");
  }
}

}  // namespace

const std::string* ConfigSection::find(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return &v;
  return nullptr;
}

void ConfigSection::set(const std::string& key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(key, std::move(value));
}

LabConfig parse_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }
  LabConfig config;
  for (const auto& [name, section] : tree) {
    if (section.empty() && !section.data().empty()) {
      throw ConfigError("key '" + name + "' outside of a section");
    }
    ConfigSection* target = nullptr;
    ConfigSection ignored(name);
    if (name == "problem") {
      target = &config.problem;
    } else if (name == "estimator") {
      target = &config.estimator;
    } else if (name == "run") {
      target = &config.run;
    } else if (name == "certificate" || name == "manifest") {
      target = &ignored;
    } else {
      throw ConfigError("unknown section [" + name + "]");
    }
    for (const auto& [key, value] : section) target->set(key, trim(value.data()));
    if (name == "certificate") check_keys(ignored, kCertificateKeys, false);
    if (name == "manifest") check_keys(ignored, kManifestKeys, false);
  }
  check_keys(config.problem, kProblemKeys, true);
  check_keys(config.estimator, kEstimatorKeys, false);
  check_keys(config.run, kRunKeys, false);
  return config;
}

LabConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

ExperimentConfig build_experiment_config(const LabConfig& config) {
  FiniteSumProblem problem = build_problem(config.problem);
  EstimatorKind kind = build_estimator(config.estimator, problem);
  RunSettings run = build_run(config.run, problem.d());
  return ExperimentConfig{std::move(problem), std::move(kind), std::move(run)};
}

VerifySettings verify_settings(const LabConfig& config) {
  VerifySettings v;
  v.points = static_cast<std::size_t>(get_unsigned(config.run, "verify_points", 100));
  v.samples = static_cast<std::size_t>(get_unsigned(config.run, "verify_samples", 2000));
  if (v.points == 0) field_error(config.run, "verify_points", "must be at least 1");
  if (v.samples < 2) field_error(config.run, "verify_samples", "must be at least 2");
  return v;
}

std::vector<std::string> sweep_grid(const LabConfig& config) {
  std::vector<std::string> out;
  const std::string* raw = config.run.find("sweep_gammas");
  if (!raw) return out;
  std::istringstream in(*raw);
  std::string token;
  while (std::getline(in, token, ',')) {
    token = trim(token);
    if (!token.empty()) out.push_back(token);
  }
  return out;
}

double resolve_grid_gamma(const std::string& token, double max_stepsize) {
  const std::string t = trim(token);
  if (t == "max") return max_stepsize;
  if (t.rfind("max/", 0) == 0 || t.rfind("max*", 0) == 0) {
    const auto factor = parse_number(t.substr(4));
    if (!factor || !(*factor > 0.0)) throw ConfigError("invalid stepsize grid entry '" + t + "'");
    return t[3] == '/' ? max_stepsize / *factor : max_stepsize * *factor;
  }
  const auto value = parse_number(t);
  if (!value || !(*value > 0.0)) throw ConfigError("invalid stepsize grid entry '" + t + "'");
  return *value;
}

std::string format_double(double value) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value,
                                       std::chars_format::general, 17);
  return std::string(buf.data(), ptr);
}

std::string format_stats_csv(const TrajectoryStats& stats) {
  std::string out = "k,mean_dist_sq,mean_sigma_sq,mean_V,std_V,bound_V\n";
  for (std::size_t j = 0; j < stats.k.size(); ++j) {
    out += std::to_string(stats.k[j]);
    for (double v : {stats.mean_dist_sq[j], stats.mean_sigma_sq[j], stats.mean_V[j], stats.std_V[j],
                     stats.bound_V[j]}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

std::string format_manifest(const LabConfig& config, const Experiment& experiment) {
  LabConfig resolved = config;
  std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, LSVRG>) resolved.estimator.set("p", format_double(k.p));
        if constexpr (std::is_same_v<T, DIANA>) resolved.estimator.set("alpha", format_double(k.alpha));
      },
      experiment.estimator().kind());
  const RunSettings& run = experiment.settings();
  resolved.run.set("gamma", format_double(experiment.gamma()));
  resolved.run.set("M", format_double(experiment.M()));
  resolved.run.set("K", std::to_string(run.K));
  resolved.run.set("trials", std::to_string(run.trials));
  resolved.run.set("seed", std::to_string(run.base_seed));
  resolved.run.set("record_every", std::to_string(experiment.record_every()));

  std::ostringstream out;
  for (const ConfigSection* s : {&resolved.problem, &resolved.estimator, &resolved.run}) {
    out << '[' << s->name() << "]\n";
    for (const auto& [key, value] : s->entries()) out << key << " = " << value << '\n';
    out << '\n';
  }
  const Certificate& cert = experiment.certificate();
  const ProblemConstants& c = experiment.constants();
  const BoundCurve& curve = experiment.curve();
  out << "[certificate]\n";
  const std::pair<const char*, double> rows[] = {
      {"A", cert.A},
      {"B", cert.B},
      {"C", cert.C},
      {"D1", cert.D1},
      {"D2", cert.D2},
      {"rho", cert.rho},
      {"gamma", experiment.gamma()},
      {"M", experiment.M()},
      {"contraction", curve.contraction},
      {"floor", curve.floor},
      {"V0", curve.V0},
      {"max_stepsize", experiment.max_stepsize()},
      {"mu", c.mu},
      {"L", c.L},
      {"L_max", c.L_max},
      {"sigma_star_sq", c.sigma_star_sq},
  };
  for (const auto& [key, value] : rows) out << key << " = " << format_double(value) << '\n';
  out << "\n[manifest]\n";
  out << "version = " << kToolVersion << '\n';
  out << "base_seed = " << run.base_seed << '\n';
  return out.str();
}

}  // namespace sgdlab
