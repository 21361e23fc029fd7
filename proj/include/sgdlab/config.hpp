#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sgdlab/harness.hpp"

namespace sgdlab {

/// Ordered key/value pairs of one config section.
class ConfigSection {
 public:
  explicit ConfigSection(std::string name = {}) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  const std::string* find(const std::string& key) const;
  bool contains(const std::string& key) const { return find(key) != nullptr; }
  /// Replaces an existing value or appends a new key.
  void set(const std::string& key, std::string value);

 private:
  std::string name_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Experiment configuration: [problem], [estimator] and [run] sections.
/// Manifests additionally carry [certificate] and [manifest] sections, which
/// are echoed output and ignored on input.
struct LabConfig {
  ConfigSection problem{"problem"};
  ConfigSection estimator{"estimator"};
  ConfigSection run{"run"};
};

/// Parses and validates the document; unknown sections or keys are errors.
/// Throws ConfigError with a field-level message.
LabConfig parse_config(std::istream& in);
LabConfig load_config(const std::string& path);

/// Builds the problem, estimator kind and run settings.
ExperimentConfig build_experiment_config(const LabConfig& config);

struct VerifySettings {
  std::size_t points = 100;
  std::size_t samples = 2000;
};
VerifySettings verify_settings(const LabConfig& config);

/// Raw stepsize grid entries from [run] sweep_gammas ("0.01, max/2, max").
std::vector<std::string> sweep_grid(const LabConfig& config);
/// Resolves one grid entry: a number, "max", "max/N" or "max*F".
double resolve_grid_gamma(const std::string& token, double max_stepsize);

/// Decimal with 17 significant digits, locale independent.
std::string format_double(double value);

/// Header k,mean_dist_sq,mean_sigma_sq,mean_V,std_V,bound_V; LF line endings.
std::string format_stats_csv(const TrajectoryStats& stats);

inline constexpr const char* kToolVersion = "sgdlab 1.0.0";

/// Resolved config (auto fields materialized) plus the certificate and bound
/// parameters. Loading the manifest as a config reproduces the run.
std::string format_manifest(const LabConfig& config, const Experiment& experiment);

}  // namespace sgdlab
