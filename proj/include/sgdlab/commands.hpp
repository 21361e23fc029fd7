#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sgdlab {

enum ExitCode : int { kExitOk = 0, kExitFail = 1, kExitConfig = 2 };

struct CommandOptions {
  std::string config_path;
  std::string out_dir = "sgdlab_out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  bool quiet = false;
  /// Stepsize grid for sweep; overrides [run] sweep_gammas when non-empty.
  std::vector<std::string> gammas;
};

/// Writes <out>/trajectory.csv and <out>/manifest.
int cmd_run(const CommandOptions& options, std::ostream& out, std::ostream& err);
/// Assumption, compressor and bound checks; one report line per check.
int cmd_verify(const CommandOptions& options, std::ostream& out, std::ostream& err);
/// Writes <out>/sweep.csv with one row per stepsize.
int cmd_sweep(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_list(std::ostream& out);

/// Text printed by `sgdlab list`.
std::string list_text();

/// Entry point shared by the executable and the tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sgdlab
