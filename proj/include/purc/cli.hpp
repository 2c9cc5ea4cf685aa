#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace purc {

inline constexpr int kExitSuccess = 0;
inline constexpr int kExitInputError = 1;
inline constexpr int kExitNotConverged = 2;

/// Environment variable holding the log level (quiet, info or debug).
inline constexpr const char* kLogEnvironmentVariable = "PURC_LOG";

struct CliOptions {
  std::string command;
  std::filesystem::path scenario;
  std::optional<std::filesystem::path> output_dir;
  std::optional<int> threads;

  std::optional<double> activity_tolerance;
  std::optional<double> boundary_tolerance;
  std::optional<double> feasibility_tolerance;
  std::optional<double> stationarity_tolerance;
  std::optional<int> max_iterations;
  std::optional<double> equilibrium_tolerance;
  std::optional<int> equilibrium_max_iterations;

  /// kappa or t0
  std::optional<std::string> parameter;
  std::vector<std::string> shifts;
  std::optional<double> cv;
  std::optional<double> level;
  /// Entries "link=value" for the jvp cost direction.
  std::vector<std::string> direction;
  /// Jacobian used by substitution: purc (static costs) or equilibrium.
  std::string source = "purc";
  /// Explicit output file for single-table commands.
  std::optional<std::filesystem::path> out;
  /// Overrides the environment log level when set.
  std::optional<std::string> log_level;
};

struct ReportBundle {
  int exit_code = kExitSuccess;
  std::vector<std::filesystem::path> files;
  std::vector<std::string> log;
  std::string error;
};

inline const std::vector<std::string>& cli_commands() {
  static const std::vector<std::string> commands{
      "solve",       "equilibrium", "jacobian",     "jvp",     "eq-jacobian",
      "estimate",    "uncertainty", "substitution", "validate"};
  return commands;
}

/// Runs one subcommand. A human-readable summary goes to `summary`; reports
/// go to the output directory. Never throws for input or numerical problems;
/// those are reported through the exit code.
ReportBundle run(const CliOptions& options, std::ostream& summary);

}  // namespace purc
