#include <iostream>

#include <CLI11.hpp>

#include "purc/cli.hpp"

namespace {

void add_common(CLI::App* cmd, purc::CliOptions& o) {
  cmd->add_option("scenario", o.scenario, "Scenario JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("-o,--out-dir", o.output_dir, "Directory for reports (overrides the scenario)");
  cmd->add_option("--threads", o.threads, "Maximum worker threads for per-OD solves");
  cmd->add_option("--eps-act", o.activity_tolerance,
                  "Relative flow threshold for an active link (default 1e-9)");
  cmd->add_option("--tol-boundary", o.boundary_tolerance,
                  "Activation-boundary tolerance (default 1e-7)");
  cmd->add_option("--tol-feas", o.feasibility_tolerance,
                  "Flow conservation tolerance (default 1e-10)");
  cmd->add_option("--tol-stat", o.stationarity_tolerance,
                  "First-order condition tolerance (default 1e-8)");
  cmd->add_option("--max-iter", o.max_iterations, "Newton iteration limit (default 200)");
  cmd->add_option("--tol-eq", o.equilibrium_tolerance,
                  "Equilibrium fixed-point tolerance (default 1e-8)");
  cmd->add_option("--max-eq-iter", o.equilibrium_max_iterations,
                  "Equilibrium iteration limit (default 1000)");
  cmd->add_option("--log", o.log_level, "Log level: quiet, info or debug (default from PURC_LOG)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perturbed utility route choice: solve, equilibrate and differentiate"};
  app.require_subcommand(1);
  purc::CliOptions o;

  struct Spec {
    const char* name;
    const char* help;
  };
  const Spec specs[] = {
      {"validate", "Check a scenario and its network without solving"},
      {"solve", "Route choice flows at the scenario's static link costs"},
      {"equilibrium", "Equilibrium link costs and flows under BPR congestion"},
      {"jacobian", "Dense flow-cost Jacobian per OD pair"},
      {"jvp", "Flow change in one cost direction, without forming the Jacobian"},
      {"eq-jacobian", "Equilibrium cost and flow Jacobians with respect to t0 or kappa"},
      {"estimate", "First-order flow estimates after parameter shifts, with exact re-solves"},
      {"uncertainty", "Delta-method flow moments under independent parameter uncertainty"},
      {"substitution", "Classify link pairs as substitutes or complements"},
  };
  for (const auto& spec : specs) {
    CLI::App* cmd = app.add_subcommand(spec.name, spec.help);
    add_common(cmd, o);
    const std::string name = spec.name;
    if (name == "eq-jacobian" || name == "uncertainty" || name == "substitution") {
      cmd->add_option("--param", o.parameter, "Parameter family: kappa or t0");
    }
    if (name == "estimate") {
      cmd->add_option("--shift", o.shifts, "Shift such as kappa:1-2:+5% or t0:1-2:+0.25");
    }
    if (name == "uncertainty") {
      cmd->add_option("--cv", o.cv, "Coefficient of variation of each parameter (default 0.30)");
      cmd->add_option("--level", o.level, "Confidence level (default 0.90)");
    }
    if (name == "jvp") {
      cmd->add_option("--direction", o.direction, "Cost direction entries link=value");
    }
    if (name == "substitution") {
      cmd->add_option("--source", o.source, "Jacobian source: purc or equilibrium")
          ->check(CLI::IsMember({"purc", "equilibrium"}));
    }
    if (name == "jvp" || name == "estimate" || name == "uncertainty" || name == "substitution") {
      cmd->add_option("--out", o.out, "Output file for the main table");
    }
    cmd->callback([&o, name] { o.command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : purc::kExitInputError;
  }

  const purc::ReportBundle bundle = purc::run(o, std::cout);
  if (!bundle.error.empty()) std::cerr << "error: " << bundle.error << '\n';
  return bundle.exit_code;
}
