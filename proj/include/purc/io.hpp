#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "purc/analysis.hpp"
#include "purc/equilibrium.hpp"
#include "purc/network.hpp"
#include "purc/perturbation.hpp"
#include "purc/purc_solver.hpp"

namespace purc {

/// Network from JSON: {"nodes": [...], "links": [{"id","from","to","length","t0","capacity"}]}.
/// "nodes" is optional; missing nodes are taken from link endpoints in order of appearance.
Network network_from_json(const nlohmann::json& j);
nlohmann::json network_to_json(const Network& network);

/// Network from CSV with header id,from,to,length,t0,capacity.
Network network_from_csv(std::string_view text);

/// Picks the format from the file extension (.json or .csv).
std::shared_ptr<const Network> load_network(const std::filesystem::path& path);

struct OdDemand {
  std::string origin;
  std::string destination;
  double q = 1.0;
  /// Flow routed by one solve for this pair; b is scaled by it (default one unit).
  double flow = 1.0;
};

struct PerturbationConfig {
  PerturbationFamily family = PerturbationFamily::entropic;
  ScaleSource scale = ScaleSource::length;
  /// Used when scale is per_link.
  Eigen::VectorXd per_link;
};

struct Tolerances {
  SolverOptions solver{};
  double boundary = kDefaultBoundaryTolerance;
  double equilibrium = 1e-8;
  int equilibrium_max_iterations = 1000;
};

struct AnalysisConfig {
  ParameterFamily parameter = ParameterFamily::capacity;
  /// Shift specifications such as "kappa:1-2:+5%".
  std::vector<std::string> shifts;
  double cv = 0.30;
  double level = 0.90;
  /// Cost direction for directional sensitivity, keyed by link id.
  std::vector<std::pair<std::string, double>> direction;
};

struct Scenario {
  std::filesystem::path source;
  std::shared_ptr<const Network> network;
  std::vector<OdDemand> demands;
  PerturbationConfig perturbation;
  double bpr_alpha = 0.15;
  double bpr_beta = 4.0;
  /// Static link costs for the route-choice subcommands; empty means link lengths.
  Eigen::VectorXd costs;
  AnalysisConfig analysis;
  Tolerances tolerances;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 1;
  int threads = 1;
};

/// Parses and validates a scenario. Relative paths resolve against `base_dir`.
/// Unknown keys anywhere in the document are rejected.
Scenario scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
Scenario load_scenario(const std::filesystem::path& path);

Perturbation make_perturbation(const Scenario& scenario);
Eigen::VectorXd static_costs(const Scenario& scenario);
std::vector<TravelerType> traveler_types(const Scenario& scenario);
/// PURC problem for one OD pair at the scenario's static costs.
PurcProblem route_choice_problem(const Scenario& scenario, std::size_t od);
EquilibriumProblem equilibrium_problem(const Scenario& scenario);

struct ParameterShift {
  ParameterFamily family = ParameterFamily::capacity;
  std::size_t link = 0;
  /// Absolute change in the parameter.
  double delta = 0.0;
};

/// "kappa:1-2:+5%" (relative) or "t0:1-2:+0.25" (absolute).
ParameterShift parse_shift(std::string_view text, const Network& network, const BprFunction& fn);

/// Self-contained record of a single route-choice solve.
nlohmann::json solution_to_json(const PurcProblem& problem, const PurcSolution& solution);
nlohmann::json equilibrium_to_json(const EquilibriumProblem& problem,
                                   const EquilibriumSolution& solution);

/// "%.10g"; NaN becomes "-".
std::string format_number(double value);

/// CSV with a header row of column ids and one labelled row per matrix row.
/// Output is byte-identical for identical input.
std::string format_table(const Eigen::MatrixXd& matrix, const std::vector<std::string>& row_ids,
                         const std::vector<std::string>& col_ids,
                         std::string_view corner = "link");
void emit_table(const Eigen::MatrixXd& matrix, const std::vector<std::string>& row_ids,
                const std::vector<std::string>& col_ids, const std::filesystem::path& path,
                std::string_view corner = "link");

std::vector<std::string> link_ids(const Network& network);

void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace purc
