#include "purc/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <map>
#include <sstream>

#include "purc/analysis.hpp"
#include "purc/equilibrium.hpp"
#include "purc/errors.hpp"
#include "purc/io.hpp"
#include "purc/sensitivity.hpp"

namespace purc {

namespace fs = std::filesystem;

namespace {

enum class Level { quiet = 0, info = 1, debug = 2 };

Level parse_level(const std::string& s) {
  if (s == "quiet" || s == "error") return Level::quiet;
  if (s == "info" || s.empty()) return Level::info;
  if (s == "debug") return Level::debug;
  throw InputError("unknown log level '" + s + "' (quiet, info, debug)");
}

class Session {
 public:
  Session(const CliOptions& options, ReportBundle& bundle, std::ostream& summary)
      : opt_(options), bundle_(bundle), summary_(summary) {
    std::string level;
    if (options.log_level) {
      level = *options.log_level;
    } else if (const char* env = std::getenv(kLogEnvironmentVariable)) {
      level = env;
    }
    level_ = parse_level(level);
  }

  void log(const std::string& line, Level level = Level::info) {
    bundle_.log.push_back(line);
    if (level <= level_ && level_ != Level::quiet) std::cerr << line << '\n';
  }
  void debug(const std::string& line) { log(line, Level::debug); }

  void load() {
    const auto t = clock::now();
    scenario_ = load_scenario(opt_.scenario);
    Scenario& s = scenario_;
    if (opt_.output_dir) s.output_dir = *opt_.output_dir;
    if (opt_.threads) {
      if (*opt_.threads < 1) throw InputError("--threads must be at least 1");
      s.threads = *opt_.threads;
    }
    auto& tol = s.tolerances;
    if (opt_.activity_tolerance) tol.solver.activity_tolerance = *opt_.activity_tolerance;
    if (opt_.boundary_tolerance) tol.boundary = *opt_.boundary_tolerance;
    if (opt_.feasibility_tolerance) tol.solver.feasibility_tolerance = *opt_.feasibility_tolerance;
    if (opt_.stationarity_tolerance) {
      tol.solver.stationarity_tolerance = *opt_.stationarity_tolerance;
    }
    if (opt_.max_iterations) tol.solver.max_iterations = *opt_.max_iterations;
    if (opt_.equilibrium_tolerance) tol.equilibrium = *opt_.equilibrium_tolerance;
    if (opt_.equilibrium_max_iterations) {
      tol.equilibrium_max_iterations = *opt_.equilibrium_max_iterations;
    }
    if (opt_.parameter) s.analysis.parameter = parse_parameter_family(*opt_.parameter);
    if (!opt_.shifts.empty()) s.analysis.shifts = opt_.shifts;
    if (opt_.cv) s.analysis.cv = *opt_.cv;
    if (opt_.level) s.analysis.level = *opt_.level;
    if (!opt_.direction.empty()) {
      s.analysis.direction.clear();
      for (const auto& entry : opt_.direction) {
        const auto eq = entry.find('=');
        const std::string id = entry.substr(0, eq);
        double value = 1.0;
        if (eq != std::string::npos) {
          try {
            value = std::stod(entry.substr(eq + 1));
          } catch (const std::exception&) {
            throw InputError("bad --direction entry '" + entry + "'");
          }
        }
        s.network->link_index(id);
        s.analysis.direction.emplace_back(id, value);
      }
    }
    log("scenario " + opt_.scenario.string() + ": " + std::to_string(s.network->num_nodes()) +
        " nodes, " + std::to_string(s.network->num_links()) + " links, " +
        std::to_string(s.demands.size()) + " OD pair(s)");
    timing("load", t);
  }

  const Scenario& scenario() const { return scenario_; }

  fs::path output(const std::string& name) const { return scenario_.output_dir / name; }
  fs::path out_or(const fs::path& fallback) const { return opt_.out ? *opt_.out : fallback; }

  void table(const Eigen::MatrixXd& m, const std::vector<std::string>& rows,
             const std::vector<std::string>& cols, const fs::path& path) {
    emit_table(m, rows, cols, path);
    bundle_.files.push_back(path);
  }

  void text(const fs::path& path, const std::string& content) {
    write_text(path, content);
    bundle_.files.push_back(path);
  }

  void not_converged(const std::string& what) {
    log("warning: " + what);
    bundle_.exit_code = kExitNotConverged;
  }

  using clock = std::chrono::steady_clock;
  void timing(const std::string& what, clock::time_point start) {
    const double ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    std::ostringstream os;
    os << "time " << what << ": " << ms << " ms";
    debug(os.str());
  }

  std::ostream& summary() { return summary_; }
  const std::string& source() const { return opt_.source; }

 private:
  const CliOptions& opt_;
  ReportBundle& bundle_;
  std::ostream& summary_;
  Level level_ = Level::info;
  Scenario scenario_;
};

std::string od_label(const Scenario& s, std::size_t od) {
  return s.demands[od].origin + "->" + s.demands[od].destination;
}

std::string od_suffix(const Scenario& s, std::size_t od) {
  return s.demands[od].origin + "_" + s.demands[od].destination;
}

std::vector<std::string> prefixed(const std::string& prefix, const std::vector<std::string>& ids) {
  std::vector<std::string> out;
  for (const auto& id : ids) out.push_back(prefix + id);
  return out;
}

std::string residual_line(const PurcSolution& sol) {
  std::ostringstream os;
  os << "iterations " << sol.iterations << ", |Ax-b| " << sol.feasibility_residual
     << ", stationarity " << sol.stationarity_residual << ", active links " << sol.active_count();
  return os.str();
}

void cmd_validate(Session& ss) {
  const Scenario& s = ss.scenario();
  const auto report = validate_connected(*s.network);
  if (!report.strongly_connected) ss.log("note: " + report.diagnostic);
  for (std::size_t w = 0; w < s.demands.size(); ++w) {
    const auto o = s.network->node_index(s.demands[w].origin);
    const auto d = s.network->node_index(s.demands[w].destination);
    if (!has_path(*s.network, o, d)) {
      throw InputError("destination '" + s.demands[w].destination + "' is unreachable from '" +
                       s.demands[w].origin + "'");
    }
  }
  make_perturbation(s);
  BprFunction::for_network(*s.network, s.bpr_alpha, s.bpr_beta);
  for (const auto& spec : s.analysis.shifts) {
    parse_shift(spec, *s.network, BprFunction::for_network(*s.network, s.bpr_alpha, s.bpr_beta));
  }
  ss.summary() << "valid: " << s.network->num_links() << " links, " << s.demands.size()
               << " OD pair(s)\n";
}

void cmd_solve(Session& ss) {
  const Scenario& s = ss.scenario();
  const auto ids = link_ids(*s.network);
  nlohmann::json doc = nlohmann::json::array();
  Eigen::MatrixXd flows(ids.size(), s.demands.size() + 1);
  std::vector<std::string> cols;
  for (std::size_t w = 0; w < s.demands.size(); ++w) {
    const auto t = Session::clock::now();
    const PurcProblem p = route_choice_problem(s, w);
    const PurcSolution sol = solve_purc(p);
    ss.timing("solve " + od_label(s, w), t);
    ss.log(od_label(s, w) + ": " + residual_line(sol));
    if (!sol.converged) ss.not_converged(od_label(s, w) + ": " + sol.message);
    doc.push_back(solution_to_json(p, sol));
    flows.col(static_cast<Eigen::Index>(w)) = p.demand_scale * sol.flows;
    cols.push_back(od_label(s, w));
  }
  flows.col(flows.cols() - 1) = flows.leftCols(flows.cols() - 1).rowwise().sum();
  cols.push_back("total");
  ss.text(ss.output("solution.json"), doc.dump(2) + "\n");
  ss.table(flows, ids, cols, ss.output("flows.csv"));
  ss.summary() << "solved " << s.demands.size() << " OD pair(s); reports in "
               << s.output_dir.string() << "\n";
}

struct SolvedEquilibrium {
  EquilibriumProblem problem;
  EquilibriumSolution solution;
};

SolvedEquilibrium solve_eq(Session& ss, const EquilibriumProblem& problem, const std::string& tag) {
  const auto t = Session::clock::now();
  SolvedEquilibrium out{problem, solve_equilibrium(problem)};
  ss.timing("equilibrium " + tag, t);
  ss.log("equilibrium " + tag + ": " + out.solution.message);
  if (!out.solution.converged) ss.not_converged("equilibrium " + tag + " did not converge");
  return out;
}

void cmd_equilibrium(Session& ss) {
  const Scenario& s = ss.scenario();
  const auto eq = solve_eq(ss, equilibrium_problem(s), "at scenario parameters");
  const auto ids = link_ids(*s.network);
  const auto m = static_cast<Eigen::Index>(ids.size());
  Eigen::MatrixXd table(m, static_cast<Eigen::Index>(s.demands.size()) + 2);
  std::vector<std::string> cols{"cost", "flow"};
  table.col(0) = eq.solution.costs;
  table.col(1) = eq.solution.aggregate_flows;
  for (std::size_t w = 0; w < s.demands.size(); ++w) {
    table.col(static_cast<Eigen::Index>(w) + 2) =
        s.demands[w].q * eq.solution.type_solutions[w].flows;
    cols.push_back(od_label(s, w));
  }
  ss.text(ss.output("equilibrium.json"),
          equilibrium_to_json(eq.problem, eq.solution).dump(2) + "\n");
  ss.table(table, ids, cols, ss.output("equilibrium.csv"));
  ss.summary() << eq.solution.message << "\n";
}

void cmd_jacobian(Session& ss) {
  const Scenario& s = ss.scenario();
  const auto ids = link_ids(*s.network);
  for (std::size_t w = 0; w < s.demands.size(); ++w) {
    const PurcProblem p = route_choice_problem(s, w);
    const PurcSolution sol = solve_purc(p);
    if (!sol.converged) {
      ss.not_converged(od_label(s, w) + ": " + sol.message);
      continue;
    }
    const auto t = Session::clock::now();
    const PurcJacobian jac = purc_jacobian(p, sol, s.tolerances.boundary);
    ss.timing("jacobian " + od_label(s, w), t);
    if (jac.near_boundary) {
      ss.log("warning: " + od_label(s, w) + " " + jac.boundary.describe(*s.network) +
             "; the derivative may not exist here");
    }
    ss.table(jac.matrix, ids, ids, ss.output("jacobian_" + od_suffix(s, w) + ".csv"));
  }
  ss.summary() << "wrote " << s.demands.size() << " Jacobian(s) to " << s.output_dir.string()
               << "\n";
}

Eigen::VectorXd direction_vector(const Scenario& s) {
  if (s.analysis.direction.empty()) {
    throw InputError("jvp needs a cost direction (--direction link=value or analysis.direction)");
  }
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.network->num_links()));
  for (const auto& [id, v] : s.analysis.direction) {
    delta(static_cast<Eigen::Index>(s.network->link_index(id))) += v;
  }
  return delta;
}

void cmd_jvp(Session& ss) {
  const Scenario& s = ss.scenario();
  const Eigen::VectorXd delta = direction_vector(s);
  const auto ids = link_ids(*s.network);
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(delta.size(), 2);
  total.col(0) = delta;
  for (std::size_t w = 0; w < s.demands.size(); ++w) {
    const PurcProblem p = route_choice_problem(s, w);
    auto t = Session::clock::now();
    const PurcSolution sol = solve_purc(p);
    ss.timing("solve " + od_label(s, w), t);
    ss.log(od_label(s, w) + ": " + residual_line(sol));
    if (!sol.converged) {
      ss.not_converged(od_label(s, w) + ": " + sol.message);
      continue;
    }
    t = Session::clock::now();
    const DirectionalResult r = directional_sensitivity(p, sol, delta);
    ss.timing("jvp " + od_label(s, w), t);
    std::ostringstream os;
    os << od_label(s, w) << ": conjugate gradients " << r.iterations << " iteration(s), error "
       << r.estimated_error;
    ss.debug(os.str());
    const auto report = boundary_check(p, sol, s.tolerances.boundary);
    if (report.near_boundary()) {
      ss.log("warning: " + od_label(s, w) + " " + report.describe(*s.network));
    }
    total.col(1) += r.flow_change;
  }
  ss.table(total, ids, {"direction", "flow_change"}, ss.out_or(ss.output("jvp.csv")));
  ss.summary() << "directional flow change written\n";
}

struct EquilibriumSensitivity {
  SolvedEquilibrium eq;
  CostJacobian cost;
  EquilibriumJacobians flow;
};

EquilibriumSensitivity eq_sensitivity(Session& ss, ParameterFamily family) {
  const Scenario& s = ss.scenario();
  EquilibriumSensitivity out{
      solve_eq(ss, equilibrium_problem(s), "at scenario parameters"), {}, {}};
  if (!out.eq.solution.converged) {
    throw NumericalError("equilibrium did not converge; sensitivities are not available");
  }
  const auto t = Session::clock::now();
  out.cost = equilibrium_cost_jacobian(out.eq.problem, out.eq.solution, family);
  out.flow = equilibrium_flow_jacobian(out.eq.problem, out.cost);
  ss.timing("equilibrium jacobian " + to_string(family), t);
  std::ostringstream os;
  os << "sensitivity system condition number " << out.cost.condition_number;
  ss.log(os.str());
  if (out.cost.near_boundary) {
    ss.log("warning: equilibrium is near the activation boundary of some traveler type");
  }
  return out;
}

void cmd_eq_jacobian(Session& ss) {
  const Scenario& s = ss.scenario();
  const ParameterFamily family = s.analysis.parameter;
  const auto sens = eq_sensitivity(ss, family);
  const auto ids = link_ids(*s.network);
  const auto cols = prefixed(to_string(family) + "_", ids);
  const std::string p = to_string(family);
  ss.table(sens.cost.matrix, ids, cols, ss.output("eq_cost_jacobian_" + p + ".csv"));
  ss.table(sens.flow.aggregate_flow, ids, cols, ss.output("eq_flow_jacobian_" + p + ".csv"));
  for (std::size_t w = 0; w < s.demands.size(); ++w) {
    ss.table(s.demands[w].q * sens.flow.type_flow[w], ids, cols,
             ss.output("eq_flow_jacobian_" + p + "_" + od_suffix(s, w) + ".csv"));
  }
  ss.summary() << "equilibrium Jacobians with respect to " << p << " written to "
               << s.output_dir.string() << "\n";
}

void cmd_estimate(Session& ss) {
  const Scenario& s = ss.scenario();
  if (s.analysis.shifts.empty()) throw InputError("estimate needs at least one --shift");
  const EquilibriumProblem base = equilibrium_problem(s);
  std::vector<ParameterShift> shifts;
  for (const auto& spec : s.analysis.shifts) {
    shifts.push_back(parse_shift(spec, *s.network, base.link_costs));
  }
  const auto eq = solve_eq(ss, base, "at scenario parameters");
  if (!eq.solution.converged) throw NumericalError("base equilibrium did not converge");

  std::map<ParameterFamily, EquilibriumJacobians> jacobians;
  const auto ids = link_ids(*s.network);
  const auto m = static_cast<Eigen::Index>(ids.size());
  Eigen::MatrixXd table(m, 1 + 2 * static_cast<Eigen::Index>(shifts.size()));
  std::vector<std::string> cols{"unperturbed"};
  table.col(0) = eq.solution.aggregate_flows;
  for (std::size_t i = 0; i < shifts.size(); ++i) {
    const ParameterShift& sh = shifts[i];
    if (!jacobians.count(sh.family)) {
      const CostJacobian cj = equilibrium_cost_jacobian(base, eq.solution, sh.family);
      jacobians.emplace(sh.family, equilibrium_flow_jacobian(base, cj));
    }
    Eigen::VectorXd eps = Eigen::VectorXd::Zero(m);
    eps(static_cast<Eigen::Index>(sh.link)) = sh.delta;
    const ShiftEstimate est = estimate_shifted_solution(eq.solution, jacobians.at(sh.family), eps);
    if (est.clamped)
      ss.log("note: " + s.analysis.shifts[i] + " estimate clamped negative flows to 0");

    const Eigen::VectorXd theta = parameter_values(base.link_costs, sh.family) + eps;
    EquilibriumProblem shifted = with_parameters(base, sh.family, theta);
    shifted.initial_costs = eq.solution.costs;
    const auto exact = solve_eq(ss, shifted, s.analysis.shifts[i]);

    const auto c = 1 + 2 * static_cast<Eigen::Index>(i);
    table.col(c) = est.flows;
    table.col(c + 1) = exact.solution.aggregate_flows;
    cols.push_back(s.analysis.shifts[i] + " estimated");
    cols.push_back(s.analysis.shifts[i] + " exact");
    std::ostringstream os;
    os << s.analysis.shifts[i] << ": max |estimated - exact| "
       << (est.flows - exact.solution.aggregate_flows).lpNorm<Eigen::Infinity>();
    ss.log(os.str());
  }
  ss.table(table, ids, cols, ss.out_or(ss.output("estimate.csv")));
  ss.summary() << "estimated " << shifts.size() << " shift(s)\n";
}

void cmd_uncertainty(Session& ss) {
  const Scenario& s = ss.scenario();
  const ParameterFamily family = s.analysis.parameter;
  const auto sens = eq_sensitivity(ss, family);
  const Eigen::VectorXd mu = parameter_values(sens.eq.problem.link_costs, family);
  const UncertaintyInput input = independent_uncertainty(mu, s.analysis.cv, s.analysis.level);
  const UncertaintyResult r =
      propagate_uncertainty(sens.eq.solution.aggregate_flows, sens.flow.aggregate_flow, input);

  const auto ids = link_ids(*s.network);
  const auto m = static_cast<Eigen::Index>(ids.size());
  Eigen::MatrixXd table(m, 5);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto& ci = r.intervals[static_cast<std::size_t>(k)];
    table.row(k) << r.mean(k), r.std_dev(k), r.cv(k), ci.lower, ci.upper;
  }
  ss.table(table, ids, {"mean", "std", "cv", "ci_lower", "ci_upper"},
           ss.out_or(ss.output("uncertainty.csv")));
  const auto cols = prefixed(to_string(family) + "_", ids);
  ss.table(r.correlation, ids, cols, ss.output("correlation.csv"));
  ss.table(r.variance, ids, ids, ss.output("variance.csv"));
  ss.summary() << "delta-method uncertainty for CV " << s.analysis.cv << " at level "
               << s.analysis.level << " written to " << s.output_dir.string() << "\n";
}

void cmd_substitution(Session& ss) {
  const Scenario& s = ss.scenario();
  const auto m = static_cast<Eigen::Index>(s.network->num_links());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(m, m);
  if (ss.source() == "purc") {
    for (std::size_t w = 0; w < s.demands.size(); ++w) {
      const PurcProblem p = route_choice_problem(s, w);
      const PurcSolution sol = solve_purc(p);
      if (!sol.converged) throw NumericalError(od_label(s, w) + ": " + sol.message);
      const PurcJacobian j = purc_jacobian(p, sol, s.tolerances.boundary);
      if (j.near_boundary)
        ss.log("warning: " + od_label(s, w) + " " + j.boundary.describe(*s.network));
      jac += p.demand_scale * j.matrix;
    }
  } else if (ss.source() == "equilibrium") {
    const auto sens = eq_sensitivity(ss, s.analysis.parameter);
    jac = sens.cost.aggregate_flow_cost;
  } else {
    throw InputError("--source must be purc or equilibrium");
  }
  const auto pairs = substitution_report(jac);
  const auto ids = link_ids(*s.network);
  std::string csv = "affected,changed,derivative,relation\n";
  std::size_t complements = 0;
  for (const auto& pr : pairs) {
    csv += ids[pr.affected] + "," + ids[pr.changed] + "," + format_number(pr.derivative) + "," +
           to_string(pr.relation) + "\n";
    if (pr.relation == Relation::complement) {
      ++complements;
      ss.summary() << "complement: flow on " << ids[pr.affected] << " falls when cost on "
                   << ids[pr.changed] << " rises (" << format_number(pr.derivative) << ")\n";
    }
  }
  ss.text(ss.out_or(ss.output("substitution.csv")), csv);
  ss.summary() << pairs.size() << " ordered pairs classified, " << complements
               << " complement(s)\n";
}

}  // namespace

ReportBundle run(const CliOptions& options, std::ostream& summary) {
  ReportBundle bundle;
  try {
    Session ss(options, bundle, summary);
    ss.load();
    const auto t = Session::clock::now();
    const std::string& c = options.command;
    if (c == "validate") {
      cmd_validate(ss);
      return bundle;
    } else if (c == "solve") {
      cmd_solve(ss);
    } else if (c == "equilibrium") {
      cmd_equilibrium(ss);
    } else if (c == "jacobian") {
      cmd_jacobian(ss);
    } else if (c == "jvp") {
      cmd_jvp(ss);
    } else if (c == "eq-jacobian") {
      cmd_eq_jacobian(ss);
    } else if (c == "estimate") {
      cmd_estimate(ss);
    } else if (c == "uncertainty") {
      cmd_uncertainty(ss);
    } else if (c == "substitution") {
      cmd_substitution(ss);
    } else {
      throw InputError("unknown command '" + c + "'");
    }
    ss.timing(c, t);
    std::string log;
    for (const auto& line : bundle.log) log += line + "\n";
    const fs::path log_path = ss.output("run.log");
    write_text(log_path, log);
    bundle.files.push_back(log_path);
  } catch (const InputError& e) {
    bundle.exit_code = kExitInputError;
    bundle.error = e.what();
  } catch (const nlohmann::json::exception& e) {
    bundle.exit_code = kExitInputError;
    bundle.error = e.what();
  } catch (const fs::filesystem_error& e) {
    bundle.exit_code = kExitInputError;
    bundle.error = e.what();
  } catch (const NumericalError& e) {
    bundle.exit_code = kExitNotConverged;
    bundle.error = e.what();
  }
  return bundle;
}

}  // namespace purc
