#include "purc/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "purc/errors.hpp"

namespace purc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed,
                         std::string_view where) {
  if (!j.is_object()) throw InputError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw InputError("unknown key '" + key + "' in " + std::string(where));
  }
}

double number(const json& j, std::string_view key, std::string_view where) {
  if (!j.contains(key)) {
    throw InputError("missing '" + std::string(key) + "' in " + std::string(where));
  }
  const json& v = j.at(std::string(key));
  if (!v.is_number()) {
    throw InputError("'" + std::string(key) + "' in " + std::string(where) + " must be a number");
  }
  return v.get<double>();
}

std::string text(const json& v, std::string_view what) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw InputError(std::string(what) + " must be a string or integer");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& content, const fs::path& path) {
  try {
    return json::parse(content);
  } catch (const json::parse_error& e) {
    throw InputError("invalid JSON in '" + path.string() + "': " + e.what());
  }
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& s, std::string_view what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) {
    throw InputError("cannot parse " + std::string(what) + " '" + s + "' as a number");
  }
  return v;
}

Eigen::VectorXd link_vector(const json& v, const Network& net, std::string_view what) {
  const auto m = static_cast<Eigen::Index>(net.num_links());
  Eigen::VectorXd out(m);
  if (v.is_array()) {
    if (static_cast<Eigen::Index>(v.size()) != m) {
      throw InputError(std::string(what) + " has " + std::to_string(v.size()) +
                       " entries for " + std::to_string(m) + " links");
    }
    for (Eigen::Index k = 0; k < m; ++k) {
      if (!v[static_cast<std::size_t>(k)].is_number()) {
        throw InputError(std::string(what) + " entries must be numbers");
      }
      out(k) = v[static_cast<std::size_t>(k)].get<double>();
    }
    return out;
  }
  if (v.is_object()) {
    out.setConstant(std::numeric_limits<double>::quiet_NaN());
    for (const auto& [id, value] : v.items()) {
      if (!value.is_number()) throw InputError(std::string(what) + " entries must be numbers");
      out(static_cast<Eigen::Index>(net.link_index(id))) = value.get<double>();
    }
    for (Eigen::Index k = 0; k < m; ++k) {
      if (std::isnan(out(k))) {
        throw InputError(std::string(what) + " has no value for link '" +
                         net.link(static_cast<std::size_t>(k)).id + "'");
      }
    }
    return out;
  }
  throw InputError(std::string(what) + " must be an array or an object keyed by link id");
}

}  // namespace

Network network_from_json(const json& j) {
  reject_unknown_keys(j, {"nodes", "links"}, "network");
  if (!j.contains("links") || !j.at("links").is_array()) {
    throw InputError("network needs a 'links' array");
  }
  std::vector<std::string> nodes;
  if (j.contains("nodes")) {
    if (!j.at("nodes").is_array()) throw InputError("'nodes' must be an array");
    for (const auto& n : j.at("nodes")) nodes.push_back(text(n, "node id"));
  }
  std::unordered_set<std::string> seen(nodes.begin(), nodes.end());
  const bool infer_nodes = !j.contains("nodes");
  std::vector<Link> links;
  for (const auto& l : j.at("links")) {
    reject_unknown_keys(l, {"id", "from", "to", "length", "t0", "capacity"}, "link");
    if (!l.contains("from") || !l.contains("to")) throw InputError("link needs 'from' and 'to'");
    Link link;
    link.from = text(l.at("from"), "link endpoint");
    link.to = text(l.at("to"), "link endpoint");
    link.id = l.contains("id") ? text(l.at("id"), "link id") : link.from + "-" + link.to;
    link.attributes.length = l.contains("length") ? number(l, "length", "link") : 1.0;
    link.attributes.free_flow_time = l.contains("t0") ? number(l, "t0", "link") : 1.0;
    link.attributes.capacity = l.contains("capacity") ? number(l, "capacity", "link") : 1.0;
    if (infer_nodes) {
      for (const auto& n : {link.from, link.to}) {
        if (seen.insert(n).second) nodes.push_back(n);
      }
    }
    links.push_back(std::move(link));
  }
  return Network(std::move(nodes), std::move(links));
}

json network_to_json(const Network& network) {
  json links = json::array();
  for (const auto& l : network.links()) {
    links.push_back({{"id", l.id},
                     {"from", l.from},
                     {"to", l.to},
                     {"length", l.attributes.length},
                     {"t0", l.attributes.free_flow_time},
                     {"capacity", l.attributes.capacity}});
  }
  return {{"nodes", network.nodes()}, {"links", links}};
}

Network network_from_csv(std::string_view content) {
  std::istringstream in{std::string(content)};
  std::string line;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    if (!trim(line).empty()) header = split(line, ',');
  }
  const std::vector<std::string> expected{"id", "from", "to", "length", "t0", "capacity"};
  if (header != expected) {
    throw InputError("network CSV header must be id,from,to,length,t0,capacity");
  }
  std::vector<std::string> nodes;
  std::unordered_set<std::string> seen;
  std::vector<Link> links;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != expected.size()) {
      throw InputError("network CSV row " + std::to_string(row) + " has " +
                       std::to_string(f.size()) + " fields");
    }
    Link link{f[0], f[1], f[2],
              {parse_double(f[3], "length"), parse_double(f[4], "t0"),
               parse_double(f[5], "capacity")}};
    for (const auto& n : {link.from, link.to}) {
      if (seen.insert(n).second) nodes.push_back(n);
    }
    links.push_back(std::move(link));
  }
  return Network(std::move(nodes), std::move(links));
}

std::shared_ptr<const Network> load_network(const fs::path& path) {
  const std::string content = read_file(path);
  const auto ext = path.extension().string();
  if (ext == ".csv") return std::make_shared<const Network>(network_from_csv(content));
  if (ext == ".json")
    return std::make_shared<const Network>(network_from_json(parse_json(content, path)));
  throw InputError("network file '" + path.string() + "' must end in .json or .csv");
}

Scenario scenario_from_json(const json& j, const fs::path& base_dir) {
  reject_unknown_keys(j,
                      {"network", "demands", "perturbation", "bpr", "costs", "analysis",
                       "tolerances", "output_dir", "seed", "threads"},
                      "scenario");
  Scenario s;
  if (!j.contains("network")) throw InputError("scenario needs a 'network'");
  const json& nj = j.at("network");
  if (nj.is_string()) {
    s.network = load_network(base_dir / nj.get<std::string>());
  } else {
    s.network = std::make_shared<const Network>(network_from_json(nj));
  }
  const Network& net = *s.network;

  if (!j.contains("demands") || !j.at("demands").is_array() || j.at("demands").empty()) {
    throw InputError("scenario needs a non-empty 'demands' array");
  }
  for (const auto& d : j.at("demands")) {
    reject_unknown_keys(d, {"origin", "destination", "q", "flow"}, "demand");
    if (!d.contains("origin") || !d.contains("destination")) {
      throw InputError("demand needs 'origin' and 'destination'");
    }
    OdDemand od{text(d.at("origin"), "origin"), text(d.at("destination"), "destination"),
                d.contains("q") ? number(d, "q", "demand") : 1.0};
    if (!(od.q > 0.0)) throw InputError("demand q must be positive");
    if (d.contains("flow")) od.flow = number(d, "flow", "demand");
    if (!(od.flow > 0.0)) throw InputError("demand flow must be positive");
    net.node_index(od.origin);
    net.node_index(od.destination);
    if (od.origin == od.destination) throw InputError("demand origin equals destination");
    s.demands.push_back(std::move(od));
  }

  if (j.contains("perturbation")) {
    const json& p = j.at("perturbation");
    reject_unknown_keys(p, {"family", "scale"}, "perturbation");
    if (p.contains("family")) s.perturbation.family = parse_family(text(p.at("family"), "family"));
    if (p.contains("scale")) {
      const json& sc = p.at("scale");
      if (sc.is_string()) {
        s.perturbation.scale = parse_scale_source(sc.get<std::string>());
        if (s.perturbation.scale == ScaleSource::per_link) {
          throw InputError("per-link scales are given as {\"per_link\": [...]}");
        }
      } else {
        reject_unknown_keys(sc, {"per_link"}, "perturbation scale");
        if (!sc.contains("per_link")) throw InputError("perturbation scale needs 'per_link'");
        s.perturbation.scale = ScaleSource::per_link;
        s.perturbation.per_link = link_vector(sc.at("per_link"), net, "per-link scale");
      }
    }
  }

  if (j.contains("bpr")) {
    const json& b = j.at("bpr");
    reject_unknown_keys(b, {"alpha", "beta"}, "bpr");
    if (b.contains("alpha")) s.bpr_alpha = number(b, "alpha", "bpr");
    if (b.contains("beta")) s.bpr_beta = number(b, "beta", "bpr");
  }

  if (j.contains("costs")) {
    const json& c = j.at("costs");
    if (c.is_string()) {
      const auto name = c.get<std::string>();
      if (name == "length") {
        s.costs = net.lengths();
      } else if (name == "t0") {
        s.costs = net.free_flow_times();
      } else {
        throw InputError("costs must be \"length\", \"t0\", an array or an object");
      }
    } else {
      s.costs = link_vector(c, net, "costs");
    }
  }

  if (j.contains("analysis")) {
    const json& a = j.at("analysis");
    reject_unknown_keys(a, {"parameter", "shifts", "cv", "level", "direction"}, "analysis");
    if (a.contains("parameter")) {
      s.analysis.parameter = parse_parameter_family(text(a.at("parameter"), "parameter"));
    }
    if (a.contains("shifts")) {
      if (!a.at("shifts").is_array()) throw InputError("'shifts' must be an array of strings");
      for (const auto& sh : a.at("shifts")) s.analysis.shifts.push_back(text(sh, "shift"));
    }
    if (a.contains("cv")) s.analysis.cv = number(a, "cv", "analysis");
    if (a.contains("level")) s.analysis.level = number(a, "level", "analysis");
    if (a.contains("direction")) {
      const json& d = a.at("direction");
      if (!d.is_object()) throw InputError("'direction' must be an object keyed by link id");
      for (const auto& [id, v] : d.items()) {
        if (!v.is_number()) throw InputError("direction entries must be numbers");
        net.link_index(id);
        s.analysis.direction.emplace_back(id, v.get<double>());
      }
    }
  }

  if (j.contains("tolerances")) {
    const json& t = j.at("tolerances");
    reject_unknown_keys(t,
                        {"activity", "boundary", "feasibility", "stationarity", "max_iterations",
                         "equilibrium", "equilibrium_max_iterations"},
                        "tolerances");
    auto& o = s.tolerances;
    if (t.contains("activity")) o.solver.activity_tolerance = number(t, "activity", "tolerances");
    if (t.contains("boundary")) o.boundary = number(t, "boundary", "tolerances");
    if (t.contains("feasibility")) {
      o.solver.feasibility_tolerance = number(t, "feasibility", "tolerances");
    }
    if (t.contains("stationarity")) {
      o.solver.stationarity_tolerance = number(t, "stationarity", "tolerances");
    }
    if (t.contains("max_iterations")) {
      o.solver.max_iterations = static_cast<int>(number(t, "max_iterations", "tolerances"));
    }
    if (t.contains("equilibrium")) o.equilibrium = number(t, "equilibrium", "tolerances");
    if (t.contains("equilibrium_max_iterations")) {
      o.equilibrium_max_iterations =
          static_cast<int>(number(t, "equilibrium_max_iterations", "tolerances"));
    }
  }

  if (j.contains("output_dir")) s.output_dir = text(j.at("output_dir"), "output_dir");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_integer() || j.at("seed").get<long long>() < 0) {
      throw InputError("'seed' must be a non-negative integer");
    }
    s.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("threads")) {
    s.threads = static_cast<int>(number(j, "threads", "scenario"));
    if (s.threads < 1) throw InputError("'threads' must be at least 1");
  }
  return s;
}

Scenario load_scenario(const fs::path& path) {
  Scenario s = scenario_from_json(parse_json(read_file(path), path), path.parent_path());
  s.source = path;
  return s;
}

Perturbation make_perturbation(const Scenario& s) {
  if (s.perturbation.scale == ScaleSource::per_link) {
    return Perturbation(s.perturbation.family, s.perturbation.per_link);
  }
  return Perturbation::for_network(*s.network, s.perturbation.family, s.perturbation.scale);
}

Eigen::VectorXd static_costs(const Scenario& s) {
  return s.costs.size() > 0 ? s.costs : s.network->lengths();
}

std::vector<TravelerType> traveler_types(const Scenario& s) {
  std::vector<TravelerType> types;
  for (const auto& d : s.demands) {
    DemandVector demand = unit_demand(*s.network, d.origin, d.destination);
    demand.b *= d.flow;
    types.push_back({std::move(demand), d.q});
  }
  return types;
}

PurcProblem route_choice_problem(const Scenario& s, std::size_t od) {
  const OdDemand& d = s.demands.at(od);
  DemandVector demand = unit_demand(*s.network, d.origin, d.destination);
  demand.b *= d.flow;
  return PurcProblem{s.network,
                     static_costs(s),
                     std::move(demand),
                     d.q,
                     make_perturbation(s),
                     s.tolerances.solver,
                     std::nullopt};
}

EquilibriumProblem equilibrium_problem(const Scenario& s) {
  EquilibriumOptions opt;
  opt.tolerance = s.tolerances.equilibrium;
  opt.max_iterations = s.tolerances.equilibrium_max_iterations;
  opt.threads = s.threads;
  opt.purc = s.tolerances.solver;
  return EquilibriumProblem{s.network,
                            traveler_types(s),
                            make_perturbation(s),
                            BprFunction::for_network(*s.network, s.bpr_alpha, s.bpr_beta),
                            opt,
                            std::nullopt};
}

ParameterShift parse_shift(std::string_view spec, const Network& network, const BprFunction& fn) {
  const auto parts = split(spec, ':');
  if (parts.size() != 3) {
    throw InputError("shift '" + std::string(spec) + "' must look like kappa:<link>:+5%");
  }
  ParameterShift shift;
  shift.family = parse_parameter_family(parts[0]);
  shift.link = network.link_index(parts[1]);
  std::string amount = parts[2];
  const bool relative = !amount.empty() && amount.back() == '%';
  if (relative) amount.pop_back();
  const double value = parse_double(amount, "shift amount");
  const double base = parameter_values(fn, shift.family)(static_cast<Eigen::Index>(shift.link));
  shift.delta = relative ? base * value / 100.0 : value;
  return shift;
}

namespace {

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v(i))) {
      out.push_back(v(i));
    } else {
      out.push_back(nullptr);
    }
  }
  return out;
}

json solution_body(const Network& net, const PurcSolution& sol) {
  json duals = json::object();
  for (std::size_t v = 0; v < net.num_nodes(); ++v) {
    const double d = sol.duals(static_cast<Eigen::Index>(v));
    duals[net.nodes()[v]] = std::isfinite(d) ? json(d) : json(nullptr);
  }
  return {{"flows", vector_json(sol.flows)},
          {"duals", duals},
          {"active", sol.active},
          {"activity_threshold", sol.activity_threshold},
          {"objective", sol.objective},
          {"feasibility_residual", sol.feasibility_residual},
          {"stationarity_residual", sol.stationarity_residual},
          {"iterations", sol.iterations},
          {"converged", sol.converged},
          {"message", sol.message}};
}

json perturbation_json(const Perturbation& p) {
  return {{"family", to_string(p.family())}, {"scale", vector_json(p.scale())}};
}

}  // namespace

json solution_to_json(const PurcProblem& problem, const PurcSolution& solution) {
  const Network& net = *problem.network;
  json out;
  out["network"] = network_to_json(net);
  out["link_order"] = link_ids(net);
  out["costs"] = vector_json(problem.cost);
  out["od"] = {{"origin", net.nodes()[problem.demand.origin]},
               {"destination", net.nodes()[problem.demand.destination]},
               {"q", problem.demand_scale},
               {"flow", problem.demand.b(static_cast<Eigen::Index>(problem.demand.destination))}};
  out["perturbation"] = perturbation_json(problem.perturbation);
  out["solution"] = solution_body(net, solution);
  return out;
}

json equilibrium_to_json(const EquilibriumProblem& problem, const EquilibriumSolution& solution) {
  const Network& net = *problem.network;
  json out;
  out["network"] = network_to_json(net);
  out["link_order"] = link_ids(net);
  out["bpr"] = {{"alpha", problem.link_costs.alpha()},
                {"beta", problem.link_costs.beta()},
                {"t0", vector_json(problem.link_costs.free_flow_time())},
                {"capacity", vector_json(problem.link_costs.capacity())}};
  out["perturbation"] = perturbation_json(problem.perturbation);
  out["costs"] = vector_json(solution.costs);
  out["aggregate_flows"] = vector_json(solution.aggregate_flows);
  out["residual"] = solution.residual;
  out["iterations"] = solution.iterations;
  out["converged"] = solution.converged;
  out["message"] = solution.message;
  json types = json::array();
  for (std::size_t w = 0; w < problem.types.size(); ++w) {
    const auto& t = problem.types[w];
    json entry = solution_body(net, solution.type_solutions[w]);
    entry["origin"] = net.nodes()[t.demand.origin];
    entry["destination"] = net.nodes()[t.demand.destination];
    entry["q"] = t.q;
    entry["flow"] = t.demand.b(static_cast<Eigen::Index>(t.demand.destination));
    types.push_back(std::move(entry));
  }
  out["types"] = std::move(types);
  return out;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "-";
  if (value == 0.0) return "0";  // folds -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", value);
  return buf;
}

std::string format_table(const Eigen::MatrixXd& matrix, const std::vector<std::string>& row_ids,
                         const std::vector<std::string>& col_ids, std::string_view corner) {
  if (static_cast<Eigen::Index>(row_ids.size()) != matrix.rows() ||
      static_cast<Eigen::Index>(col_ids.size()) != matrix.cols()) {
    throw InputError("table labels do not match the matrix dimensions");
  }
  std::string out(corner);
  for (const auto& c : col_ids) out += "," + c;
  out += '\n';
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    out += row_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) out += "," + format_number(matrix(i, j));
    out += '\n';
  }
  return out;
}

void emit_table(const Eigen::MatrixXd& matrix, const std::vector<std::string>& row_ids,
                const std::vector<std::string>& col_ids, const fs::path& path,
                std::string_view corner) {
  write_text(path, format_table(matrix, row_ids, col_ids, corner));
}

std::vector<std::string> link_ids(const Network& network) {
  std::vector<std::string> ids;
  for (const auto& l : network.links()) ids.push_back(l.id);
  return ids;
}

void write_text(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

}  // namespace purc
