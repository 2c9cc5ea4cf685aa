#include "purc/purc_solver.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

namespace purc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

// Dense factorization is faster than the sparse path for tiny systems.
constexpr Eigen::Index kDenseNewtonLimit = 64;

/// Shortest-path distance to `target` over the usable links.
std::vector<double> distances_to(const Network& net, std::size_t target,
                                 const Eigen::VectorXd& cost,
                                 const std::vector<bool>& usable_link) {
  std::vector<double> dist(net.num_nodes(), kInf);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  dist[target] = 0.0;
  queue.emplace(0.0, target);
  while (!queue.empty()) {
    auto [d, v] = queue.top();
    queue.pop();
    if (d > dist[v]) continue;
    for (std::size_t k : net.in_links()[v]) {
      if (!usable_link[k]) continue;
      const std::size_t u = net.tail(k);
      const double nd = d + cost(static_cast<Eigen::Index>(k));
      if (nd < dist[u]) {
        dist[u] = nd;
        queue.emplace(nd, u);
      }
    }
  }
  return dist;
}

/// Dual state: potentials on unknown nodes and the induced flows.
struct DualState {
  Eigen::VectorXd eta;    // all nodes; destination fixed at 0
  Eigen::VectorXd slack;  // eta_tail - eta_head - c on usable links
  Eigen::VectorXd flows;
  Eigen::VectorXd residual;  // (A x - b) on unknown nodes
  double dual_objective = 0.0;
  double residual_norm = 0.0;
};

class DualNewton {
 public:
  DualNewton(const PurcProblem& p, std::vector<bool> usable_node, std::vector<bool> usable_link)
      : p_(p),
        net_(*p.network),
        usable_node_(std::move(usable_node)),
        usable_link_(std::move(usable_link)) {
    unknown_.assign(net_.num_nodes(), -1);
    for (std::size_t v = 0; v < net_.num_nodes(); ++v) {
      if (usable_node_[v] && v != p_.demand.destination) {
        unknown_[v] = n_unknown_++;
      }
    }
    for (std::size_t k = 0; k < net_.num_links(); ++k) {
      if (usable_link_[k]) links_.push_back(k);
    }
  }

  Eigen::Index unknowns() const { return n_unknown_; }

  void evaluate(DualState& s) const {
    const auto m = static_cast<Eigen::Index>(net_.num_links());
    s.slack = Eigen::VectorXd::Constant(m, kNaN);
    s.flows = Eigen::VectorXd::Zero(m);
    s.residual = Eigen::VectorXd::Zero(n_unknown_);
    double phi = 0.0;
    for (std::size_t k : links_) {
      const auto kk = static_cast<Eigen::Index>(k);
      const std::size_t t = net_.tail(k), h = net_.head(k);
      const double y = s.eta(static_cast<Eigen::Index>(t)) -
                       s.eta(static_cast<Eigen::Index>(h)) - p_.cost(kk);
      s.slack(kk) = y;
      const double x = p_.perturbation.link_inverse_derivative(kk, y);
      s.flows(kk) = x;
      phi += p_.perturbation.link_conjugate(kk, y);
      if (unknown_[t] >= 0) s.residual(unknown_[t]) -= x;
      if (unknown_[h] >= 0) s.residual(unknown_[h]) += x;
    }
    for (std::size_t v = 0; v < net_.num_nodes(); ++v) {
      if (unknown_[v] < 0) continue;
      const double b = p_.demand.b(static_cast<Eigen::Index>(v));
      s.residual(unknown_[v]) -= b;
      phi += s.eta(static_cast<Eigen::Index>(v)) * b;
    }
    s.dual_objective = phi;
    s.residual_norm = n_unknown_ > 0 ? s.residual.lpNorm<Eigen::Infinity>() : 0.0;
  }

  /// Solves (A D A' + reg) step = residual on the unknown nodes.
  bool newton_step(const DualState& s, Eigen::VectorXd& step) const {
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(4 * links_.size() + static_cast<std::size_t>(n_unknown_));
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n_unknown_);
    Eigen::VectorXd fallback = Eigen::VectorXd::Zero(n_unknown_);
    const double band = s.residual_norm;
    for (std::size_t k : links_) {
      const auto kk = static_cast<Eigen::Index>(k);
      const Eigen::Index ut = unknown_[net_.tail(k)], uh = unknown_[net_.head(k)];
      const double at_kink = 1.0 / p_.perturbation.link_second_derivative(kk, 0.0);
      if (ut >= 0) fallback(ut) += at_kink;
      if (uh >= 0) fallback(uh) += at_kink;
      if (s.slack(kk) < -band) continue;
      double d = 1.0 / p_.perturbation.link_second_derivative(kk, s.flows(kk));
      // Links sitting on the kink get the average of the one-sided
      // derivatives, which stops them flipping in and out on every step.
      if (std::abs(s.slack(kk)) <= band) d *= 0.5;
      if (ut >= 0) diag(ut) += d;
      if (uh >= 0) diag(uh) += d;
      if (ut >= 0 && uh >= 0) {
        entries.emplace_back(ut, uh, -d);
        entries.emplace_back(uh, ut, -d);
      }
    }
    // Nodes with no link on the active side get the curvature they would
    // have at the kink, so the step stays well scaled.
    for (Eigen::Index i = 0; i < n_unknown_; ++i) {
      if (diag(i) <= 0.0) diag(i) = fallback(i);
    }
    const double reg = 1e-12 * (1.0 + diag.maxCoeff());
    for (Eigen::Index i = 0; i < n_unknown_; ++i) entries.emplace_back(i, i, diag(i) + reg);

    if (n_unknown_ <= kDenseNewtonLimit) {
      Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n_unknown_, n_unknown_);
      for (const auto& e : entries) L(e.row(), e.col()) += e.value();
      Eigen::LDLT<Eigen::MatrixXd> ldlt(L);
      if (ldlt.info() != Eigen::Success) return false;
      step = ldlt.solve(s.residual);
    } else {
      Eigen::SparseMatrix<double> L(n_unknown_, n_unknown_);
      L.setFromTriplets(entries.begin(), entries.end());
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(L);
      if (ldlt.info() != Eigen::Success) return false;
      step = ldlt.solve(s.residual);
    }
    return step.allFinite();
  }

  void apply(const DualState& from, const Eigen::VectorXd& step, double t, DualState& to) const {
    to.eta = from.eta;
    for (std::size_t v = 0; v < net_.num_nodes(); ++v) {
      if (unknown_[v] >= 0) to.eta(static_cast<Eigen::Index>(v)) += t * step(unknown_[v]);
    }
    evaluate(to);
  }

 private:
  const PurcProblem& p_;
  const Network& net_;
  std::vector<bool> usable_node_;
  std::vector<bool> usable_link_;
  std::vector<Eigen::Index> unknown_;
  std::vector<std::size_t> links_;
  Eigen::Index n_unknown_ = 0;
};

void validate(const PurcProblem& p) {
  if (!p.network) throw InputError("PURC problem has no network");
  const auto m = static_cast<Eigen::Index>(p.network->num_links());
  if (p.cost.size() != m) throw InputError("cost vector length does not match link count");
  if (p.perturbation.size() != m) {
    throw InputError("perturbation scale length does not match link count");
  }
  if (p.demand.b.size() != static_cast<Eigen::Index>(p.network->num_nodes())) {
    throw InputError("demand vector length does not match node count");
  }
  for (Eigen::Index k = 0; k < m; ++k) {
    if (!(p.cost(k) > 0.0) || !std::isfinite(p.cost(k))) {
      throw InputError("link costs must be positive and finite (link '" +
                       p.network->link(static_cast<std::size_t>(k)).id + "')");
    }
  }
  if (!(p.demand_scale > 0.0)) throw InputError("demand scale must be positive");
}

}  // namespace

std::size_t PurcSolution::active_count() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
}

PurcSolution solve_purc(const PurcProblem& problem) {
  validate(problem);
  const Network& net = *problem.network;
  const std::size_t origin = problem.demand.origin;
  const std::size_t destination = problem.demand.destination;

  const auto from_origin = reachable_from(net, origin);
  if (!from_origin[destination]) {
    throw InputError("destination '" + net.nodes()[destination] +
                     "' is unreachable from origin '" + net.nodes()[origin] + "'");
  }
  const auto to_destination = reaching(net, destination);
  std::vector<bool> usable_node(net.num_nodes());
  for (std::size_t v = 0; v < net.num_nodes(); ++v) {
    usable_node[v] = from_origin[v] && to_destination[v];
  }
  std::vector<bool> usable_link(net.num_links());
  for (std::size_t k = 0; k < net.num_links(); ++k) {
    usable_link[k] = usable_node[net.tail(k)] && usable_node[net.head(k)];
  }

  DualNewton newton(problem, usable_node, usable_link);

  DualState state;
  state.eta = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(net.num_nodes()), kNaN);
  bool warm = false;
  if (problem.initial_duals && problem.initial_duals->size() == state.eta.size()) {
    const Eigen::VectorXd& init = *problem.initial_duals;
    const double shift = init(static_cast<Eigen::Index>(destination));
    warm = std::isfinite(shift);
    for (std::size_t v = 0; v < net.num_nodes() && warm; ++v) {
      if (usable_node[v]) {
        const double value = init(static_cast<Eigen::Index>(v)) - shift;
        warm = std::isfinite(value);
        state.eta(static_cast<Eigen::Index>(v)) = value;
      }
    }
  }
  // Optimal potentials never fall below the shortest-path distance, so a
  // stale warm start is lifted to it; below it every link can be inactive.
  const auto dist = distances_to(net, destination, problem.cost, usable_link);
  for (std::size_t v = 0; v < net.num_nodes(); ++v) {
    if (!usable_node[v]) continue;
    double& eta = state.eta(static_cast<Eigen::Index>(v));
    eta = warm ? std::max(eta, dist[v]) : dist[v];
  }
  state.eta(static_cast<Eigen::Index>(destination)) = 0.0;
  newton.evaluate(state);

  const SolverOptions& opt = problem.options;
  PurcSolution sol;
  Eigen::VectorXd step;
  DualState trial;
  std::string failure;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (state.residual_norm <= opt.feasibility_tolerance) break;
    if (!newton.newton_step(state, step)) {
      failure = "Newton system could not be factorized";
      break;
    }
    const double slope = -state.residual.dot(step);
    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      newton.apply(state, step, t, trial);
      if (!std::isfinite(trial.dual_objective)) continue;
      const bool armijo = trial.dual_objective <= state.dual_objective + 1e-4 * t * slope;
      const bool contracts = trial.residual_norm <= 0.5 * state.residual_norm;
      if (armijo || contracts) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      failure = "line search failed";
      break;
    }
    std::swap(state, trial);
  }

  sol.iterations = it;
  sol.flows = state.flows;
  sol.duals = state.eta;
  sol.usable = usable_link;

  const IncidenceMatrix A = build_incidence(net);
  sol.feasibility_residual = (A * sol.flows - problem.demand.b).lpNorm<Eigen::Infinity>();
  sol.activity_threshold =
      opt.activity_tolerance * std::max(1.0, sol.flows.lpNorm<Eigen::Infinity>());
  sol.active.assign(net.num_links(), false);
  double stationarity = 0.0;
  for (std::size_t k = 0; k < net.num_links(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    if (!(sol.flows(kk) > sol.activity_threshold)) continue;
    sol.active[k] = true;
    const double r = problem.cost(kk) +
                     problem.perturbation.link_derivative(kk, sol.flows(kk)) +
                     sol.duals(static_cast<Eigen::Index>(net.head(k))) -
                     sol.duals(static_cast<Eigen::Index>(net.tail(k)));
    stationarity = std::max(stationarity, std::abs(r));
  }
  sol.stationarity_residual = stationarity;
  sol.objective = purc_objective(problem, sol.flows);
  sol.converged = failure.empty() && sol.feasibility_residual <= opt.feasibility_tolerance &&
                  sol.stationarity_residual <= opt.stationarity_tolerance;

  std::ostringstream msg;
  if (sol.converged) {
    msg << "converged in " << it << " iteration(s)";
  } else {
    msg << (failure.empty() ? std::string("iteration limit reached") : failure)
        << "; feasibility residual " << sol.feasibility_residual << ", stationarity residual "
        << sol.stationarity_residual;
  }
  sol.message = msg.str();
  return sol;
}

double purc_objective(const PurcProblem& problem, const Eigen::VectorXd& flows) {
  return problem.cost.dot(flows) + problem.perturbation.value(flows);
}

double value_function(const PurcProblem& problem, const PurcSolution& solution) {
  return -purc_objective(problem, solution.flows);
}

double projected_foc_residual(const PurcProblem& problem, const Eigen::VectorXd& flows,
                              const Eigen::MatrixXd& projection) {
  const Eigen::VectorXd g = problem.cost + problem.perturbation.gradient(flows);
  return (projection * g).lpNorm<Eigen::Infinity>();
}

Eigen::VectorXd reduced_costs(const PurcProblem& problem, const PurcSolution& solution) {
  const Network& net = *problem.network;
  Eigen::VectorXd y = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(net.num_links()), kNaN);
  for (std::size_t k = 0; k < net.num_links(); ++k) {
    if (!solution.usable[k]) continue;
    const auto kk = static_cast<Eigen::Index>(k);
    y(kk) = solution.duals(static_cast<Eigen::Index>(net.tail(k))) -
            solution.duals(static_cast<Eigen::Index>(net.head(k))) - problem.cost(kk);
  }
  return y;
}

}  // namespace purc
