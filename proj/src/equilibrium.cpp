#include "purc/equilibrium.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <Eigen/LU>
#include <Eigen/QR>

#include "purc/sensitivity.hpp"

namespace purc {

BprFunction::BprFunction(Eigen::VectorXd free_flow_time, Eigen::VectorXd capacity, double alpha,
                         double beta)
    : free_flow_time_(std::move(free_flow_time)),
      capacity_(std::move(capacity)),
      alpha_(alpha),
      beta_(beta) {
  if (free_flow_time_.size() != capacity_.size()) {
    throw InputError("BPR parameter vectors differ in length");
  }
  if (!(alpha_ > 0.0) || !(beta_ > 0.0)) throw InputError("BPR alpha and beta must be positive");
  for (Eigen::Index k = 0; k < size(); ++k) {
    if (!(free_flow_time_(k) > 0.0) || !(capacity_(k) > 0.0)) {
      throw InputError("BPR free-flow times and capacities must be positive");
    }
  }
}

BprFunction BprFunction::for_network(const Network& network, double alpha, double beta) {
  return BprFunction(network.free_flow_times(), network.capacities(), alpha, beta);
}

BprFunction BprFunction::with_free_flow_time(Eigen::VectorXd t0) const {
  return BprFunction(std::move(t0), capacity_, alpha_, beta_);
}

BprFunction BprFunction::with_capacity(Eigen::VectorXd capacity) const {
  return BprFunction(free_flow_time_, std::move(capacity), alpha_, beta_);
}

double BprFunction::cost(Eigen::Index k, double flow) const {
  return free_flow_time_(k) * (1.0 + alpha_ * std::pow(flow / capacity_(k), beta_));
}

double BprFunction::slope(Eigen::Index k, double flow) const {
  if (flow <= 0.0) return 0.0;
  return free_flow_time_(k) * alpha_ * beta_ * std::pow(flow / capacity_(k), beta_ - 1.0) /
         capacity_(k);
}

double BprFunction::d_cost_d_free_flow_time(Eigen::Index k, double flow) const {
  return 1.0 + alpha_ * std::pow(flow / capacity_(k), beta_);
}

double BprFunction::d_cost_d_capacity(Eigen::Index k, double flow) const {
  if (flow <= 0.0) return 0.0;
  return -free_flow_time_(k) * alpha_ * beta_ * std::pow(flow / capacity_(k), beta_) /
         capacity_(k);
}

double BprFunction::inverse(Eigen::Index k, double c) const {
  const double t0 = free_flow_time_(k);
  if (c <= t0) return 0.0;
  return capacity_(k) * std::pow((c - t0) / (alpha_ * t0), 1.0 / beta_);
}

Eigen::VectorXd bpr_eval(const BprFunction& fn, const Eigen::VectorXd& flows) {
  if (flows.size() != fn.size()) throw InputError("flow vector has wrong length");
  Eigen::VectorXd c(flows.size());
  for (Eigen::Index k = 0; k < flows.size(); ++k) {
    if (flows(k) < 0.0) throw InputError("link cost evaluated at a negative flow");
    c(k) = fn.cost(k, flows(k));
  }
  return c;
}

BprInverse bpr_inverse(const BprFunction& fn, const Eigen::VectorXd& costs) {
  if (costs.size() != fn.size()) throw InputError("cost vector has wrong length");
  BprInverse out;
  out.flows.resize(costs.size());
  out.below_free_flow.assign(static_cast<std::size_t>(costs.size()), false);
  for (Eigen::Index k = 0; k < costs.size(); ++k) {
    out.flows(k) = fn.inverse(k, costs(k));
    out.below_free_flow[static_cast<std::size_t>(k)] = costs(k) < fn.free_flow_time()(k);
  }
  return out;
}

BprInverseDerivatives bpr_inverse_derivs(const BprFunction& fn, const Eigen::VectorXd& costs) {
  if (costs.size() != fn.size()) throw InputError("cost vector has wrong length");
  constexpr double inf = std::numeric_limits<double>::infinity();
  const Eigen::Index m = costs.size();
  BprInverseDerivatives d;
  d.d_cost.resize(m);
  d.d_free_flow_time.resize(m);
  d.d_capacity.resize(m);
  d.singular.assign(static_cast<std::size_t>(m), false);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double t0 = fn.free_flow_time()(k);
    const double c = costs(k);
    if (c <= t0) {
      d.singular[static_cast<std::size_t>(k)] = true;
      d.d_cost(k) = inf;
      d.d_free_flow_time(k) = -inf;
      d.d_capacity(k) = 0.0;
      continue;
    }
    const double x = fn.inverse(k, c);
    d.d_cost(k) = x / (fn.beta() * (c - t0));
    d.d_free_flow_time(k) = -x * c / (fn.beta() * (c - t0) * t0);
    d.d_capacity(k) = x / fn.capacity()(k);
  }
  return d;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

PurcProblem type_problem(const EquilibriumProblem& problem, std::size_t type,
                         const Eigen::VectorXd& costs) {
  const TravelerType& t = problem.types.at(type);
  return PurcProblem{problem.network, costs,          t.demand, t.q,
                     problem.perturbation, problem.options.purc, std::nullopt};
}

Eigen::VectorXd aggregate_flows(const std::vector<Eigen::VectorXd>& per_type,
                                const std::vector<double>& q) {
  if (per_type.size() != q.size()) throw InputError("aggregate_flows: type count mismatch");
  if (per_type.empty()) return {};
  Eigen::VectorXd total = Eigen::VectorXd::Zero(per_type.front().size());
  for (std::size_t w = 0; w < per_type.size(); ++w) {
    if (per_type[w].size() != total.size()) {
      throw InputError("aggregate_flows: link dimension mismatch");
    }
    total += q[w] * per_type[w];
  }
  return total;
}

namespace {

void validate(const EquilibriumProblem& p) {
  if (!p.network) throw InputError("equilibrium problem has no network");
  if (p.types.empty()) throw InputError("equilibrium problem has no traveler types");
  const auto m = static_cast<Eigen::Index>(p.network->num_links());
  if (p.link_costs.size() != m || p.perturbation.size() != m) {
    throw InputError("link cost / perturbation dimension does not match the network");
  }
  for (const auto& t : p.types) {
    if (!(t.q > 0.0)) throw InputError("traveler type demand q must be positive");
    if (!has_path(*p.network, t.demand.origin, t.demand.destination)) {
      throw InputError("destination '" + p.network->nodes()[t.demand.destination] +
                       "' is unreachable from origin '" + p.network->nodes()[t.demand.origin] +
                       "'");
    }
  }
}

struct Evaluation {
  std::vector<PurcSolution> solutions;
  Eigen::VectorXd flows;
  double residual = 0.0;
  bool inner_converged = true;
};

}  // namespace

EquilibriumSolution solve_equilibrium(const EquilibriumProblem& problem) {
  validate(problem);
  const EquilibriumOptions& opt = problem.options;
  const std::size_t n_types = problem.types.size();
  const BprFunction& zeta = problem.link_costs;
  const Eigen::VectorXd& t0 = zeta.free_flow_time();

  std::vector<Eigen::VectorXd> warm(n_types);
  auto evaluate = [&](const Eigen::VectorXd& costs) {
    Evaluation e;
    e.solutions.resize(n_types);
    parallel_for(n_types, opt.threads, [&](std::size_t w) {
      PurcProblem p = type_problem(problem, w, costs);
      if (warm[w].size() > 0) p.initial_duals = warm[w];
      e.solutions[w] = solve_purc(p);
    });
    std::vector<Eigen::VectorXd> per_type;
    std::vector<double> q;
    for (std::size_t w = 0; w < n_types; ++w) {
      warm[w] = e.solutions[w].duals;
      per_type.push_back(e.solutions[w].flows);
      q.push_back(problem.types[w].q);
      e.inner_converged = e.inner_converged && e.solutions[w].converged;
    }
    e.flows = aggregate_flows(per_type, q);
    e.residual = (bpr_inverse(zeta, costs).flows - e.flows).lpNorm<Eigen::Infinity>();
    return e;
  };

  Eigen::VectorXd c = problem.initial_costs.value_or(t0);
  if (c.size() != t0.size()) throw InputError("initial cost vector has wrong length");
  // Link flows never exceed the total demand, which bounds every cost.
  double total = 0.0;
  for (const auto& t : problem.types) {
    total += t.q * t.demand.b(static_cast<Eigen::Index>(t.demand.destination));
  }
  const Eigen::VectorXd c_max = bpr_eval(zeta, Eigen::VectorXd::Constant(t0.size(), total));
  c = c.cwiseMax(t0).cwiseMin(c_max);

  Evaluation best;
  Eigen::VectorXd best_c;
  best.residual = std::numeric_limits<double>::infinity();
  int it = 0;
  bool stalled = false;
  const Eigen::Index m = t0.size();

  if (m <= opt.newton_max_links) {
    // Newton on r(c) = zeta(x(c)) - c. Its Jacobian diag(zeta') K - I, with
    // K = sum_w q_w J_w negative semidefinite, is always invertible.
    Evaluation cur = evaluate(c);
    Eigen::VectorXd r = bpr_eval(zeta, cur.flows) - c;
    for (; it < opt.max_iterations; ++it) {
      if (cur.residual < best.residual) {
        best = cur;
        best_c = c;
      }
      if (best.residual <= opt.tolerance) break;
      Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m, m);
      for (std::size_t w = 0; w < n_types; ++w) {
        M -= problem.types[w].q *
             purc_jacobian(type_problem(problem, w, c), cur.solutions[w]).matrix;
      }
      for (Eigen::Index k = 0; k < m; ++k) M.row(k) *= zeta.slope(k, cur.flows(k));
      M.diagonal().array() += 1.0;
      const Eigen::VectorXd dir = M.partialPivLu().solve(r);
      const double r0 = r.norm();
      bool accepted = false;
      double t = 1.0;
      for (int ls = 0; ls < 40 && !accepted; ++ls, t *= 0.5) {
        const Eigen::VectorXd trial_c = (c + t * dir).cwiseMax(t0).cwiseMin(c_max);
        Evaluation trial = evaluate(trial_c);
        const Eigen::VectorXd trial_r = bpr_eval(zeta, trial.flows) - trial_c;
        if (trial_r.norm() <= (1.0 - 1e-4 * t) * r0) {
          accepted = true;
          c = trial_c;
          cur = std::move(trial);
          r = trial_r;
        }
      }
      if (!accepted) {
        stalled = true;
        break;
      }
    }
    if (cur.residual < best.residual) {
      best = cur;
      best_c = c;
    }
    // Kinks in x(c) can stall the line search; mixing continues from the best point.
    if (stalled) c = best_c;
  }

  double step = opt.initial_step;
  std::deque<Eigen::VectorXd> hist_c, hist_f;
  double previous = std::numeric_limits<double>::infinity();
  for (; (m > opt.newton_max_links || stalled) && it < opt.max_iterations; ++it) {
    Evaluation cur = evaluate(c);
    const bool improved = cur.residual < best.residual;
    if (improved) {
      best = std::move(cur);
      best_c = c;
    }
    if (best.residual <= opt.tolerance) break;
    const Evaluation& now = improved ? best : cur;

    if (now.residual > previous) {
      // Residual went up: shorten the step and restart the mixing history.
      step = std::max(step * 0.5, 1.0 / 64.0);
      hist_c.clear();
      hist_f.clear();
    }
    previous = now.residual;

    const Eigen::VectorXd f = bpr_eval(zeta, now.flows) - c;
    hist_c.push_back(c);
    hist_f.push_back(f);
    if (static_cast<int>(hist_c.size()) > opt.anderson_depth + 1) {
      hist_c.pop_front();
      hist_f.pop_front();
    }

    Eigen::VectorXd next = c + step * f;
    const auto depth = static_cast<Eigen::Index>(hist_c.size()) - 1;
    if (opt.anderson_depth > 0 && depth > 0) {
      Eigen::MatrixXd dF(c.size(), depth), dC(c.size(), depth);
      for (Eigen::Index j = 0; j < depth; ++j) {
        dF.col(j) = hist_f[static_cast<std::size_t>(j) + 1] - hist_f[static_cast<std::size_t>(j)];
        dC.col(j) = hist_c[static_cast<std::size_t>(j) + 1] - hist_c[static_cast<std::size_t>(j)];
      }
      const Eigen::VectorXd gamma = dF.colPivHouseholderQr().solve(f);
      if (gamma.allFinite()) {
        const Eigen::VectorXd mixed = c + step * f - (dC + step * dF) * gamma;
        // An ill-conditioned history can extrapolate far outside the cost range.
        if (mixed.allFinite()) next = mixed;
      }
    }
    c = next.cwiseMax(t0).cwiseMin(c_max);
  }

  EquilibriumSolution sol;
  const Evaluation& final_eval = best;
  sol.costs = best_c;
  sol.type_solutions = final_eval.solutions;
  sol.aggregate_flows = final_eval.flows;
  sol.residual = final_eval.residual;
  sol.iterations = it;
  sol.converged = sol.residual <= opt.tolerance && final_eval.inner_converged;
  std::ostringstream msg;
  if (sol.converged) {
    msg << "converged in " << it << " outer iteration(s), residual " << sol.residual;
  } else if (!final_eval.inner_converged) {
    msg << "a per-type route choice solve did not converge; residual " << sol.residual;
  } else {
    msg << "outer iteration limit reached; best residual " << sol.residual;
  }
  sol.message = msg.str();
  return sol;
}

}  // namespace purc
