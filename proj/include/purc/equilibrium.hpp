#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "purc/network.hpp"
#include "purc/perturbation.hpp"
#include "purc/purc_solver.hpp"

namespace purc {

/// BPR link cost t0 * (1 + alpha * (x / capacity)^beta), one per link.
class BprFunction {
 public:
  BprFunction(Eigen::VectorXd free_flow_time, Eigen::VectorXd capacity, double alpha = 0.15,
              double beta = 4.0);
  static BprFunction for_network(const Network& network, double alpha = 0.15, double beta = 4.0);

  Eigen::Index size() const { return free_flow_time_.size(); }
  const Eigen::VectorXd& free_flow_time() const { return free_flow_time_; }
  const Eigen::VectorXd& capacity() const { return capacity_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

  /// Copy with one parameter family replaced.
  BprFunction with_free_flow_time(Eigen::VectorXd t0) const;
  BprFunction with_capacity(Eigen::VectorXd capacity) const;

  double cost(Eigen::Index k, double flow) const;
  /// d cost / d flow
  double slope(Eigen::Index k, double flow) const;
  double d_cost_d_free_flow_time(Eigen::Index k, double flow) const;
  double d_cost_d_capacity(Eigen::Index k, double flow) const;
  /// capacity * ((c - t0) / (alpha t0))^(1/beta); 0 at or below free flow.
  double inverse(Eigen::Index k, double cost) const;

 private:
  Eigen::VectorXd free_flow_time_;
  Eigen::VectorXd capacity_;
  double alpha_;
  double beta_;
};

/// Link costs at the given flows; throws InputError on negative flow.
Eigen::VectorXd bpr_eval(const BprFunction& fn, const Eigen::VectorXd& flows);

struct BprInverse {
  Eigen::VectorXd flows;
  /// Costs strictly below free-flow time (inverse reported as 0).
  std::vector<bool> below_free_flow;
};

BprInverse bpr_inverse(const BprFunction& fn, const Eigen::VectorXd& costs);

/// Partial derivatives of the inverse cost function, link by link.
struct BprInverseDerivatives {
  Eigen::VectorXd d_cost;
  Eigen::VectorXd d_free_flow_time;
  Eigen::VectorXd d_capacity;
  /// Costs at or below free flow, where d_cost is infinite.
  std::vector<bool> singular;
};

BprInverseDerivatives bpr_inverse_derivs(const BprFunction& fn, const Eigen::VectorXd& costs);

struct TravelerType {
  DemandVector demand;
  double q = 1.0;
};

struct EquilibriumOptions {
  /// Bound on |zeta^{-1}(c) - x*(c)|_inf at termination.
  double tolerance = 1e-8;
  int max_iterations = 1000;
  double initial_step = 0.5;
  int anderson_depth = 5;
  /// Newton steps with dense Jacobians up to this many links; damped
  /// Anderson mixing beyond.
  Eigen::Index newton_max_links = 2000;
  int threads = 1;
  SolverOptions purc{};
};

struct EquilibriumProblem {
  std::shared_ptr<const Network> network;
  std::vector<TravelerType> types;
  Perturbation perturbation;
  BprFunction link_costs;
  EquilibriumOptions options{};
  std::optional<Eigen::VectorXd> initial_costs{};
};

struct EquilibriumSolution {
  Eigen::VectorXd costs;
  std::vector<PurcSolution> type_solutions;
  Eigen::VectorXd aggregate_flows;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// Per-type PURC problem at the given link costs.
PurcProblem type_problem(const EquilibriumProblem& problem, std::size_t type,
                         const Eigen::VectorXd& costs);

/// sum_w q^w x^w
Eigen::VectorXd aggregate_flows(const std::vector<Eigen::VectorXd>& per_type,
                                const std::vector<double>& q);

/**
 * Damped fixed-point iteration c <- (1 - g) c + g zeta(x*(c)) with Anderson
 * mixing. Per-type PURC solves run in parallel and are warm-started from
 * the previous iterate. Non-convergence returns the last iterate.
 */
EquilibriumSolution solve_equilibrium(const EquilibriumProblem& problem);

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace purc
