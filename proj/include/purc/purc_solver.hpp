#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "purc/network.hpp"
#include "purc/perturbation.hpp"

namespace purc {

struct SolverOptions {
  /// Stop when |A x - b|_inf falls below this.
  double feasibility_tolerance = 1e-10;
  /// Stop when the first-order residual on active links falls below this.
  double stationarity_tolerance = 1e-8;
  int max_iterations = 200;
  /// A link is active when x > activity_tolerance * max(1, |x|_inf).
  double activity_tolerance = 1e-9;
};

/// One traveler type: minimize c'x + F(x) subject to Ax = b, x >= 0.
struct PurcProblem {
  std::shared_ptr<const Network> network;
  Eigen::VectorXd cost;
  DemandVector demand;
  /// Number of travelers of this type; solutions are per unit of demand.
  double demand_scale = 1.0;
  Perturbation perturbation;
  SolverOptions options{};
  /// Optional warm start for the node potentials.
  std::optional<Eigen::VectorXd> initial_duals{};
};

struct PurcSolution {
  Eigen::VectorXd flows;
  /// Node potentials with the destination fixed at 0. NaN on nodes that are
  /// not on any origin-destination walk (their potential is not identified).
  Eigen::VectorXd duals;
  std::vector<bool> active;
  /// Links that lie on some origin-destination walk.
  std::vector<bool> usable;
  double activity_threshold = 0.0;
  double objective = 0.0;
  double feasibility_residual = 0.0;
  double stationarity_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;

  std::size_t active_count() const;
};

/// Semismooth Newton on the node potentials. Throws InputError when the
/// destination is unreachable; non-convergence is reported in the solution.
PurcSolution solve_purc(const PurcProblem& problem);

/// c'x + F(x)
double purc_objective(const PurcProblem& problem, const Eigen::VectorXd& flows);

/// W(-c) = -(c'x* + F(x*)), the optimal value of the maximization form.
double value_function(const PurcProblem& problem, const PurcSolution& solution);

/// |P (c + grad F(x))|_inf for a given projection matrix P.
double projected_foc_residual(const PurcProblem& problem, const Eigen::VectorXd& flows,
                              const Eigen::MatrixXd& projection);

/// eta_i - eta_j - c_ij per link: equals F'(x) on active links and is <= 0 on
/// inactive ones at optimum. NaN on links that are not usable.
Eigen::VectorXd reduced_costs(const PurcProblem& problem, const PurcSolution& solution);

}  // namespace purc
