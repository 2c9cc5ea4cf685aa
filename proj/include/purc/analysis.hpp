#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "purc/equilibrium.hpp"
#include "purc/sensitivity.hpp"

namespace purc {

/// Which per-link BPR parameter plays the role of theta.
enum class ParameterFamily { free_flow_time, capacity };

ParameterFamily parse_parameter_family(std::string_view name);
std::string to_string(ParameterFamily family);

/// Current parameter vector of the given family, in link order.
Eigen::VectorXd parameter_values(const BprFunction& fn, ParameterFamily family);
/// Copy of the problem with the parameter vector replaced.
EquilibriumProblem with_parameters(const EquilibriumProblem& problem, ParameterFamily family,
                                   const Eigen::VectorXd& theta);

struct CostJacobian {
  ParameterFamily family = ParameterFamily::capacity;
  /// d c* / d theta
  Eigen::MatrixXd matrix;
  /// Per-type d x^w / d c at c*, per unit of demand.
  std::vector<PurcJacobian> type_jacobians;
  /// sum_w q^w d x^w / d c
  Eigen::MatrixXd aggregate_flow_cost;
  double condition_number = 1.0;
  bool near_boundary = false;
};

/**
 * Sensitivity of equilibrium costs to link-cost parameters.
 *
 * Solves [grad_c zeta^{-1} - grad x*(c*)] dc = -grad_theta zeta^{-1} after
 * multiplying each row by zeta'(x*). The scaled system
 * [I - diag(zeta') grad x*] dc = diag(d zeta / d theta) has the same
 * solution wherever link flows are positive and stays finite on links at
 * free flow, where d zeta^{-1}/dc is unbounded.
 */
CostJacobian equilibrium_cost_jacobian(const EquilibriumProblem& problem,
                                       const EquilibriumSolution& solution,
                                       ParameterFamily family);

struct EquilibriumJacobians {
  ParameterFamily family = ParameterFamily::capacity;
  Eigen::MatrixXd cost;
  /// d x^w / d theta, per unit of demand.
  std::vector<Eigen::MatrixXd> type_flow;
  /// sum_w q^w d x^w / d theta
  Eigen::MatrixXd aggregate_flow;
  bool near_boundary = false;
};

EquilibriumJacobians equilibrium_flow_jacobian(const EquilibriumProblem& problem,
                                               const CostJacobian& cost_jacobian);

struct ShiftEstimate {
  Eigen::VectorXd flows;
  /// Set when slightly negative first-order estimates were clamped to 0.
  bool clamped = false;
};

/// First-order estimate x*(theta) + grad x*(theta) eps.
ShiftEstimate estimate_shifted_solution(const EquilibriumSolution& solution,
                                        const EquilibriumJacobians& jacobians,
                                        const Eigen::VectorXd& shift);

struct UncertaintyInput {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  double level = 0.90;
};

/// Independent parameters with a common coefficient of variation.
UncertaintyInput independent_uncertainty(const Eigen::VectorXd& mean, double cv,
                                         double level = 0.90);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Delta-method moments of equilibrium flows. NaN marks undefined entries
/// (coefficient of variation at zero mean, correlation with zero spread).
struct UncertaintyResult {
  Eigen::VectorXd mean;
  Eigen::MatrixXd variance;
  Eigen::MatrixXd covariance_with_parameters;
  Eigen::MatrixXd correlation;
  Eigen::VectorXd std_dev;
  Eigen::VectorXd cv;
  std::vector<Interval> intervals;
};

UncertaintyResult propagate_uncertainty(const Eigen::VectorXd& flows_at_mean,
                                        const Eigen::MatrixXd& flow_jacobian,
                                        const UncertaintyInput& input);

/// Two-sided standard normal quantile z with P(|Z| <= z) = level.
double two_sided_normal_quantile(double level);

std::vector<Interval> confidence_intervals(const Eigen::VectorXd& mean,
                                           const Eigen::VectorXd& std_dev, double level);

enum class Relation { substitute, complement, independent };
std::string to_string(Relation relation);

inline constexpr double kClassificationTolerance = 1e-6;

/// Effect of a cost increase on link `changed` on the flow of link `affected`.
struct LinkPair {
  std::size_t affected = 0;
  std::size_t changed = 0;
  double derivative = 0.0;
  Relation relation = Relation::independent;
};

/// Classifies every ordered off-diagonal pair by the sign of J(affected, changed).
std::vector<LinkPair> substitution_report(const Eigen::MatrixXd& jacobian,
                                          double tolerance = kClassificationTolerance);

}  // namespace purc
