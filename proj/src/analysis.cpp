#include "purc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <boost/math/distributions/normal.hpp>

#include "purc/errors.hpp"
#include "purc/linalg.hpp"

namespace purc {

ParameterFamily parse_parameter_family(std::string_view name) {
  if (name == "kappa" || name == "capacity") return ParameterFamily::capacity;
  if (name == "t0" || name == "free_flow_time") return ParameterFamily::free_flow_time;
  throw InputError("unknown parameter family '" + std::string(name) +
                   "' (expected kappa or t0)");
}

std::string to_string(ParameterFamily family) {
  return family == ParameterFamily::capacity ? "kappa" : "t0";
}

Eigen::VectorXd parameter_values(const BprFunction& fn, ParameterFamily family) {
  return family == ParameterFamily::capacity ? fn.capacity() : fn.free_flow_time();
}

EquilibriumProblem with_parameters(const EquilibriumProblem& problem, ParameterFamily family,
                                   const Eigen::VectorXd& theta) {
  EquilibriumProblem out = problem;
  out.link_costs = family == ParameterFamily::capacity
                       ? problem.link_costs.with_capacity(theta)
                       : problem.link_costs.with_free_flow_time(theta);
  return out;
}

CostJacobian equilibrium_cost_jacobian(const EquilibriumProblem& problem,
                                       const EquilibriumSolution& solution,
                                       ParameterFamily family) {
  const auto m = static_cast<Eigen::Index>(problem.network->num_links());
  if (solution.costs.size() != m || solution.type_solutions.size() != problem.types.size()) {
    throw InputError("equilibrium solution does not match the problem");
  }
  CostJacobian out;
  out.family = family;
  out.aggregate_flow_cost = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t w = 0; w < problem.types.size(); ++w) {
    const PurcProblem p = type_problem(problem, w, solution.costs);
    out.type_jacobians.push_back(purc_jacobian(p, solution.type_solutions[w]));
    out.near_boundary = out.near_boundary || out.type_jacobians.back().near_boundary;
    out.aggregate_flow_cost += problem.types[w].q * out.type_jacobians.back().matrix;
  }

  const BprFunction& zeta = problem.link_costs;
  const Eigen::VectorXd& x = solution.aggregate_flows;
  Eigen::VectorXd slope(m), d_theta(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double xk = std::max(x(k), 0.0);
    slope(k) = zeta.slope(k, xk);
    d_theta(k) = family == ParameterFamily::capacity ? zeta.d_cost_d_capacity(k, xk)
                                                     : zeta.d_cost_d_free_flow_time(k, xk);
  }
  const Eigen::MatrixXd system =
      Eigen::MatrixXd::Identity(m, m) - slope.asDiagonal() * out.aggregate_flow_cost;
  out.condition_number = condition_number(system);
  if (!std::isfinite(out.condition_number) || out.condition_number > 1e12) {
    throw NumericalError("equilibrium sensitivity system is singular (condition number " +
                         std::to_string(out.condition_number) + ")");
  }
  const Eigen::MatrixXd rhs = d_theta.asDiagonal();
  out.matrix = system.partialPivLu().solve(rhs);
  return out;
}

EquilibriumJacobians equilibrium_flow_jacobian(const EquilibriumProblem& problem,
                                               const CostJacobian& cost_jacobian) {
  if (cost_jacobian.type_jacobians.size() != problem.types.size()) {
    throw InputError("cost Jacobian does not match the problem");
  }
  EquilibriumJacobians out;
  out.family = cost_jacobian.family;
  out.cost = cost_jacobian.matrix;
  out.near_boundary = cost_jacobian.near_boundary;
  for (const auto& jw : cost_jacobian.type_jacobians) {
    out.type_flow.push_back(jw.matrix * cost_jacobian.matrix);
  }
  out.aggregate_flow = cost_jacobian.aggregate_flow_cost * cost_jacobian.matrix;
  return out;
}

ShiftEstimate estimate_shifted_solution(const EquilibriumSolution& solution,
                                        const EquilibriumJacobians& jacobians,
                                        const Eigen::VectorXd& shift) {
  if (shift.size() != jacobians.aggregate_flow.cols()) {
    throw InputError("parameter shift has the wrong length");
  }
  ShiftEstimate out;
  out.flows = solution.aggregate_flows + jacobians.aggregate_flow * shift;
  for (Eigen::Index k = 0; k < out.flows.size(); ++k) {
    if (out.flows(k) < 0.0) {
      out.flows(k) = 0.0;
      out.clamped = true;
    }
  }
  return out;
}

UncertaintyInput independent_uncertainty(const Eigen::VectorXd& mean, double cv, double level) {
  if (!(cv >= 0.0)) throw InputError("coefficient of variation must be non-negative");
  UncertaintyInput in;
  in.mean = mean;
  in.covariance = (cv * mean).array().square().matrix().asDiagonal();
  in.level = level;
  return in;
}

namespace {

void check_covariance(const Eigen::MatrixXd& K) {
  if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, K.cwiseAbs().maxCoeff())) {
    throw InputError("parameter covariance is not symmetric");
  }
  if (K.size() == 0) return;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10) {
    throw InputError("parameter covariance is not positive semidefinite");
  }
}

}  // namespace

UncertaintyResult propagate_uncertainty(const Eigen::VectorXd& flows_at_mean,
                                        const Eigen::MatrixXd& flow_jacobian,
                                        const UncertaintyInput& input) {
  const Eigen::Index m = flow_jacobian.rows();
  const Eigen::Index p = flow_jacobian.cols();
  if (flows_at_mean.size() != m || input.covariance.rows() != p || input.covariance.cols() != p) {
    throw InputError("uncertainty inputs have inconsistent dimensions");
  }
  if (!(input.level > 0.0 && input.level < 1.0)) {
    throw InputError("confidence level must lie strictly between 0 and 1");
  }
  check_covariance(input.covariance);

  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  UncertaintyResult r;
  r.mean = flows_at_mean;
  r.covariance_with_parameters = flow_jacobian * input.covariance;
  r.variance = r.covariance_with_parameters * flow_jacobian.transpose();
  r.variance = 0.5 * (r.variance + r.variance.transpose()).eval();
  r.std_dev = r.variance.diagonal().cwiseMax(0.0).cwiseSqrt();
  r.cv.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) r.cv(i) = r.mean(i) == 0.0 ? nan : r.std_dev(i) / r.mean(i);

  const Eigen::VectorXd theta_std = input.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  r.correlation.resize(m, p);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const double denom = r.std_dev(i) * theta_std(j);
      r.correlation(i, j) = denom > 0.0 ? r.covariance_with_parameters(i, j) / denom : nan;
    }
  }
  r.intervals = confidence_intervals(r.mean, r.std_dev, input.level);
  return r;
}

double two_sided_normal_quantile(double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw InputError("confidence level must lie strictly between 0 and 1");
  }
  const boost::math::normal standard;
  return boost::math::quantile(standard, 0.5 * (1.0 + level));
}

std::vector<Interval> confidence_intervals(const Eigen::VectorXd& mean,
                                           const Eigen::VectorXd& std_dev, double level) {
  if (mean.size() != std_dev.size()) throw InputError("mean and std vectors differ in length");
  const double z = two_sided_normal_quantile(level);
  std::vector<Interval> out(static_cast<std::size_t>(mean.size()));
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    out[static_cast<std::size_t>(i)] = {mean(i) - z * std_dev(i), mean(i) + z * std_dev(i)};
  }
  return out;
}

std::string to_string(Relation relation) {
  switch (relation) {
    case Relation::substitute: return "substitute";
    case Relation::complement: return "complement";
    case Relation::independent: break;
  }
  return "independent";
}

std::vector<LinkPair> substitution_report(const Eigen::MatrixXd& jacobian, double tolerance) {
  if (jacobian.rows() != jacobian.cols()) throw InputError("Jacobian must be square");
  std::vector<LinkPair> pairs;
  for (Eigen::Index a = 0; a < jacobian.rows(); ++a) {
    for (Eigen::Index b = 0; b < jacobian.cols(); ++b) {
      if (a == b) continue;
      LinkPair pair{static_cast<std::size_t>(a), static_cast<std::size_t>(b), jacobian(a, b),
                    Relation::independent};
      if (pair.derivative > tolerance) {
        pair.relation = Relation::substitute;
      } else if (pair.derivative < -tolerance) {
        pair.relation = Relation::complement;
      }
      pairs.push_back(pair);
    }
  }
  return pairs;
}

}  // namespace purc
