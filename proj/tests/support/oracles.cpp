#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/LU>
#include <Eigen/SVD>

namespace purc::testing {

Eigen::MatrixXd fd_flow_jacobian(const PurcProblem& problem, double h) {
  const PurcSolution base = solve_purc(problem);
  const Eigen::Index m = problem.cost.size();
  Eigen::MatrixXd J(m, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    PurcProblem plus = problem, minus = problem;
    plus.cost(k) += h;
    minus.cost(k) -= h;
    plus.initial_duals = base.duals;
    minus.initial_duals = base.duals;
    J.col(k) = (solve_purc(plus).flows - solve_purc(minus).flows) / (2.0 * h);
  }
  return J;
}

Eigen::MatrixXd kkt_flow_jacobian(const PurcProblem& problem, const PurcSolution& solution) {
  const Eigen::MatrixXd A = build_incidence(*problem.network);
  const Eigen::Index m = A.cols();
  std::vector<Eigen::Index> idx;
  for (Eigen::Index k = 0; k < m; ++k) {
    if (solution.active[static_cast<std::size_t>(k)]) idx.push_back(k);
  }
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd AB(A.rows(), n);
  Eigen::VectorXd h(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    AB.col(i) = A.col(idx[i]);
    h(i) = problem.perturbation.link_second_derivative(idx[i], solution.flows(idx[i]));
  }
  // Drop dependent conservation rows, keeping an equivalent full-rank system.
  const ReducedConstraints rc = reduce_constraints(AB, Eigen::VectorXd::Zero(A.rows()));
  const Eigen::MatrixXd& C = rc.C;
  const Eigen::Index r = C.rows();

  // [H C'; C 0] [dy; dl] = [-e_k; 0]
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + r, n + r);
  K.topLeftCorner(n, n) = h.asDiagonal();
  K.topRightCorner(n, r) = C.transpose();
  K.bottomLeftCorner(r, n) = C;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + r, n);
  rhs.topRows(n) = -Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd sol = K.fullPivLu().solve(rhs);

  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) J(idx[i], idx[j]) = sol(i, j);
  }
  return J;
}

Eigen::MatrixXd nullspace_projection(const Eigen::MatrixXd& A, const std::vector<bool>& active) {
  const Eigen::Index m = A.cols();
  std::vector<Eigen::Index> idx;
  for (Eigen::Index k = 0; k < m; ++k) {
    if (active[static_cast<std::size_t>(k)]) idx.push_back(k);
  }
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(m, m);
  if (n == 0) return P;
  Eigen::MatrixXd AB(A.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) AB.col(i) = A.col(idx[i]);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(AB, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) rank += s(i) > 1e-9 * std::max(1.0, s(0));
  const Eigen::MatrixXd N = svd.matrixV().rightCols(n - rank);
  const Eigen::MatrixXd block = N * N.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) P(idx[i], idx[j]) = block(i, j);
  }
  return P;
}

Eigen::VectorXd fd_value_gradient(const PurcProblem& problem, double h) {
  const Eigen::Index m = problem.cost.size();
  Eigen::VectorXd g(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    PurcProblem plus = problem, minus = problem;
    plus.cost(k) += h;
    minus.cost(k) -= h;
    // W(-c) = -value at cost c, so dW(-c)/d(-c_k) = (W(-c + h e) - W(-c - h e)) / 2h.
    const double w_at_minus_c_plus = value_function(minus, solve_purc(minus));
    const double w_at_minus_c_minus = value_function(plus, solve_purc(plus));
    g(k) = (w_at_minus_c_plus - w_at_minus_c_minus) / (2.0 * h);
  }
  return g;
}

EquilibriumDifferences fd_equilibrium(const EquilibriumProblem& problem,
                                      const EquilibriumSolution& at, ParameterFamily family,
                                      double rel) {
  const Eigen::VectorXd theta = parameter_values(problem.link_costs, family);
  const Eigen::Index m = theta.size();
  EquilibriumDifferences d{Eigen::MatrixXd(m, m), Eigen::MatrixXd(m, m)};
  for (Eigen::Index k = 0; k < m; ++k) {
    const double h = rel * theta(k);
    Eigen::VectorXd tp = theta, tm = theta;
    tp(k) += h;
    tm(k) -= h;
    EquilibriumProblem pp = with_parameters(problem, family, tp);
    EquilibriumProblem pm = with_parameters(problem, family, tm);
    pp.initial_costs = at.costs;
    pm.initial_costs = at.costs;
    pp.options.tolerance = pm.options.tolerance = 1e-12;
    const EquilibriumSolution sp = solve_equilibrium(pp), sm = solve_equilibrium(pm);
    d.cost.col(k) = (sp.costs - sm.costs) / (2.0 * h);
    d.flow.col(k) = (sp.aggregate_flows - sm.aggregate_flows) / (2.0 * h);
  }
  return d;
}

MonteCarloResult monte_carlo_flows(const EquilibriumProblem& problem,
                                   const EquilibriumSolution& at, ParameterFamily family,
                                   double cv, int samples, std::uint64_t seed) {
  const Eigen::VectorXd mu = parameter_values(problem.link_costs, family);
  const Eigen::Index m = mu.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  // Welford accumulation.
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(at.aggregate_flows.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(mean.size());
  MonteCarloResult r;
  int count = 0;
  EquilibriumProblem p = problem;
  p.initial_costs = at.costs;
  // Near free flow the inverse cost is steep enough that one ulp of cost moves
  // the flow residual by ~1e-8; that is far below the sampling noise.
  p.options.tolerance = std::max(p.options.tolerance, 1e-7);
  for (int s = 0; s < samples; ++s) {
    Eigen::VectorXd theta(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      double v;
      do {
        v = mu(k) * (1.0 + cv * z(rng));
      } while (!(v > 0.0));
      theta(k) = v;
    }
    p.link_costs = family == ParameterFamily::capacity
                       ? problem.link_costs.with_capacity(theta)
                       : problem.link_costs.with_free_flow_time(theta);
    const EquilibriumSolution sol = solve_equilibrium(p);
    if (!sol.converged) {
      ++r.failures;
      continue;
    }
    ++count;
    const Eigen::VectorXd delta = sol.aggregate_flows - mean;
    mean += delta / count;
    m2 += delta.cwiseProduct(sol.aggregate_flows - mean);
  }
  r.mean = mean;
  r.variance = m2 / std::max(1, count - 1);
  return r;
}

double relative_mismatch(const Eigen::MatrixXd& value, const Eigen::MatrixXd& reference,
                         double floor) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < reference.rows(); ++i) {
    for (Eigen::Index j = 0; j < reference.cols(); ++j) {
      const double ref = reference(i, j);
      const double diff = std::abs(value(i, j) - ref);
      worst = std::max(worst, std::abs(ref) > floor ? diff / std::abs(ref) : diff);
    }
  }
  return worst;
}

}  // namespace purc::testing
