#include "purc/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>

#include "purc/linalg.hpp"

namespace purc {

ActiveSet ActiveSet::from_mask(std::vector<bool> mask) {
  ActiveSet set;
  set.count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  set.mask = std::move(mask);
  return set;
}

std::vector<Eigen::Index> ActiveSet::indices() const {
  std::vector<Eigen::Index> idx;
  idx.reserve(count);
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k]) idx.push_back(static_cast<Eigen::Index>(k));
  }
  return idx;
}

Eigen::MatrixXd ActiveSet::diagonal() const {
  const auto m = static_cast<Eigen::Index>(mask.size());
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    if (mask[static_cast<std::size_t>(k)]) B(k, k) = 1.0;
  }
  return B;
}

ActiveSet active_mask(const PurcSolution& solution, double threshold) {
  std::vector<bool> mask(static_cast<std::size_t>(solution.flows.size()));
  for (Eigen::Index k = 0; k < solution.flows.size(); ++k) {
    mask[static_cast<std::size_t>(k)] = solution.flows(k) > threshold;
  }
  return ActiveSet::from_mask(std::move(mask));
}

ActiveSet active_mask(const PurcSolution& solution) {
  return active_mask(solution, solution.activity_threshold);
}

Projection projection(const IncidenceMatrix& A, const ActiveSet& active) {
  if (static_cast<std::size_t>(A.cols()) != active.mask.size()) {
    throw InputError("projection: active mask does not match incidence matrix");
  }
  const Eigen::Index m = A.cols();
  const auto idx = active.indices();
  const auto k = static_cast<Eigen::Index>(idx.size());

  // AB has zero columns off the active set, so (AB)^+ has zero rows there and
  // the projector can be assembled from the active block alone.
  const Eigen::MatrixXd dense = A;
  Eigen::MatrixXd A_active(A.rows(), k);
  for (Eigen::Index j = 0; j < k; ++j) A_active.col(j) = dense.col(idx[j]);
  const Eigen::MatrixXd block = Eigen::MatrixXd::Identity(k, k) -
                                pseudo_inverse(A_active, kRelativeRankCutoff, 1.0) * A_active;

  Projection P;
  P.matrix = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) P.matrix(idx[i], idx[j]) = block(i, j);
  }
  return P;
}

Eigen::MatrixXd projection_transposed_form(const IncidenceMatrix& A, const ActiveSet& active) {
  const Eigen::MatrixXd B = active.diagonal();
  const Eigen::MatrixXd BAt = B * Eigen::MatrixXd(A).transpose();
  return B - BAt * pseudo_inverse(BAt, kRelativeRankCutoff, 1.0);
}

std::string BoundaryReport::describe(const Network& network) const {
  if (!near_boundary()) return "clear of the activation boundary";
  std::ostringstream os;
  os << "near the activation boundary (tolerance " << tolerance << ")";
  if (!vanishing_flow.empty()) {
    os << "; vanishing flow on";
    for (auto k : vanishing_flow) os << ' ' << network.link(k).id;
  }
  if (!near_activation.empty()) {
    os << "; about to activate:";
    for (auto k : near_activation) os << ' ' << network.link(k).id;
  }
  return os.str();
}

BoundaryReport boundary_check(const PurcProblem& problem, const PurcSolution& solution,
                              double tolerance) {
  BoundaryReport report;
  report.tolerance = tolerance;
  const Eigen::VectorXd slack = reduced_costs(problem, solution);
  for (std::size_t k = 0; k < solution.active.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    if (solution.active[k]) {
      if (solution.flows(kk) < tolerance) report.vanishing_flow.push_back(k);
    } else if (solution.usable[k] && std::abs(slack(kk)) < tolerance) {
      report.near_activation.push_back(k);
    }
  }
  return report;
}

PurcJacobian purc_jacobian(const PurcProblem& problem, const PurcSolution& solution,
                           const Projection& projection, double boundary_tolerance) {
  const auto m = static_cast<Eigen::Index>(solution.flows.size());
  if (projection.matrix.rows() != m || projection.matrix.cols() != m) {
    throw InputError("purc_jacobian: projection has the wrong dimension");
  }
  PurcJacobian jac;
  jac.active = ActiveSet::from_mask(solution.active);
  if (jac.active.count > kDenseJacobianLimit) {
    throw InputError("dense Jacobian requested for " + std::to_string(jac.active.count) +
                     " active links; use directional sensitivity instead");
  }
  jac.boundary = boundary_check(problem, solution, boundary_tolerance);
  jac.near_boundary = jac.boundary.near_boundary();

  // P is zero off the active block, so (P H P)^+ is too.
  const auto idx = jac.active.indices();
  const auto k = static_cast<Eigen::Index>(idx.size());
  Eigen::VectorXd h(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    h(i) = problem.perturbation.link_second_derivative(idx[i], solution.flows(idx[i]));
  }
  const Eigen::MatrixXd P_active = projection.matrix(idx, idx);
  const Eigen::MatrixXd PHP = P_active * h.asDiagonal() * P_active;
  Eigen::MatrixXd block =
      -pseudo_inverse(PHP, kRelativeRankCutoff, k > 0 ? h.cwiseAbs().maxCoeff() : 0.0);
  block = 0.5 * (block + block.transpose()).eval();

  jac.matrix = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) jac.matrix(idx[i], idx[j]) = block(i, j);
  }
  return jac;
}

PurcJacobian purc_jacobian(const PurcProblem& problem, const PurcSolution& solution,
                           double boundary_tolerance) {
  const IncidenceMatrix A = build_incidence(*problem.network);
  return purc_jacobian(problem, solution, projection(A, ActiveSet::from_mask(solution.active)),
                       boundary_tolerance);
}

namespace {

struct DisjointSets {
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<std::size_t> parent;
};

}  // namespace

DirectionalResult directional_sensitivity(const PurcProblem& problem,
                                          const PurcSolution& solution,
                                          const Eigen::VectorXd& delta,
                                          const DirectionalOptions& options) {
  const Network& net = *problem.network;
  const auto m = static_cast<Eigen::Index>(net.num_links());
  if (delta.size() != m) throw InputError("cost perturbation has the wrong length");

  DirectionalResult result;
  result.flow_change = Eigen::VectorXd::Zero(m);

  DisjointSets sets(net.num_nodes());
  std::vector<bool> touched(net.num_nodes(), false);
  Eigen::VectorXd inv_h = Eigen::VectorXd::Zero(m);
  for (std::size_t k = 0; k < net.num_links(); ++k) {
    if (!solution.active[k]) continue;
    const auto kk = static_cast<Eigen::Index>(k);
    inv_h(kk) = 1.0 / problem.perturbation.link_second_derivative(kk, solution.flows(kk));
    sets.unite(net.tail(k), net.head(k));
    touched[net.tail(k)] = touched[net.head(k)] = true;
  }

  // Unknown potentials: every touched node except its component's root.
  std::vector<Eigen::Index> unknown(net.num_nodes(), -1);
  Eigen::Index n = 0;
  for (std::size_t v = 0; v < net.num_nodes(); ++v) {
    if (touched[v] && sets.find(v) != v) unknown[v] = n++;
  }

  Eigen::VectorXd potential = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_nodes()));
  if (n > 0) {
    std::vector<Eigen::Triplet<double>> entries;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < net.num_links(); ++k) {
      if (!solution.active[k]) continue;
      const auto kk = static_cast<Eigen::Index>(k);
      const double w = inv_h(kk);
      const Eigen::Index t = unknown[net.tail(k)], h = unknown[net.head(k)];
      if (t >= 0) {
        entries.emplace_back(t, t, w);
        rhs(t) -= w * delta(kk);
      }
      if (h >= 0) {
        entries.emplace_back(h, h, w);
        rhs(h) += w * delta(kk);
      }
      if (t >= 0 && h >= 0) {
        entries.emplace_back(t, h, -w);
        entries.emplace_back(h, t, -w);
      }
    }
    Eigen::SparseMatrix<double> L(n, n);
    L.setFromTriplets(entries.begin(), entries.end());

    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(options.relative_tolerance);
    cg.setMaxIterations(options.max_iterations > 0
                            ? options.max_iterations
                            : static_cast<int>(std::max<Eigen::Index>(10 * n, 1000)));
    cg.compute(L);
    const Eigen::VectorXd eta = cg.solve(rhs);
    result.iterations = static_cast<int>(cg.iterations());
    result.estimated_error = cg.error();
    if (cg.info() != Eigen::Success && cg.error() > 1e3 * options.relative_tolerance) {
      throw NumericalError("directional sensitivity: conjugate gradients did not converge (error " +
                           std::to_string(cg.error()) + ")");
    }
    for (std::size_t v = 0; v < net.num_nodes(); ++v) {
      if (unknown[v] >= 0) potential(static_cast<Eigen::Index>(v)) = eta(unknown[v]);
    }
  }

  for (std::size_t k = 0; k < net.num_links(); ++k) {
    if (!solution.active[k]) continue;
    const auto kk = static_cast<Eigen::Index>(k);
    const double divergence_free = delta(kk) - potential(static_cast<Eigen::Index>(net.head(k))) +
                                   potential(static_cast<Eigen::Index>(net.tail(k)));
    result.flow_change(kk) = -problem.demand_scale * inv_h(kk) * divergence_free;
  }
  return result;
}

}  // namespace purc
