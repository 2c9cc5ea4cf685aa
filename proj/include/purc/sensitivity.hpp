#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "purc/network.hpp"
#include "purc/purc_solver.hpp"

namespace purc {

/// Links carrying strictly positive optimal flow.
struct ActiveSet {
  std::vector<bool> mask;
  std::size_t count = 0;

  static ActiveSet from_mask(std::vector<bool> mask);
  std::vector<Eigen::Index> indices() const;
  /// Dense diagonal 0/1 matrix.
  Eigen::MatrixXd diagonal() const;
};

ActiveSet active_mask(const PurcSolution& solution, double threshold);
/// Uses the threshold the solver recorded.
ActiveSet active_mask(const PurcSolution& solution);

/// Orthogonal projector onto {x : Ax = 0, x_ij = 0 on inactive links}.
struct Projection {
  Eigen::MatrixXd matrix;
};

/// B - (AB)^+ A B, with the pseudoinverse taken by SVD.
Projection projection(const IncidenceMatrix& A, const ActiveSet& active);

/// B - B A' (B A')^+, evaluated on the full dense matrices.
Eigen::MatrixXd projection_transposed_form(const IncidenceMatrix& A, const ActiveSet& active);

inline constexpr double kDefaultBoundaryTolerance = 1e-7;

/// Proximity of a solved cost point to the activation boundary.
struct BoundaryReport {
  double tolerance = kDefaultBoundaryTolerance;
  /// Active links whose flow is below the tolerance.
  std::vector<std::size_t> vanishing_flow;
  /// Inactive usable links whose reduced cost is within the tolerance of zero.
  std::vector<std::size_t> near_activation;

  bool near_boundary() const { return !vanishing_flow.empty() || !near_activation.empty(); }
  std::string describe(const Network& network) const;
};

BoundaryReport boundary_check(const PurcProblem& problem, const PurcSolution& solution,
                              double tolerance = kDefaultBoundaryTolerance);

/// Above this many active links only directional products are offered.
inline constexpr std::size_t kDenseJacobianLimit = 5000;

struct PurcJacobian {
  /// d x* / d c, |L| x |L|, per unit of demand.
  Eigen::MatrixXd matrix;
  ActiveSet active;
  BoundaryReport boundary;
  /// True when the cost point is near the activation boundary and the
  /// derivative may not exist there.
  bool near_boundary = false;
};

/// -(P H P)^+ with H = diag(F''(x*)).
PurcJacobian purc_jacobian(const PurcProblem& problem, const PurcSolution& solution,
                           const Projection& projection,
                           double boundary_tolerance = kDefaultBoundaryTolerance);

/// Builds the active set and projection from the solution first.
PurcJacobian purc_jacobian(const PurcProblem& problem, const PurcSolution& solution,
                           double boundary_tolerance = kDefaultBoundaryTolerance);

struct DirectionalOptions {
  double relative_tolerance = 1e-13;
  int max_iterations = 0;  // 0 picks a size-based default
};

struct DirectionalResult {
  /// q * (d x*/d c) * delta
  Eigen::VectorXd flow_change;
  int iterations = 0;
  double estimated_error = 0.0;
};

/**
 * Jacobian-vector product without forming the Jacobian.
 *
 * Minimizes y'Hy/2 - delta'y over flows supported on active links with zero
 * divergence. Eliminating y leaves a weighted graph Laplacian system on the
 * node potentials, solved by preconditioned conjugate gradients with one
 * potential pinned per connected component of the active subnetwork.
 */
DirectionalResult directional_sensitivity(const PurcProblem& problem,
                                          const PurcSolution& solution,
                                          const Eigen::VectorXd& delta,
                                          const DirectionalOptions& options = {});

}  // namespace purc
