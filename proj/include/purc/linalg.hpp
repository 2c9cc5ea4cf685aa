#pragma once

#include <Eigen/Core>

namespace purc {

/// Singular values at or below this fraction of the largest are treated as zero.
inline constexpr double kRelativeRankCutoff = 1e-10;

/// Moore-Penrose pseudoinverse by SVD. Singular values at or below
/// relative_cutoff * max(largest singular value, reference_scale) are dropped;
/// reference_scale keeps pure round-off from being inverted when m should be 0.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m,
                               double relative_cutoff = kRelativeRankCutoff,
                               double reference_scale = 0.0);

Eigen::Index numerical_rank(const Eigen::MatrixXd& m,
                            double relative_cutoff = kRelativeRankCutoff);

/// Ratio of largest to smallest singular value; infinity when singular.
double condition_number(const Eigen::MatrixXd& m);

/// Largest eigenvalue of a symmetric matrix.
double max_eigenvalue(const Eigen::MatrixXd& symmetric);

}  // namespace purc
