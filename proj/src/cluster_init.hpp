// Internal helpers shared by the clustering-based initializers.

#pragma once

#include <Eigen/Dense>

#include <vector>

#include "hemppcat/types.hpp"

namespace hemppcat::detail {

// Top-k principal directions of a set of samples (columns) about a given
// center, with per-direction sample standard deviations and the pooled
// squared residual outside the span.
struct PrincipalFit {
  Eigen::MatrixXd directions;  // d x k, orthonormal, descending variance
  Eigen::VectorXd stddev;      // k, sample std along each direction
  double resid2_sum = 0.0;     // total squared residual off the subspace
};

PrincipalFit principal_fit(const Eigen::MatrixXd& members, const Eigen::VectorXd& mu,
                           int k);

// Nearest-center assignment (squared Euclidean, ties to the lowest index).
// Each center's own sample is pinned to its cluster so none starts empty.
Eigen::VectorXi assign_nearest_center(const Dataset& data,
                                      const std::vector<int>& centers);

// K-Means (Lloyd) refinement of the D^2-seeded centers; balances the
// clusters before any subspace fitting. Emptied clusters are re-seeded at
// the sample farthest from its centroid.
Eigen::VectorXi lloyd_assignment(const Dataset& data, const std::vector<int>& centers,
                                 int max_iters);

}  // namespace hemppcat::detail
