// Comparison methods: K-Planes affine subspace clustering, the classical
// mixture-of-PPCA EM (recovered from the generalized sweep by binding the
// noise variance to the mixture component), and K-Means++ seeding.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

#include "hemppcat/types.hpp"

namespace hemppcat {

struct FitOptions;  // driver.hpp

struct KPlanesState {
  std::vector<Eigen::MatrixXd> bases;    // J, d x k, orthonormal columns
  std::vector<Eigen::VectorXd> offsets;  // J
  Eigen::VectorXi assignment;            // n
  double objective = 0.0;                // sum of squared subspace distances
  std::vector<double> objective_trace;   // one entry per refit
  int iterations = 0;
};

// Alternates (a) assignment of each sample to the affine subspace with the
// smallest orthogonal residual (ties to the lowest index) and (b) refit of
// each cluster's offset as its mean and basis as the top-k principal
// directions. Stops early at an assignment fixed point. Emptied clusters
// are re-seeded at the sample with the largest current residual.
KPlanesState kplanes(const Dataset& data, int J, int k, int iters,
                     std::uint64_t seed);

// Same loop warm-started from a given assignment instead of K-Means++.
KPlanesState kplanes_from_assignment(const Dataset& data,
                                     const Eigen::VectorXi& assignment, int J,
                                     int k, int iters);

// Squared orthogonal distance from y to affine subspace j.
double kplanes_residual2(const Eigen::VectorXd& y, const KPlanesState& state, int j);

// Nearest-affine-subspace rule; ties to the lowest index.
int kplanes_assign(const Eigen::VectorXd& y, const KPlanesState& state);

// D^2 seeding: first center uniform, each subsequent one with probability
// proportional to the squared distance to the nearest chosen center.
// Returns J distinct sample indices.
std::vector<int> kmeanspp_seed(const Dataset& data, int J, std::uint64_t seed);

// Initial mixture parameters read off a K-Planes clustering: factors are
// the cluster's principal directions scaled by per-direction sample
// standard deviations, variances come from mean squared residuals.
// Clusters too small for a rank-k fit fall back to the global principal
// structure with a uniform weight share.
MppcaParams mppca_from_kplanes(const Dataset& data, const KPlanesState& state);

// Factor-style estimates for the error metric: U_j scaled by the cluster's
// singular values over sqrt(cluster size - 1), so the gram estimates the
// cluster covariance. No fallback is applied.
std::vector<Eigen::MatrixXd> kplanes_factor_estimates(const Dataset& data,
                                                      const KPlanesState& state);

// Classical EM fit. options.init selects K-Planes (default) or K-Means++
// initialization.
std::pair<MppcaParams, FitReport> mppca_fit(const Dataset& data, int J, int k,
                                            const FitOptions& options);

// Same loop started from explicit parameters.
std::pair<MppcaParams, FitReport> mppca_fit_from(const Dataset& data,
                                                 const MppcaParams& init,
                                                 const FitOptions& options);

// Observed-data log-likelihood and responsibilities under the classical
// model (variance bound to the component, groups ignored).
double mppca_observed_log_likelihood(const Dataset& data, const MppcaParams& params);
Eigen::MatrixXd mppca_responsibilities(const Dataset& data, const MppcaParams& params);

}  // namespace hemppcat
