// Fit-loop orchestration: initialization, E/M iteration, convergence
// detection, and likelihood-trace recording.

#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include "hemppcat/baselines.hpp"
#include "hemppcat/types.hpp"

namespace hemppcat {

enum class InitMethod {
  mppca,           // K-Planes -> classical EM -> map to group variances
  kplanes,         // K-Planes clustering only
  kmeanspp,        // K-Means++ clusters with per-cluster principal directions
  explicit_params  // caller-supplied parameters
};

struct FitOptions {
  int max_iters = 500;
  double rel_tol = 1e-7;  // on the relative log-likelihood change
  InitMethod init = InitMethod::mppca;
  std::uint64_t seed = 0;
  std::optional<ModelParams> init_params;  // required for explicit_params
};

// Maximizes the observed-data log-likelihood by generalized EM. The
// returned trace is non-decreasing; converged is true iff the relative
// change dropped below rel_tol before max_iters. Degeneracies surface as
// stop_reason == degenerate with the best parameters seen.
std::pair<ModelParams, FitReport> fit(const Dataset& data, const Hyper& hyper,
                                      const FitOptions& options);

// The initialization chain: 1000 iterations of K-Planes, classical EM to
// convergence, then the final estimates mapped to the heteroscedastic
// parameterization.
ModelParams init_from_mppca(const Dataset& data, const Hyper& hyper,
                            std::uint64_t seed);

// K-Means++ cluster seeding: means from clusters, factors from per-cluster
// principal directions, group variances from pooled per-group residuals.
ModelParams init_from_kmeanspp(const Dataset& data, const Hyper& hyper,
                               std::uint64_t seed);

// Maps classical-EM estimates onto the heteroscedastic form: factors,
// means and proportions are copied; each group variance is the
// responsibility-weighted average of the per-component variances over the
// group's samples.
ModelParams hemppcat_from_mppca(const Dataset& data, const Hyper& hyper,
                                const MppcaParams& params);

}  // namespace hemppcat
