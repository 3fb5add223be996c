// Seeded synthetic-data generation: mixture sampling with per-group noise,
// Haar-uniform subspace bases, and trajectory-file ingestion with the
// grouped-SNR noise protocol.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hemppcat/rng.hpp"
#include "hemppcat/types.hpp"

namespace hemppcat {

// Generative configuration. Factors are drawn as F_j = U_j diag(lambda)^1/2
// with U_j Haar-uniform on the Stiefel manifold; means are i.i.d. uniform
// on [0,1] per coordinate; counts(l, j) samples are emitted for each
// (group, component) cell in row-major cell order.
struct SynthConfig {
  int n = 0;
  int d = 0;
  int k = 0;
  int J = 0;
  int L = 0;
  Eigen::VectorXd lambda;      // k, positive non-increasing factor spectrum
  Eigen::VectorXd group_vars;  // L, noise variance per group (0 allowed here)
  Eigen::MatrixXi counts;      // L x J, entries >= 0, sums to n
  std::uint64_t seed = 0;
};

void validate_synth_config(const SynthConfig& config);

// Haar-uniform d x k matrix with orthonormal columns (QR of an i.i.d.
// Gaussian matrix with the R diagonal sign-fixed).
Eigen::MatrixXd random_stiefel(int d, int k, Rng& rng);

struct GroundTruth {
  Dataset data;      // carries group indices and true labels
  ModelParams truth; // the generating parameters
};

// Ground-truth parameters alone (factors, means, variances, proportions
// from cell counts).
ModelParams sample_model(const SynthConfig& config, Rng& rng);

// Samples y = F_j z + mu_j + eps with z ~ N(0, I_k), eps ~ N(0, v_l I_d),
// exactly counts(l, j) samples per cell.
Dataset sample_dataset(const SynthConfig& config, const ModelParams& truth, Rng& rng);

// sample_model and sample_dataset on streams forked from config.seed.
GroundTruth generate(const SynthConfig& config);

// Grouped noise synthesis for trajectory data: group l receives variance
// v_l = (max_i ||y_i||_2)^2 * 10^(snr_db[l]/10); trajectories are split
// into groups by a seeded permutation with the given shares.
struct TrajectoryNoise {
  std::vector<double> snr_db;
  std::vector<double> shares;  // nonnegative, sums to 1
  std::uint64_t seed = 0;
};

TrajectoryNoise default_trajectory_noise(std::uint64_t seed);

// Reads a `point_id,frame,x,y,body` CSV of tracked feature points into
// stacked 2F-dimensional trajectory samples with body labels. Without a
// noise config the dataset is returned unchanged in a single group.
Dataset ingest_trajectories(const std::string& path,
                            const std::optional<TrajectoryNoise>& noise = {});

// The noise protocol alone, applied to an already-ingested dataset.
// Zero-share groups are dropped; remaining groups are renumbered.
Dataset apply_group_noise(const Dataset& data, const TrajectoryNoise& noise);

// Writes a dataset whose dimension is 2F back out as a trajectory CSV
// (labels required; coordinates round-trip bitwise).
void write_trajectory_csv(const std::string& path, const Dataset& data);

}  // namespace hemppcat
