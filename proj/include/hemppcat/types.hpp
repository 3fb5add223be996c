// Core domain types shared by every module: model parameters, datasets,
// hyperparameters, fit reports, and their validation.

#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hemppcat {

// Noise variances are floored here everywhere a variance is produced or
// validated; keeps likelihoods finite when a group's residual collapses.
inline constexpr double kVarianceFloor = 1e-9;

// Absolute tolerance for the mixing-proportion simplex constraint.
inline constexpr double kSimplexTol = 1e-12;

// Problem sizes. k is the per-component factor rank, J the number of
// mixture components, L the number of noise groups.
struct Hyper {
  int d = 0;
  int k = 0;
  int J = 0;
  int L = 0;
};

// n samples in R^d, each tagged with the noise group it was observed
// under. Group membership is an observed attribute, never inferred.
// Samples are stored as columns. Indices are 0-based in memory and
// 1-based in files.
struct Dataset {
  Eigen::MatrixXd samples;              // d x n, column i = sample i
  Eigen::VectorXi group;                // n, values in [0, L)
  std::optional<Eigen::VectorXi> label; // n, values in [0, J); evaluation only

  int n() const { return static_cast<int>(samples.cols()); }
  int dim() const { return static_cast<int>(samples.rows()); }
  Eigen::VectorXd sample(int i) const { return samples.col(i); }
};

// Heteroscedastic mixture parameters: per-component factors and means,
// per-noise-group variances, mixing proportions.
struct ModelParams {
  std::vector<Eigen::MatrixXd> factors; // J matrices, each d x k
  std::vector<Eigen::VectorXd> means;   // J vectors, each length d
  Eigen::VectorXd noise_vars;           // L, each >= kVarianceFloor
  Eigen::VectorXd weights;              // J, simplex

  int components() const { return static_cast<int>(factors.size()); }
  int groups() const { return static_cast<int>(noise_vars.size()); }
};

// Homoscedastic-per-component mixture parameters (the classical model):
// one noise variance per mixture component instead of per noise group.
struct MppcaParams {
  std::vector<Eigen::MatrixXd> factors; // J matrices, each d x k
  std::vector<Eigen::VectorXd> means;   // J vectors, each length d
  Eigen::VectorXd noise_vars;           // J, each >= kVarianceFloor
  Eigen::VectorXd weights;              // J, simplex

  int components() const { return static_cast<int>(factors.size()); }
};

enum class StopReason { tolerance, max_iters, degenerate };

const char* to_string(StopReason r);

// Per-fit diagnostics. ll_trace holds the observed-data log-likelihood at
// the initial parameters followed by one value per completed sweep; it is
// non-decreasing within 1e-8 * (1 + |LL|) per step.
struct FitReport {
  std::vector<double> ll_trace;
  int iterations = 0;
  bool converged = false;
  StopReason stop_reason = StopReason::max_iters;
  double seconds = 0.0;
};

// Invariant violations: shape mismatches, broken simplex, bad variances.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File problems: missing, truncated, malformed, wrong schema.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fit degeneracies that abort a sweep. The driver converts these into
// stop_reason == degenerate with best-so-far parameters.
class DegenerateError : public std::runtime_error {
 public:
  enum class Kind { empty_component, rank_deficient_moments };

  DegenerateError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

void validate_hyper(const Hyper& hyper);

// Checks every ModelParams invariant against hyper; throws ValidationError
// naming the first violation.
void validate_params(const ModelParams& params, const Hyper& hyper);

// MPPCA variant: noise_vars has length J, no group structure.
void validate_mppca_params(const MppcaParams& params, const Hyper& hyper);

// Group indices in range, every group nonempty, dimensions consistent,
// L <= n, labels (if present) in range.
void validate_dataset(const Dataset& data, const Hyper& hyper);

// Shape-level hyperparameters implied by a parameter set.
Hyper hyper_of(const ModelParams& params);

}  // namespace hemppcat
