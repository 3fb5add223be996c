// Metrics and the experiment harness: gram-level factor error, maximum-
// likelihood classification, permutation-aligned misclassification, and
// the v1 sweep that compares K-Planes, the classical EM and the
// heteroscedastic fit on replicated synthetic datasets.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hemppcat/baselines.hpp"
#include "hemppcat/synthgen.hpp"
#include "hemppcat/types.hpp"

namespace hemppcat {

// ||Fh Fh^T - F F^T||_F / ||F F^T||_F; invariant to right-orthogonal
// transforms of either argument. Errors when F is zero.
double factor_error(const Eigen::MatrixXd& F_hat, const Eigen::MatrixXd& F_true);

// argmax_j log pi_j + log p(y | j); ties go to the lowest index. The
// heteroscedastic rule needs the sample's noise group; the classical rule
// has no group concept.
int classify(const Eigen::VectorXd& y, int group, const ModelParams& params);
int classify(const Eigen::VectorXd& y, const MppcaParams& params);

Eigen::VectorXi classify_all(const Dataset& data, const ModelParams& params);
Eigen::VectorXi classify_all(const Dataset& data, const MppcaParams& params);
// Nearest-affine-subspace rule.
Eigen::VectorXi classify_all(const Dataset& data, const KPlanesState& state);

// Fraction of mismatches. With align=true the error is minimized over all
// label permutations (J <= 8), which handles unordered fitted components.
double misclassification_rate(const Eigen::VectorXi& predictions,
                              const Eigen::VectorXi& labels, bool align);

// Permutation of fitted components minimizing the total factor error
// against the ground truth; result[t] is the fitted index for truth t.
std::vector<int> align_components(const std::vector<Eigen::MatrixXd>& fitted,
                                  const std::vector<Eigen::MatrixXd>& truth);

struct SweepRow {
  double v1 = 0.0;
  std::string method;
  int component = 0;  // 1-based in reports
  double mean_error = 0.0;
  int n_ok = 0;  // replicates that produced a usable fit for this cell
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<double> v1_grid;
  std::vector<std::string> methods;
  int components = 0;
  int replicates = 0;
};

void validate_sweep_result(const SweepResult& result);

// Per replicate and grid value: draw the generating model once per
// replicate, redraw samples per v1, then fit the method chain
// K-Planes -> classical EM -> heteroscedastic EM from one forked seed.
// Factor errors are recorded after permutation alignment to the truth;
// degenerate fits are excluded from the mean and counted out of n_ok.
// Replicates fan out over `threads`; results are identical to the
// sequential order regardless of thread count.
SweepResult run_v1_sweep(const SynthConfig& base, const std::vector<double>& v1_grid,
                         int replicates, const std::vector<std::string>& methods,
                         std::uint64_t seed, int threads = 1,
                         const std::function<void(const std::string&)>& progress = {});

void write_sweep_csv(const std::string& path, const SweepResult& result);
SweepResult read_sweep_csv(const std::string& path);

// Seeded split, stratified by label so every mixture appears in both
// halves. Requires labels.
std::pair<Dataset, Dataset> train_test_split(const Dataset& data,
                                             double test_fraction,
                                             std::uint64_t seed);

struct ClassificationRow {
  std::string group;  // "1".."L" or "overall"
  std::string method;
  double error_rate = 0.0;
};

// Per-group and overall misclassification of predictions against labels.
// Fitted components are unordered, so one permutation minimizing the
// overall error is chosen (when the label count allows it) and applied to
// every row.
std::vector<ClassificationRow> classification_report(const Dataset& data,
                                                     const Eigen::VectorXi& predictions,
                                                     const std::string& method);

void write_classification_csv(const std::string& path,
                              const std::vector<ClassificationRow>& rows);

}  // namespace hemppcat
