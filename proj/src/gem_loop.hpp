// Internal shared fit loop. The heteroscedastic fit and the classical
// baseline are the same generalized EM sweep with different noise-variance
// bindings, so they share this code path.

#pragma once

#include <Eigen/Dense>

#include <vector>

#include "hemppcat/likelihood.hpp"
#include "hemppcat/types.hpp"

namespace hemppcat::detail {

struct GemState {
  std::vector<Eigen::MatrixXd> factors;
  std::vector<Eigen::VectorXd> means;
  Eigen::VectorXd noise_vars;  // length L (by_group) or J (by_mixture)
  Eigen::VectorXd weights;
  NoiseBinding binding = NoiseBinding::by_group;

  MixtureRef ref() const { return {factors, means, noise_vars, weights, binding}; }
};

inline GemState state_of(const ModelParams& p) {
  return {p.factors, p.means, p.noise_vars, p.weights, NoiseBinding::by_group};
}
inline GemState state_of(const MppcaParams& p) {
  return {p.factors, p.means, p.noise_vars, p.weights, NoiseBinding::by_mixture};
}
inline ModelParams to_model(const GemState& s) {
  return {s.factors, s.means, s.noise_vars, s.weights};
}
inline MppcaParams to_mppca(const GemState& s) {
  return {s.factors, s.means, s.noise_vars, s.weights};
}

struct GemOptions {
  int max_iters = 500;
  double rel_tol = 1e-7;
};

struct GemOutcome {
  GemState state;
  FitReport report;
};

// Runs E/M sweeps until the relative log-likelihood change falls below
// rel_tol, max_iters is exhausted, or a sweep degenerates (in which case
// the best-so-far parameters are returned with stop_reason degenerate).
GemOutcome run_gem(const Dataset& data, int d, int k, GemState init,
                   const GemOptions& options);

}  // namespace hemppcat::detail
