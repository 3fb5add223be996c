// Conditional posterior moments of the latent coefficients given the
// current parameters. Moments are produced lazily per (sample, component);
// only the per-(group, component) gram factorizations are kept, so memory
// stays O(L J k^2) regardless of n.

#pragma once

#include <Eigen/Dense>

#include "hemppcat/likelihood.hpp"
#include "hemppcat/types.hpp"

namespace hemppcat {

// Posterior-moment machinery frozen at one parameter iterate theta^(t).
// For z | y, component j, group l:
//   M       = v I_k + F^T F
//   <z>     = M^-1 F^T (y - mu)
//   <z z^T> = v M^-1 + <z><z>^T
class EStep {
 public:
  EStep(const ModelParams& params, const Hyper& hyper)
      : params_(params), hyper_(hyper), cache_(params, hyper) {}

  const ModelParams& params() const { return params_; }
  const Hyper& hyper() const { return hyper_; }
  const ComponentGaussianCache& cache() const { return cache_; }

  Eigen::MatrixXd gram(int l, int j) const;
  Eigen::VectorXd z_mean(const Eigen::VectorXd& y, int l, int j) const;
  Eigen::MatrixXd z_second(const Eigen::VectorXd& z_mean, int l, int j) const;

 private:
  ModelParams params_;
  Hyper hyper_;
  ComponentGaussianCache cache_;
};

// Standalone forms of the same quantities, recomputing the k x k gram.
Eigen::MatrixXd posterior_gram(int l, int j, const ModelParams& params);
Eigen::VectorXd posterior_mean(const Eigen::VectorXd& y, int l, int j,
                               const ModelParams& params);
Eigen::MatrixXd posterior_second_moment(const Eigen::VectorXd& z_mean, int l, int j,
                                        const ModelParams& params);

}  // namespace hemppcat
