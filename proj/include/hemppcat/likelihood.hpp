// Observed-data likelihood machinery: per-component Gaussian log-densities
// for low-rank-plus-isotropic covariances, mixing responsibilities, and the
// total log-likelihood. Everything stays in the log domain; mixtures are
// combined with log-sum-exp.

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <utility>
#include <vector>

#include "hemppcat/grouping.hpp"
#include "hemppcat/types.hpp"

namespace hemppcat {

// How a (group, component) pair looks up its noise variance: by the
// sample's noise group (heteroscedastic model) or by the mixture
// component (classical model).
enum class NoiseBinding { by_group, by_mixture };

namespace detail {

// Borrowed view of mixture parameters under either noise binding; lets the
// density, E-step and M-step code run unchanged for both models.
struct MixtureRef {
  const std::vector<Eigen::MatrixXd>& factors;
  const std::vector<Eigen::VectorXd>& means;
  const Eigen::VectorXd& noise_vars;  // length L (by_group) or J (by_mixture)
  const Eigen::VectorXd& weights;
  NoiseBinding binding;

  double var_of(int l, int j) const {
    return binding == NoiseBinding::by_group ? noise_vars[l] : noise_vars[j];
  }
  int components() const { return static_cast<int>(factors.size()); }
};

inline MixtureRef ref_of(const ModelParams& p) {
  return {p.factors, p.means, p.noise_vars, p.weights, NoiseBinding::by_group};
}
inline MixtureRef ref_of(const MppcaParams& p) {
  return {p.factors, p.means, p.noise_vars, p.weights, NoiseBinding::by_mixture};
}

}  // namespace detail

// Per-(group, component) factorization cache for C = F F^T + v I_d.
// Holds the Cholesky factor of M = v I_k + F^T F and
// log det C = (d - k) log v + log det M, so densities cost O(dk) per
// sample with no d x d matrix ever formed.
class ComponentGaussianCache {
 public:
  struct Entry {
    Eigen::LLT<Eigen::MatrixXd> chol_M;
    double logdet_C = 0.0;
    double var = 0.0;
  };

  ComponentGaussianCache(const ModelParams& params, const Hyper& hyper);
  ComponentGaussianCache(const detail::MixtureRef& ref, int d);

  // Entries are shared across groups when the variance binds by mixture.
  const Entry& at(int l, int j) const {
    return entries_[static_cast<std::size_t>(slot(l) * J_ + j)];
  }
  int components() const { return J_; }

 private:
  int slot(int l) const { return slots_ == 1 ? 0 : l; }
  int J_;
  int slots_;
  std::vector<Entry> entries_;
};

// log p(y | component j, noise group l) for the current parameters.
// Never exponentiates a d-dimensional quantity.
double log_pdf_component(const Eigen::VectorXd& y, int l, int j,
                         const ModelParams& params,
                         const ComponentGaussianCache& cache);

// n x J posterior mixing weights. Rows are nonnegative and sum to one;
// components with zero mixing proportion get exactly zero.
Eigen::MatrixXd responsibilities(const Dataset& data, const ModelParams& params);

// Total observed-data log-likelihood sum_i log sum_j pi_j p(y_i | j).
double observed_log_likelihood(const Dataset& data, const ModelParams& params);

namespace detail {

// One blocked pass producing the responsibilities and the log-likelihood
// together; the public functions and the fit loop all route through here.
std::pair<Eigen::MatrixXd, double> responsibilities_and_loglik(
    const GroupedData& grouped, const MixtureRef& ref,
    const ComponentGaussianCache& cache, int n);

double log_pdf_low_rank(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                        const Eigen::MatrixXd& F,
                        const ComponentGaussianCache::Entry& entry);

}  // namespace detail

}  // namespace hemppcat
