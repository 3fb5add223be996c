#include "hemppcat/likelihood.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace hemppcat {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void build_entries(const detail::MixtureRef& ref, int d, int slots,
                   std::vector<ComponentGaussianCache::Entry>& entries) {
  const int J = ref.components();
  entries.resize(static_cast<std::size_t>(slots) * static_cast<std::size_t>(J));
  for (int s = 0; s < slots; ++s) {
    for (int j = 0; j < J; ++j) {
      auto& e = entries[static_cast<std::size_t>(s * J + j)];
      const Eigen::MatrixXd& F = ref.factors[static_cast<std::size_t>(j)];
      const int k = static_cast<int>(F.cols());
      const double v = ref.binding == NoiseBinding::by_group ? ref.noise_vars[s]
                                                             : ref.noise_vars[j];
      if (!(v > 0.0)) throw ValidationError("noise variance must be positive");
      Eigen::MatrixXd M = F.transpose() * F;
      M.diagonal().array() += v;
      e.chol_M.compute(M);
      if (e.chol_M.info() != Eigen::Success)
        throw ValidationError("posterior gram matrix is not positive definite");
      // det(F F^T + v I_d) = v^(d-k) det(M)
      double logdet_M = 0.0;
      for (int i = 0; i < k; ++i) logdet_M += std::log(e.chol_M.matrixLLT()(i, i));
      logdet_M *= 2.0;
      e.logdet_C = (d - k) * std::log(v) + logdet_M;
      e.var = v;
    }
  }
}

}  // namespace

ComponentGaussianCache::ComponentGaussianCache(const ModelParams& params,
                                               const Hyper& hyper)
    : J_(hyper.J), slots_(hyper.L) {
  const auto ref = detail::ref_of(params);
  build_entries(ref, hyper.d, slots_, entries_);
}

ComponentGaussianCache::ComponentGaussianCache(const detail::MixtureRef& ref, int d)
    : J_(ref.components()),
      slots_(ref.binding == NoiseBinding::by_group
                 ? static_cast<int>(ref.noise_vars.size())
                 : 1) {
  build_entries(ref, d, slots_, entries_);
}

double detail::log_pdf_low_rank(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                                const Eigen::MatrixXd& F,
                                const ComponentGaussianCache::Entry& entry) {
  const int d = static_cast<int>(y.size());
  const Eigen::VectorXd ybar = y - mu;
  // E^2 = (||ybar||^2 - ||L^-1 F^T ybar||^2) / v with M = L L^T.
  const Eigen::VectorXd u = F.transpose() * ybar;
  const Eigen::VectorXd w = entry.chol_M.matrixL().solve(u);
  const double e2 = (ybar.squaredNorm() - w.squaredNorm()) / entry.var;
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + entry.logdet_C + e2);
}

double log_pdf_component(const Eigen::VectorXd& y, int l, int j,
                         const ModelParams& params,
                         const ComponentGaussianCache& cache) {
  return detail::log_pdf_low_rank(y, params.means[static_cast<std::size_t>(j)],
                                  params.factors[static_cast<std::size_t>(j)],
                                  cache.at(l, j));
}

std::pair<Eigen::MatrixXd, double> detail::responsibilities_and_loglik(
    const GroupedData& grouped, const MixtureRef& ref,
    const ComponentGaussianCache& cache, int n) {
  const int J = ref.components();
  bool any_weight = false;
  for (int j = 0; j < J; ++j) any_weight = any_weight || ref.weights[j] > 0.0;
  if (!any_weight) throw ValidationError("all mixing proportions are zero");

  Eigen::MatrixXd R(n, J);
  double loglik = 0.0;
  for (int l = 0; l < grouped.L; ++l) {
    const Eigen::MatrixXd& Y = grouped.block[static_cast<std::size_t>(l)];
    const int nl = static_cast<int>(Y.cols());
    if (nl == 0) continue;
    Eigen::MatrixXd logp(nl, J);
    for (int j = 0; j < J; ++j) {
      if (ref.weights[j] <= 0.0) {
        logp.col(j).setConstant(kNegInf);
        continue;
      }
      const auto& e = cache.at(l, j);
      const Eigen::MatrixXd& F = ref.factors[static_cast<std::size_t>(j)];
      const int d = static_cast<int>(Y.rows());
      const Eigen::MatrixXd Ybar = Y.colwise() - ref.means[static_cast<std::size_t>(j)];
      const Eigen::MatrixXd W =
          e.chol_M.matrixL().solve(F.transpose() * Ybar);
      const Eigen::ArrayXd e2 = (Ybar.colwise().squaredNorm().transpose().array() -
                                 W.colwise().squaredNorm().transpose().array()) /
                                e.var;
      const double c = std::log(ref.weights[j]) -
                       0.5 * (d * std::log(2.0 * std::numbers::pi) + e.logdet_C);
      logp.col(j) = (c - 0.5 * e2).matrix();
    }
    const auto& idx = grouped.index[static_cast<std::size_t>(l)];
    for (int r = 0; r < nl; ++r) {
      const double m = logp.row(r).maxCoeff();  // finite: some weight is positive
      const Eigen::ArrayXd shifted = (logp.row(r).transpose().array() - m).exp();
      const double total = shifted.sum();
      loglik += m + std::log(total);
      R.row(idx[static_cast<std::size_t>(r)]) = (shifted / total).transpose();
    }
  }
  return {std::move(R), loglik};
}

Eigen::MatrixXd responsibilities(const Dataset& data, const ModelParams& params) {
  const Hyper hyper = hyper_of(params);
  const GroupedData grouped(data, hyper.L);
  const ComponentGaussianCache cache(params, hyper);
  return detail::responsibilities_and_loglik(grouped, detail::ref_of(params), cache,
                                             data.n())
      .first;
}

double observed_log_likelihood(const Dataset& data, const ModelParams& params) {
  const Hyper hyper = hyper_of(params);
  const GroupedData grouped(data, hyper.L);
  const ComponentGaussianCache cache(params, hyper);
  return detail::responsibilities_and_loglik(grouped, detail::ref_of(params), cache,
                                             data.n())
      .second;
}

}  // namespace hemppcat
