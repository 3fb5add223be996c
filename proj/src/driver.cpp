#include "hemppcat/driver.hpp"

#include <cmath>
#include <utility>

#include "cluster_init.hpp"
#include "gem_loop.hpp"
#include "hemppcat/grouping.hpp"
#include "hemppcat/rng.hpp"

namespace hemppcat {

namespace {

// Seed-stream tags; keep distinct across the code base.
constexpr std::uint64_t kTagKPlanes = 1;
constexpr std::uint64_t kTagKmeanspp = 2;

}  // namespace

ModelParams hemppcat_from_mppca(const Dataset& data, const Hyper& hyper,
                                const MppcaParams& params) {
  const Eigen::MatrixXd R = mppca_responsibilities(data, params);
  ModelParams out;
  out.factors = params.factors;
  out.means = params.means;
  out.weights = params.weights;
  out.noise_vars.resize(hyper.L);
  // v_l = responsibility-weighted average of the per-component variances
  // over the samples observed in group l.
  Eigen::VectorXd num = Eigen::VectorXd::Zero(hyper.L);
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(hyper.L);
  for (int i = 0; i < data.n(); ++i) {
    const int l = data.group[i];
    for (int j = 0; j < params.components(); ++j) {
      num[l] += R(i, j) * params.noise_vars[j];
      mass[l] += R(i, j);
    }
  }
  for (int l = 0; l < hyper.L; ++l)
    out.noise_vars[l] =
        mass[l] > 0.0 ? std::max(num[l] / mass[l], kVarianceFloor) : kVarianceFloor;
  return out;
}

ModelParams init_from_mppca(const Dataset& data, const Hyper& hyper,
                            std::uint64_t seed) {
  FitOptions inner;
  inner.max_iters = 500;
  inner.rel_tol = 1e-6;
  inner.init = InitMethod::kplanes;
  inner.seed = seed;
  auto [params, report] = mppca_fit(data, hyper.J, hyper.k, inner);
  (void)report;
  return hemppcat_from_mppca(data, hyper, params);
}

ModelParams init_from_kmeanspp(const Dataset& data, const Hyper& hyper,
                               std::uint64_t seed) {
  const auto centers =
      kmeanspp_seed(data, hyper.J, Rng(seed).fork(kTagKmeanspp).next_u64());
  const Eigen::VectorXi assignment = detail::lloyd_assignment(data, centers, 100);
  const int d = hyper.d;
  const int k = hyper.k;
  const int n = data.n();

  // Global fallback directions for clusters too small to span k directions.
  const Eigen::VectorXd global_mu = data.samples.rowwise().mean();
  const auto global_fit = detail::principal_fit(data.samples, global_mu, k);

  ModelParams params;
  params.weights.resize(hyper.J);
  std::vector<Eigen::MatrixXd> bases(static_cast<std::size_t>(hyper.J));
  for (int j = 0; j < hyper.J; ++j) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i)
      if (assignment[i] == j) members.push_back(i);
    Eigen::MatrixXd block(d, static_cast<Eigen::Index>(members.size()));
    for (std::size_t c = 0; c < members.size(); ++c)
      block.col(static_cast<Eigen::Index>(c)) = data.samples.col(members[c]);
    const Eigen::VectorXd mu = members.empty()
                                   ? data.samples.col(centers[static_cast<std::size_t>(j)])
                                   : Eigen::VectorXd(block.rowwise().mean());
    if (static_cast<int>(members.size()) >= k + 1) {
      const auto fit = detail::principal_fit(block, mu, k);
      params.factors.push_back(fit.directions * fit.stddev.asDiagonal());
      bases[static_cast<std::size_t>(j)] = fit.directions;
    } else {
      params.factors.push_back(global_fit.directions * global_fit.stddev.asDiagonal());
      bases[static_cast<std::size_t>(j)] = global_fit.directions;
    }
    params.means.push_back(mu);
    params.weights[j] = static_cast<double>(members.size()) / n;
  }
  params.weights /= params.weights.sum();

  // Pooled per-group residual variance against each sample's assigned
  // cluster subspace.
  params.noise_vars = Eigen::VectorXd::Zero(hyper.L);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(hyper.L);
  for (int i = 0; i < n; ++i) {
    const int j = assignment[i];
    const Eigen::VectorXd ybar =
        data.samples.col(i) - params.means[static_cast<std::size_t>(j)];
    const Eigen::VectorXd proj = bases[static_cast<std::size_t>(j)].transpose() * ybar;
    params.noise_vars[data.group[i]] +=
        std::max(ybar.squaredNorm() - proj.squaredNorm(), 0.0);
    counts[data.group[i]] += 1.0;
  }
  for (int l = 0; l < hyper.L; ++l)
    params.noise_vars[l] = std::max(
        counts[l] > 0.0 ? params.noise_vars[l] / (counts[l] * (d - k)) : kVarianceFloor,
        kVarianceFloor);
  return params;
}

std::pair<ModelParams, FitReport> fit(const Dataset& data, const Hyper& hyper,
                                      const FitOptions& options) {
  validate_dataset(data, hyper);
  if (options.max_iters < 1) throw ValidationError("max_iters must be at least 1");
  if (!(options.rel_tol > 0.0)) throw ValidationError("rel_tol must be positive");

  ModelParams init;
  switch (options.init) {
    case InitMethod::explicit_params:
      if (!options.init_params)
        throw ValidationError("explicit initialization requires init_params");
      init = *options.init_params;
      break;
    case InitMethod::kmeanspp:
      init = init_from_kmeanspp(data, hyper, options.seed);
      break;
    case InitMethod::kplanes: {
      const auto state = kplanes(data, hyper.J, hyper.k, 1000,
                                 Rng(options.seed).fork(kTagKPlanes).next_u64());
      init = hemppcat_from_mppca(data, hyper, mppca_from_kplanes(data, state));
      break;
    }
    case InitMethod::mppca:
      init = init_from_mppca(data, hyper, options.seed);
      break;
  }
  validate_params(init, hyper);

  auto outcome = detail::run_gem(data, hyper.d, hyper.k, detail::state_of(init),
                                 {options.max_iters, options.rel_tol});
  return {detail::to_model(outcome.state), std::move(outcome.report)};
}

}  // namespace hemppcat
