#include "hemppcat/baselines.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cluster_init.hpp"
#include "gem_loop.hpp"
#include "hemppcat/driver.hpp"
#include "hemppcat/grouping.hpp"
#include "hemppcat/rng.hpp"

namespace hemppcat {

namespace detail {

PrincipalFit principal_fit(const Eigen::MatrixXd& members, const Eigen::VectorXd& mu,
                           int k) {
  const int d = static_cast<int>(members.rows());
  const int m = static_cast<int>(members.cols());
  const Eigen::MatrixXd centered = members.colwise() - mu;
  const Eigen::MatrixXd scatter = centered * centered.transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scatter);
  PrincipalFit fit;
  fit.directions.resize(d, k);
  fit.stddev = Eigen::VectorXd::Zero(k);
  double top_sum = 0.0;
  for (int c = 0; c < k; ++c) {
    const int src = d - 1 - c;  // eigenvalues ascend in Eigen
    fit.directions.col(c) = eig.eigenvectors().col(src);
    const double ev = std::max(eig.eigenvalues()[src], 0.0);
    top_sum += ev;
    if (m > 1) fit.stddev[c] = std::sqrt(ev / (m - 1));
  }
  fit.resid2_sum = std::max(scatter.trace() - top_sum, 0.0);
  return fit;
}

Eigen::VectorXi assign_nearest_center(const Dataset& data,
                                      const std::vector<int>& centers) {
  const int n = data.n();
  const int J = static_cast<int>(centers.size());
  Eigen::VectorXi assignment(n);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < J; ++j) {
      const double dist =
          (data.samples.col(i) - data.samples.col(centers[static_cast<std::size_t>(j)]))
              .squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = j;
      }
    }
    assignment[i] = best;
  }
  for (int j = 0; j < J; ++j) assignment[centers[static_cast<std::size_t>(j)]] = j;
  return assignment;
}

Eigen::VectorXi lloyd_assignment(const Dataset& data, const std::vector<int>& centers,
                                 int max_iters) {
  const int n = data.n();
  const int J = static_cast<int>(centers.size());
  Eigen::VectorXi assignment = assign_nearest_center(data, centers);
  Eigen::MatrixXd means(data.dim(), J);
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(J);
    means.setZero();
    for (int i = 0; i < n; ++i) {
      means.col(assignment[i]) += data.samples.col(i);
      ++counts[assignment[i]];
    }
    for (int j = 0; j < J; ++j)
      if (counts[j] > 0) means.col(j) /= counts[j];

    Eigen::VectorXi next(n);
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int j = 0; j < J; ++j) {
        if (counts[j] == 0) continue;
        const double dist = (data.samples.col(i) - means.col(j)).squaredNorm();
        if (dist < best_d) {
          best_d = dist;
          best = j;
        }
      }
      next[i] = best;
    }
    // Re-seed emptied clusters at the sample farthest from its centroid.
    Eigen::VectorXi sizes = Eigen::VectorXi::Zero(J);
    for (int i = 0; i < n; ++i) ++sizes[next[i]];
    for (int j = 0; j < J; ++j) {
      if (sizes[j] > 0) continue;
      int worst = -1;
      double worst_d = -1.0;
      for (int i = 0; i < n; ++i) {
        if (sizes[next[i]] < 2) continue;
        const double dist = (data.samples.col(i) - means.col(next[i])).squaredNorm();
        if (dist > worst_d) {
          worst_d = dist;
          worst = i;
        }
      }
      if (worst < 0) break;
      --sizes[next[worst]];
      next[worst] = j;
      sizes[j] = 1;
    }
    if (next == assignment) break;
    assignment = std::move(next);
  }
  return assignment;
}

namespace {

// Residuals of every sample against every affine subspace: n x J, entry
// (i, j) = ||(I - U_j U_j^T)(y_i - mu_j)||^2.
Eigen::MatrixXd subspace_residuals(const Eigen::MatrixXd& Y,
                                   const std::vector<Eigen::MatrixXd>& bases,
                                   const std::vector<Eigen::VectorXd>& offsets) {
  const int n = static_cast<int>(Y.cols());
  const int J = static_cast<int>(bases.size());
  Eigen::MatrixXd res(n, J);
  for (int j = 0; j < J; ++j) {
    const Eigen::MatrixXd Ybar = Y.colwise() - offsets[static_cast<std::size_t>(j)];
    const Eigen::MatrixXd proj = bases[static_cast<std::size_t>(j)].transpose() * Ybar;
    res.col(j) = (Ybar.colwise().squaredNorm() - proj.colwise().squaredNorm())
                     .transpose()
                     .cwiseMax(0.0);
  }
  return res;
}

Eigen::VectorXi argmin_rows(const Eigen::MatrixXd& res) {
  Eigen::VectorXi pick(res.rows());
  for (int i = 0; i < res.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < res.cols(); ++j)
      if (res(i, j) < res(i, best)) best = j;
    pick[i] = best;
  }
  return pick;
}

void refit_clusters(const Dataset& data, const Eigen::VectorXi& assignment, int J,
                    int k, std::vector<Eigen::MatrixXd>& bases,
                    std::vector<Eigen::VectorXd>& offsets) {
  const int d = data.dim();
  bases.assign(static_cast<std::size_t>(J), Eigen::MatrixXd::Zero(d, k));
  offsets.assign(static_cast<std::size_t>(J), Eigen::VectorXd::Zero(d));
  for (int j = 0; j < J; ++j) {
    std::vector<int> members;
    for (int i = 0; i < data.n(); ++i)
      if (assignment[i] == j) members.push_back(i);
    Eigen::MatrixXd block(d, static_cast<Eigen::Index>(members.size()));
    for (std::size_t c = 0; c < members.size(); ++c)
      block.col(static_cast<Eigen::Index>(c)) = data.samples.col(members[c]);
    const Eigen::VectorXd mu = block.rowwise().mean();
    const auto fit = detail::principal_fit(block, mu, k);
    bases[static_cast<std::size_t>(j)] = fit.directions;
    offsets[static_cast<std::size_t>(j)] = mu;
  }
}

}  // namespace

}  // namespace detail

std::vector<int> kmeanspp_seed(const Dataset& data, int J, std::uint64_t seed) {
  const int n = data.n();
  if (J < 1) throw ValidationError("J must be positive");
  if (n < J) throw ValidationError("need at least J samples to seed J clusters");

  Rng rng(seed);
  std::vector<int> chosen;
  chosen.reserve(static_cast<std::size_t>(J));
  std::vector<bool> is_chosen(static_cast<std::size_t>(n), false);

  const int first = rng.uniform_int(n);
  chosen.push_back(first);
  is_chosen[static_cast<std::size_t>(first)] = true;

  Eigen::VectorXd dist2 =
      (data.samples.colwise() - data.samples.col(first)).colwise().squaredNorm();

  while (static_cast<int>(chosen.size()) < J) {
    double total = 0.0;
    for (int i = 0; i < n; ++i)
      if (!is_chosen[static_cast<std::size_t>(i)]) total += dist2[i];
    int pick = -1;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        if (is_chosen[static_cast<std::size_t>(i)]) continue;
        acc += dist2[i];
        if (acc >= u) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {  // roundoff pushed u past the last positive weight
        for (int i = n - 1; i >= 0; --i)
          if (!is_chosen[static_cast<std::size_t>(i)] && dist2[i] > 0.0) {
            pick = i;
            break;
          }
      }
    }
    if (pick < 0) {  // every remaining point duplicates a chosen center
      for (int i = 0; i < n; ++i)
        if (!is_chosen[static_cast<std::size_t>(i)]) {
          pick = i;
          break;
        }
    }
    chosen.push_back(pick);
    is_chosen[static_cast<std::size_t>(pick)] = true;
    const Eigen::VectorXd cand =
        (data.samples.colwise() - data.samples.col(pick)).colwise().squaredNorm();
    dist2 = dist2.cwiseMin(cand);
  }
  return chosen;
}

KPlanesState kplanes(const Dataset& data, int J, int k, int iters,
                     std::uint64_t seed) {
  const auto centers = kmeanspp_seed(data, J, Rng(seed).fork(1).next_u64());
  return kplanes_from_assignment(data, detail::lloyd_assignment(data, centers, 100),
                                 J, k, iters);
}

KPlanesState kplanes_from_assignment(const Dataset& data,
                                     const Eigen::VectorXi& assignment, int J,
                                     int k, int iters) {
  const int n = data.n();
  if (n < J) throw ValidationError("need at least J samples for K-Planes");
  if (k < 1 || k >= data.dim())
    throw ValidationError("K-Planes rank must satisfy 1 <= k < d");
  if (assignment.size() != n)
    throw ValidationError("assignment length does not match the sample count");
  {
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(J);
    for (int i = 0; i < n; ++i) {
      if (assignment[i] < 0 || assignment[i] >= J)
        throw ValidationError("assignment index out of range");
      ++counts[assignment[i]];
    }
    if (counts.minCoeff() == 0)
      throw ValidationError("initial assignment leaves a cluster empty");
  }

  KPlanesState state;
  state.assignment = assignment;
  detail::refit_clusters(data, state.assignment, J, k, state.bases, state.offsets);

  Eigen::MatrixXd res =
      detail::subspace_residuals(data.samples, state.bases, state.offsets);
  auto objective_of = [&](const Eigen::VectorXi& a) {
    double obj = 0.0;
    for (int i = 0; i < n; ++i) obj += res(i, a[i]);
    return obj;
  };
  state.objective = objective_of(state.assignment);
  state.objective_trace.push_back(state.objective);

  for (int it = 1; it <= iters; ++it) {
    Eigen::VectorXi next = detail::argmin_rows(res);

    // Re-seed emptied clusters at the worst-fit sample, never draining a
    // singleton cluster.
    Eigen::VectorXi sizes = Eigen::VectorXi::Zero(J);
    for (int i = 0; i < n; ++i) ++sizes[next[i]];
    for (int j = 0; j < J; ++j) {
      if (sizes[j] > 0) continue;
      int worst = -1;
      double worst_r = -1.0;
      for (int i = 0; i < n; ++i) {
        if (sizes[next[i]] < 2) continue;
        const double r = res(i, next[i]);
        if (r > worst_r) {
          worst_r = r;
          worst = i;
        }
      }
      if (worst < 0) break;  // n == J singletons everywhere
      --sizes[next[worst]];
      next[worst] = j;
      sizes[j] = 1;
    }

    if (next == state.assignment) break;  // assignment fixed point
    state.assignment = std::move(next);
    detail::refit_clusters(data, state.assignment, J, k, state.bases, state.offsets);
    res = detail::subspace_residuals(data.samples, state.bases, state.offsets);
    state.objective = objective_of(state.assignment);
    state.objective_trace.push_back(state.objective);
    state.iterations = it;
  }
  return state;
}

double kplanes_residual2(const Eigen::VectorXd& y, const KPlanesState& state, int j) {
  const Eigen::VectorXd ybar = y - state.offsets[static_cast<std::size_t>(j)];
  const Eigen::VectorXd proj = state.bases[static_cast<std::size_t>(j)].transpose() * ybar;
  return std::max(ybar.squaredNorm() - proj.squaredNorm(), 0.0);
}

int kplanes_assign(const Eigen::VectorXd& y, const KPlanesState& state) {
  int best = 0;
  double best_r = std::numeric_limits<double>::infinity();
  for (int j = 0; j < static_cast<int>(state.bases.size()); ++j) {
    const double r = kplanes_residual2(y, state, j);
    if (r < best_r) {
      best_r = r;
      best = j;
    }
  }
  return best;
}

std::vector<Eigen::MatrixXd> kplanes_factor_estimates(const Dataset& data,
                                                      const KPlanesState& state) {
  const int J = static_cast<int>(state.bases.size());
  const int d = data.dim();
  const int k = static_cast<int>(state.bases[0].cols());
  std::vector<Eigen::MatrixXd> factors;
  factors.reserve(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) {
    std::vector<int> members;
    for (int i = 0; i < data.n(); ++i)
      if (state.assignment[i] == j) members.push_back(i);
    Eigen::MatrixXd block(d, static_cast<Eigen::Index>(members.size()));
    for (std::size_t c = 0; c < members.size(); ++c)
      block.col(static_cast<Eigen::Index>(c)) = data.samples.col(members[c]);
    const auto fit = detail::principal_fit(
        block, state.offsets[static_cast<std::size_t>(j)], k);
    factors.push_back(fit.directions * fit.stddev.asDiagonal());
  }
  return factors;
}

MppcaParams mppca_from_kplanes(const Dataset& data, const KPlanesState& state) {
  const int J = static_cast<int>(state.bases.size());
  const int d = data.dim();
  const int k = static_cast<int>(state.bases[0].cols());
  const int n = data.n();

  // Clusters below k+2 members cannot support a rank-k fit (their residual
  // is identically zero and the sample spread is meaningless); such
  // components start from the global principal structure with a uniform
  // weight share instead.
  const Eigen::VectorXd global_mu = data.samples.rowwise().mean();
  const auto global_fit = detail::principal_fit(data.samples, global_mu, k);
  const double global_var =
      std::max(global_fit.resid2_sum / (static_cast<double>(n) * (d - k)),
               kVarianceFloor);

  MppcaParams params;
  params.noise_vars.resize(J);
  params.weights.resize(J);
  std::vector<bool> degenerate(static_cast<std::size_t>(J), false);
  for (int j = 0; j < J; ++j) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i)
      if (state.assignment[i] == j) members.push_back(i);
    const auto m = static_cast<double>(members.size());
    if (static_cast<int>(members.size()) < k + 2) {
      degenerate[static_cast<std::size_t>(j)] = true;
      params.factors.push_back(global_fit.directions * global_fit.stddev.asDiagonal());
      params.means.push_back(global_mu);
      params.noise_vars[j] = global_var;
      params.weights[j] = 0.0;  // filled below
      continue;
    }
    Eigen::MatrixXd block(d, static_cast<Eigen::Index>(members.size()));
    for (std::size_t c = 0; c < members.size(); ++c)
      block.col(static_cast<Eigen::Index>(c)) = data.samples.col(members[c]);
    const Eigen::VectorXd& mu = state.offsets[static_cast<std::size_t>(j)];
    const auto fit = detail::principal_fit(block, mu, k);
    params.factors.push_back(fit.directions * fit.stddev.asDiagonal());
    params.means.push_back(mu);
    params.noise_vars[j] =
        std::max(fit.resid2_sum / (m * (d - k)), kVarianceFloor);
    params.weights[j] = m / n;
  }

  int n_degenerate = 0;
  for (int j = 0; j < J; ++j) n_degenerate += degenerate[static_cast<std::size_t>(j)];
  if (n_degenerate > 0) {
    const double uniform = 1.0 / J;
    double good_mass = 0.0;
    for (int j = 0; j < J; ++j)
      if (!degenerate[static_cast<std::size_t>(j)]) good_mass += params.weights[j];
    const double scale =
        good_mass > 0.0 ? (1.0 - uniform * n_degenerate) / good_mass : 0.0;
    for (int j = 0; j < J; ++j)
      params.weights[j] = degenerate[static_cast<std::size_t>(j)]
                              ? uniform
                              : params.weights[j] * scale;
  }
  params.weights /= params.weights.sum();
  return params;
}

std::pair<MppcaParams, FitReport> mppca_fit_from(const Dataset& data,
                                                 const MppcaParams& init,
                                                 const FitOptions& options) {
  const int d = data.dim();
  const int k = static_cast<int>(init.factors.at(0).cols());
  auto outcome = detail::run_gem(data, d, k, detail::state_of(init),
                                 {options.max_iters, options.rel_tol});
  return {detail::to_mppca(outcome.state), std::move(outcome.report)};
}

std::pair<MppcaParams, FitReport> mppca_fit(const Dataset& data, int J, int k,
                                            const FitOptions& options) {
  MppcaParams init;
  if (options.init == InitMethod::kmeanspp) {
    const auto centers =
        kmeanspp_seed(data, J, Rng(options.seed).fork(2).next_u64());
    const Eigen::VectorXi assignment = detail::assign_nearest_center(data, centers);
    KPlanesState pseudo;
    pseudo.assignment = assignment;
    detail::refit_clusters(data, assignment, J, k, pseudo.bases, pseudo.offsets);
    init = mppca_from_kplanes(data, pseudo);
  } else {
    const auto state =
        kplanes(data, J, k, 1000, Rng(options.seed).fork(1).next_u64());
    init = mppca_from_kplanes(data, state);
  }
  return mppca_fit_from(data, init, options);
}

double mppca_observed_log_likelihood(const Dataset& data, const MppcaParams& params) {
  const int L = static_cast<int>(data.group.maxCoeff()) + 1;
  const GroupedData grouped(data, L);
  const auto ref = detail::ref_of(params);
  const ComponentGaussianCache cache(ref, data.dim());
  return detail::responsibilities_and_loglik(grouped, ref, cache, data.n()).second;
}

Eigen::MatrixXd mppca_responsibilities(const Dataset& data, const MppcaParams& params) {
  const int L = static_cast<int>(data.group.maxCoeff()) + 1;
  const GroupedData grouped(data, L);
  const auto ref = detail::ref_of(params);
  const ComponentGaussianCache cache(ref, data.dim());
  return detail::responsibilities_and_loglik(grouped, ref, cache, data.n()).first;
}

}  // namespace hemppcat
