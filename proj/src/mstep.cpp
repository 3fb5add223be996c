#include "hemppcat/mstep.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hemppcat {

namespace detail {

std::vector<CellStats> accumulate_cells(const GroupedData& grouped,
                                        const Eigen::MatrixXd& R,
                                        const MixtureRef& ref,
                                        const ComponentGaussianCache& cache) {
  const int L = grouped.L;
  const int J = ref.components();
  std::vector<CellStats> cells(static_cast<std::size_t>(L) * static_cast<std::size_t>(J));

  for (int l = 0; l < L; ++l) {
    const Eigen::MatrixXd& Y = grouped.block[static_cast<std::size_t>(l)];
    const auto& idx = grouped.index[static_cast<std::size_t>(l)];
    const int nl = static_cast<int>(Y.cols());
    for (int j = 0; j < J; ++j) {
      auto& c = cells[static_cast<std::size_t>(l * J + j)];
      const Eigen::MatrixXd& F = ref.factors[static_cast<std::size_t>(j)];
      const Eigen::VectorXd& mu = ref.means[static_cast<std::size_t>(j)];
      const int k = static_cast<int>(F.cols());
      const auto& entry = cache.at(l, j);

      Eigen::VectorXd r(nl);
      for (int i = 0; i < nl; ++i) r[i] = R(idx[static_cast<std::size_t>(i)], j);

      const Eigen::MatrixXd Ybar = Y.colwise() - mu;
      const Eigen::MatrixXd U = F.transpose() * Ybar;     // k x nl
      const Eigen::MatrixXd Z = entry.chol_M.solve(U);    // <z> columns

      c.S = r.sum();
      c.sy = Y * r;
      c.sz = Z * r;
      const Eigen::MatrixXd Yw = Y * r.asDiagonal();
      c.syz = Yw * Z.transpose();
      // sum_i R <z z^T> = S v M^-1 + sum_i R <z><z>^T
      Eigen::MatrixXd szz =
          c.S * entry.var *
          entry.chol_M.solve(Eigen::MatrixXd::Identity(k, k));
      szz.noalias() += (Z * r.asDiagonal()) * Z.transpose();
      c.szz = 0.5 * (szz + szz.transpose());
      const Eigen::VectorXd ybar_sq = Ybar.colwise().squaredNorm().transpose();
      c.q = ybar_sq.dot(r);
      const Eigen::VectorXd zu = (Z.array() * U.array()).colwise().sum().transpose();
      c.r = zu.dot(r);
      c.tr_ffzz = (F.transpose() * F * c.szz).trace();
    }
  }
  return cells;
}

Eigen::VectorXd pi_from_cells(const std::vector<CellStats>& cells, int L, int J) {
  Eigen::VectorXd pi = Eigen::VectorXd::Zero(J);
  double n = 0.0;
  for (int l = 0; l < L; ++l)
    for (int j = 0; j < J; ++j) {
      pi[j] += cell(cells, l, j, J).S;
      n += cell(cells, l, j, J).S;
    }
  pi /= n;
  return pi;
}

Eigen::VectorXd v_by_group_from_cells(const std::vector<CellStats>& cells, int L,
                                      int J, int d) {
  Eigen::VectorXd v(L);
  for (int l = 0; l < L; ++l) {
    double num = 0.0;
    double mass = 0.0;
    for (int j = 0; j < J; ++j) {
      const auto& c = cell(cells, l, j, J);
      num += c.q - 2.0 * c.r + c.tr_ffzz;
      mass += c.S;
    }
    if (!(mass > 0.0))
      throw DegenerateError(DegenerateError::Kind::empty_component,
                            "noise group " + std::to_string(l + 1) +
                                " carries zero responsibility mass");
    v[l] = std::max(num / (d * mass), kVarianceFloor);
  }
  return v;
}

Eigen::VectorXd v_by_mixture_from_cells(const std::vector<CellStats>& cells, int L,
                                        int J, int d) {
  Eigen::VectorXd v(J);
  for (int j = 0; j < J; ++j) {
    double num = 0.0;
    double mass = 0.0;
    for (int l = 0; l < L; ++l) {
      const auto& c = cell(cells, l, j, J);
      num += c.q - 2.0 * c.r + c.tr_ffzz;
      mass += c.S;
    }
    if (!(mass > 0.0))
      throw DegenerateError(DegenerateError::Kind::empty_component,
                            "component " + std::to_string(j + 1) +
                                " carries zero responsibility mass");
    v[j] = std::max(num / (d * mass), kVarianceFloor);
  }
  return v;
}

std::vector<Eigen::VectorXd> mu_from_cells(const std::vector<CellStats>& cells,
                                           const MixtureRef& ref_t,
                                           const Eigen::VectorXd& v_new,
                                           NoiseBinding binding) {
  const int J = ref_t.components();
  const int L = static_cast<int>(cells.size()) / J;
  std::vector<Eigen::VectorXd> mu;
  mu.reserve(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) {
    const Eigen::MatrixXd& F = ref_t.factors[static_cast<std::size_t>(j)];
    Eigen::VectorXd num = Eigen::VectorXd::Zero(F.rows());
    double den = 0.0;
    for (int l = 0; l < L; ++l) {
      const auto& c = cell(cells, l, j, J);
      const double w = 1.0 / (binding == NoiseBinding::by_group ? v_new[l] : v_new[j]);
      num.noalias() += w * (c.sy - F * c.sz);
      den += w * c.S;
    }
    if (!(den > 0.0))
      throw DegenerateError(DegenerateError::Kind::empty_component,
                            "empty-component: component " + std::to_string(j + 1) +
                                " has zero total responsibility");
    mu.push_back(num / den);
  }
  return mu;
}

std::vector<Eigen::MatrixXd> F_from_cells(const std::vector<CellStats>& cells,
                                          const std::vector<Eigen::VectorXd>& mu_new,
                                          const Eigen::VectorXd& v_new,
                                          NoiseBinding binding, int L, int d, int k) {
  const int J = static_cast<int>(mu_new.size());
  std::vector<Eigen::MatrixXd> F_out;
  F_out.reserve(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) {
    Eigen::MatrixXd Bt = Eigen::MatrixXd::Zero(d, k);  // B_j^T
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(k, k);
    for (int l = 0; l < L; ++l) {
      const auto& c = cell(cells, l, j, J);
      const double w = 1.0 / (binding == NoiseBinding::by_group ? v_new[l] : v_new[j]);
      Bt.noalias() += w * (c.syz - mu_new[static_cast<std::size_t>(j)] * c.sz.transpose());
      K += w * c.szz;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(K);
    const double pivot_floor = 1e-12 * K.trace() / k;
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > pivot_floor))
      throw DegenerateError(DegenerateError::Kind::rank_deficient_moments,
                            "rank-deficient-moments: second-moment matrix for component " +
                                std::to_string(j + 1) + " is numerically singular");
    F_out.push_back(ldlt.solve(Bt.transpose()).transpose());
  }
  return F_out;
}

}  // namespace detail

Eigen::VectorXd update_pi(const Eigen::MatrixXd& R) {
  Eigen::VectorXd pi = R.colwise().mean();
  pi /= pi.sum();
  return pi;
}

Eigen::VectorXd update_v(const Dataset& data, const Eigen::MatrixXd& R,
                         const EStep& moments) {
  const Hyper& h = moments.hyper();
  const GroupedData grouped(data, h.L);
  const auto ref = detail::ref_of(moments.params());
  const auto cells = detail::accumulate_cells(grouped, R, ref, moments.cache());
  return detail::v_by_group_from_cells(cells, h.L, h.J, h.d);
}

std::vector<Eigen::VectorXd> update_mu(const Dataset& data, const Eigen::MatrixXd& R,
                                       const EStep& moments,
                                       const Eigen::VectorXd& v_new) {
  const Hyper& h = moments.hyper();
  const GroupedData grouped(data, h.L);
  const auto ref = detail::ref_of(moments.params());
  const auto cells = detail::accumulate_cells(grouped, R, ref, moments.cache());
  return detail::mu_from_cells(cells, ref, v_new, NoiseBinding::by_group);
}

std::vector<Eigen::MatrixXd> update_F(const Dataset& data, const Eigen::MatrixXd& R,
                                      const EStep& moments,
                                      const Eigen::VectorXd& v_new,
                                      const std::vector<Eigen::VectorXd>& mu_new) {
  const Hyper& h = moments.hyper();
  const GroupedData grouped(data, h.L);
  const auto ref = detail::ref_of(moments.params());
  const auto cells = detail::accumulate_cells(grouped, R, ref, moments.cache());
  return detail::F_from_cells(cells, mu_new, v_new, NoiseBinding::by_group, h.L, h.d,
                              h.k);
}

}  // namespace hemppcat
