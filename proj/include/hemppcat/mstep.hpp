// The four closed-form conditional maximizers of the expected complete-data
// objective, applied in the sequence pi -> v -> mu -> F. The v update uses
// the current-iterate mu and F; the mu update uses the new v and old F; the
// F update uses the new v and new mu. All posterior moments are evaluated
// at the current iterate.

#pragma once

#include <Eigen/Dense>

#include <vector>

#include "hemppcat/estep.hpp"
#include "hemppcat/grouping.hpp"
#include "hemppcat/likelihood.hpp"
#include "hemppcat/types.hpp"

namespace hemppcat {

namespace detail {

// Streaming accumulators per (group, component) cell, all weighted by the
// responsibilities and evaluated at the current iterate:
//   S   = sum_i R
//   sy  = sum_i R y                     (d)
//   sz  = sum_i R <z>                   (k)
//   syz = sum_i R y <z>^T               (d x k)
//   szz = sum_i R <z z^T>               (k x k)
//   q   = sum_i R ||y - mu_j||^2
//   r   = sum_i R <z>^T F_j^T (y - mu_j)
//   tr_ffzz = tr(F_j^T F_j szz)
struct CellStats {
  double S = 0.0;
  Eigen::VectorXd sy;
  Eigen::VectorXd sz;
  Eigen::MatrixXd syz;
  Eigen::MatrixXd szz;
  double q = 0.0;
  double r = 0.0;
  double tr_ffzz = 0.0;
};

// One blocked pass over the data. R is n x J in original sample order.
std::vector<CellStats> accumulate_cells(const GroupedData& grouped,
                                        const Eigen::MatrixXd& R,
                                        const MixtureRef& ref,
                                        const ComponentGaussianCache& cache);

inline const CellStats& cell(const std::vector<CellStats>& cells, int l, int j, int J) {
  return cells[static_cast<std::size_t>(l) * static_cast<std::size_t>(J) +
               static_cast<std::size_t>(j)];
}

Eigen::VectorXd pi_from_cells(const std::vector<CellStats>& cells, int L, int J);

// Per-group maximizer (heteroscedastic model), floored at kVarianceFloor.
Eigen::VectorXd v_by_group_from_cells(const std::vector<CellStats>& cells, int L,
                                      int J, int d);

// Per-component maximizer (classical model), floored at kVarianceFloor.
Eigen::VectorXd v_by_mixture_from_cells(const std::vector<CellStats>& cells, int L,
                                        int J, int d);

// v_new is indexed by group or by component according to `binding`.
std::vector<Eigen::VectorXd> mu_from_cells(const std::vector<CellStats>& cells,
                                           const MixtureRef& ref_t,
                                           const Eigen::VectorXd& v_new,
                                           NoiseBinding binding);

std::vector<Eigen::MatrixXd> F_from_cells(const std::vector<CellStats>& cells,
                                          const std::vector<Eigen::VectorXd>& mu_new,
                                          const Eigen::VectorXd& v_new,
                                          NoiseBinding binding, int L, int d, int k);

}  // namespace detail

// pi_j = column mean of R, renormalized to the simplex.
Eigen::VectorXd update_pi(const Eigen::MatrixXd& R);

// Per-group noise variances; uses the current-iterate mu and F held by
// `moments`. Result is floored at kVarianceFloor.
Eigen::VectorXd update_v(const Dataset& data, const Eigen::MatrixXd& R,
                         const EStep& moments);

// Component means, weighted by R / v_new with the current-iterate factors.
// Throws DegenerateError{empty_component} when a component has no mass.
std::vector<Eigen::VectorXd> update_mu(const Dataset& data, const Eigen::MatrixXd& R,
                                       const EStep& moments,
                                       const Eigen::VectorXd& v_new);

// Factor matrices F_j = B_j^T K_j^-1 via Cholesky of K_j. Throws
// DegenerateError{rank_deficient_moments} when a K_j pivot falls below
// 1e-12 tr(K_j)/k.
std::vector<Eigen::MatrixXd> update_F(const Dataset& data, const Eigen::MatrixXd& R,
                                      const EStep& moments,
                                      const Eigen::VectorXd& v_new,
                                      const std::vector<Eigen::VectorXd>& mu_new);

}  // namespace hemppcat
