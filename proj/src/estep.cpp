#include "hemppcat/estep.hpp"

namespace hemppcat {

Eigen::MatrixXd EStep::gram(int l, int j) const {
  const auto& chol = cache_.at(l, j).chol_M;
  return chol.matrixL() * Eigen::MatrixXd(chol.matrixU());
}

Eigen::VectorXd EStep::z_mean(const Eigen::VectorXd& y, int l, int j) const {
  const auto& F = params_.factors[static_cast<std::size_t>(j)];
  const Eigen::VectorXd u =
      F.transpose() * (y - params_.means[static_cast<std::size_t>(j)]);
  return cache_.at(l, j).chol_M.solve(u);
}

Eigen::MatrixXd EStep::z_second(const Eigen::VectorXd& z_mean, int l, int j) const {
  const auto& e = cache_.at(l, j);
  const int k = static_cast<int>(z_mean.size());
  Eigen::MatrixXd second =
      e.var * e.chol_M.solve(Eigen::MatrixXd::Identity(k, k));
  second.noalias() += z_mean * z_mean.transpose();
  return 0.5 * (second + second.transpose());  // suppress roundoff asymmetry
}

Eigen::MatrixXd posterior_gram(int l, int j, const ModelParams& params) {
  const auto& F = params.factors[static_cast<std::size_t>(j)];
  Eigen::MatrixXd M = F.transpose() * F;
  M.diagonal().array() += params.noise_vars[l];
  return M;
}

Eigen::VectorXd posterior_mean(const Eigen::VectorXd& y, int l, int j,
                               const ModelParams& params) {
  const auto& F = params.factors[static_cast<std::size_t>(j)];
  const Eigen::MatrixXd M = posterior_gram(l, j, params);
  const Eigen::VectorXd u = F.transpose() * (y - params.means[static_cast<std::size_t>(j)]);
  return Eigen::LLT<Eigen::MatrixXd>(M).solve(u);
}

Eigen::MatrixXd posterior_second_moment(const Eigen::VectorXd& z_mean, int l, int j,
                                        const ModelParams& params) {
  const int k = static_cast<int>(z_mean.size());
  const Eigen::MatrixXd M = posterior_gram(l, j, params);
  Eigen::MatrixXd second = params.noise_vars[l] *
                           Eigen::LLT<Eigen::MatrixXd>(M).solve(Eigen::MatrixXd::Identity(k, k));
  second.noalias() += z_mean * z_mean.transpose();
  return 0.5 * (second + second.transpose());
}

}  // namespace hemppcat
