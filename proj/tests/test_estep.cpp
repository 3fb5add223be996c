#include <doctest.h>

#include <cmath>

#include "hemppcat/estep.hpp"
#include "hemppcat/rng.hpp"
#include "test_support.hpp"

using namespace hemppcat;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("posterior gram: zero factor gives v I") {
  Rng rng(1);
  auto p = testsup::random_model(rng, 5, 2, 1, 2);
  p.factors[0].setZero();
  const MatrixXd M = posterior_gram(1, 0, p);
  CHECK((M - p.noise_vars[1] * MatrixXd::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("posterior gram: orthonormal columns with unit variance give 2I") {
  Rng rng(2);
  ModelParams p = testsup::random_model(rng, 6, 2, 1, 1);
  p.factors[0] = testsup::random_orthogonal(rng, 6).leftCols(2);
  p.noise_vars << 1.0;
  const MatrixXd M = posterior_gram(0, 0, p);
  CHECK((M - 2.0 * MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("posterior gram matches direct arithmetic on a random 6x2 factor") {
  Rng rng(3);
  ModelParams p = testsup::random_model(rng, 6, 2, 1, 1);
  p.noise_vars << 0.5;
  const MatrixXd direct =
      p.factors[0].transpose() * p.factors[0] + 0.5 * MatrixXd::Identity(2, 2);
  CHECK((posterior_gram(0, 0, p) - direct).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("posterior mean vanishes at the component mean and for zero factors") {
  Rng rng(4);
  auto p = testsup::random_model(rng, 5, 2, 1, 1);
  CHECK(posterior_mean(p.means[0], 0, 0, p).norm() == 0.0);
  auto q = p;
  q.factors[0].setZero();
  VectorXd y(5);
  for (int r = 0; r < 5; ++r) y[r] = rng.normal();
  CHECK(posterior_mean(y, 0, 0, q).norm() == 0.0);
}

TEST_CASE("posterior mean matches dense Gaussian conditioning") {
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const int d = 2 + rng.uniform_int(9);
    const int k = 1 + rng.uniform_int(std::min(d - 1, 3));
    const auto p = testsup::random_model(rng, d, k, 1, 2);
    VectorXd y(d);
    for (int r = 0; r < d; ++r) y[r] = 2.0 * rng.normal();
    for (int l = 0; l < 2; ++l) {
      const VectorXd fast = posterior_mean(y, l, 0, p);
      const VectorXd dense =
          testsup::dense_posterior_mean(y, p.means[0], p.factors[0], p.noise_vars[l]);
      CHECK((fast - dense).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("posterior covariance matches dense conditioning") {
  Rng rng(6);
  for (int trial = 0; trial < 25; ++trial) {
    const int d = 3 + rng.uniform_int(8);
    const int k = 1 + rng.uniform_int(std::min(d - 1, 3));
    const auto p = testsup::random_model(rng, d, k, 1, 1);
    VectorXd y(d);
    for (int r = 0; r < d; ++r) y[r] = rng.normal();
    const VectorXd zm = posterior_mean(y, 0, 0, p);
    const MatrixXd second = posterior_second_moment(zm, 0, 0, p);
    const MatrixXd cov_fast = second - zm * zm.transpose();
    const MatrixXd cov_dense =
        testsup::dense_posterior_cov(p.factors[0], p.noise_vars[0]);
    CHECK((cov_fast - cov_dense).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("second moment: zero factor and unit variance recover the prior") {
  ModelParams p;
  p.factors = {MatrixXd::Zero(4, 2)};
  p.means = {VectorXd::Zero(4)};
  p.noise_vars = Eigen::VectorXd::Ones(1);
  p.weights = Eigen::VectorXd::Ones(1);
  const VectorXd zm = posterior_mean(VectorXd::Zero(4), 0, 0, p);
  const MatrixXd second = posterior_second_moment(zm, 0, 0, p);
  CHECK((second - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("trace identity tr<zz^T> = v tr(M^-1) + ||<z>||^2") {
  Rng rng(7);
  const auto p = testsup::random_model(rng, 6, 3, 1, 2);
  VectorXd y(6);
  for (int r = 0; r < 6; ++r) y[r] = rng.normal();
  const int l = 1;
  const VectorXd zm = posterior_mean(y, l, 0, p);
  const MatrixXd second = posterior_second_moment(zm, l, 0, p);
  const MatrixXd Minv = posterior_gram(l, 0, p).inverse();
  CHECK(second.trace() ==
        doctest::Approx(p.noise_vars[l] * Minv.trace() + zm.squaredNorm())
            .epsilon(1e-10));
}

TEST_CASE("second moment is symmetric and its covariance part is SPD") {
  Rng rng(8);
  const auto p = testsup::random_model(rng, 7, 3, 2, 2);
  const EStep estep(p, Hyper{7, 3, 2, 2});
  VectorXd y(7);
  for (int r = 0; r < 7; ++r) y[r] = 2.0 * rng.normal();
  for (int l = 0; l < 2; ++l)
    for (int j = 0; j < 2; ++j) {
      const VectorXd zm = estep.z_mean(y, l, j);
      const MatrixXd second = estep.z_second(zm, l, j);
      CHECK((second - second.transpose()).cwiseAbs().maxCoeff() == 0.0);
      const MatrixXd cov = second - zm * zm.transpose();
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
      CHECK(eig.eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("second moment matches a Monte Carlo draw from the exact posterior") {
  Rng rng(9);
  ModelParams p = testsup::random_model(rng, 5, 2, 1, 1);
  VectorXd y(5);
  for (int r = 0; r < 5; ++r) y[r] = rng.normal();
  const VectorXd zm = posterior_mean(y, 0, 0, p);
  const MatrixXd second = posterior_second_moment(zm, 0, 0, p);
  // Exact posterior: N(zm, v M^-1); sample it with a dense Cholesky.
  const MatrixXd cov = p.noise_vars[0] * posterior_gram(0, 0, p).inverse();
  const MatrixXd Lc = Eigen::LLT<MatrixXd>(cov).matrixL();
  const int draws = 1000000;
  MatrixXd acc = MatrixXd::Zero(2, 2);
  MatrixXd acc_sq = MatrixXd::Zero(2, 2);  // entrywise second moments of z_a z_b
  VectorXd g(2);
  for (int s = 0; s < draws; ++s) {
    g[0] = rng.normal();
    g[1] = rng.normal();
    const VectorXd z = zm + Lc * g;
    const MatrixXd zz = z * z.transpose();
    acc += zz;
    acc_sq += zz.cwiseProduct(zz);
  }
  const MatrixXd mc = acc / draws;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const double var = acc_sq(a, b) / draws - mc(a, b) * mc(a, b);
      const double se = std::sqrt(var / draws);
      CHECK(std::abs(mc(a, b) - second(a, b)) < 3.0 * se + 1e-12);
    }
}

TEST_CASE("scale equivariance: (cy, cmu, cF, c^2 v) leaves moments unchanged") {
  Rng rng(10);
  for (double c : {0.1, 10.0}) {
    const auto p = testsup::random_model(rng, 6, 2, 1, 1);
    ModelParams scaled = p;
    scaled.factors[0] *= c;
    scaled.means[0] *= c;
    scaled.noise_vars[0] *= c * c;
    VectorXd y(6);
    for (int r = 0; r < 6; ++r) y[r] = rng.normal();
    const VectorXd zm = posterior_mean(y, 0, 0, p);
    const VectorXd zm_scaled = posterior_mean(c * y, 0, 0, scaled);
    CHECK((zm - zm_scaled).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + zm.norm()));
    const MatrixXd s1 = posterior_second_moment(zm, 0, 0, p);
    const MatrixXd s2 = posterior_second_moment(zm_scaled, 0, 0, scaled);
    CHECK((s1 - s2).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + s1.norm()));
  }
}
