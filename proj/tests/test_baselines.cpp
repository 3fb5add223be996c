#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <set>

#include "hemppcat/baselines.hpp"
#include "hemppcat/driver.hpp"
#include "hemppcat/likelihood.hpp"
#include "hemppcat/rng.hpp"
#include "hemppcat/synthgen.hpp"
#include "test_support.hpp"

using namespace hemppcat;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

namespace {

// Two well-separated rank-k affine subspaces with exact (noiseless) samples.
Dataset two_plane_dataset(Rng& rng, int d, int k, int per_cluster, double gap) {
  Dataset data;
  const int n = 2 * per_cluster;
  data.samples.resize(d, n);
  data.group = VectorXi::Zero(n);
  VectorXi label(n);
  for (int c = 0; c < 2; ++c) {
    MatrixXd U = random_stiefel(d, k, rng);
    VectorXd mu = VectorXd::Zero(d);
    mu[c] = gap * (c == 0 ? 1.0 : -1.0);
    for (int i = 0; i < per_cluster; ++i) {
      VectorXd z(k);
      for (int r = 0; r < k; ++r) z[r] = rng.normal();
      const int col = c * per_cluster + i;
      data.samples.col(col) = U * z + mu;
      label[col] = c;
    }
  }
  data.label = label;
  return data;
}

}  // namespace

TEST_CASE("kplanes: the true assignment of noiseless planes is a fixed point") {
  Rng rng(1);
  const Dataset data = two_plane_dataset(rng, 10, 2, 30, 50.0);
  const auto state = kplanes_from_assignment(data, *data.label, 2, 2, 100);
  CHECK(state.objective < 1e-9 * data.samples.squaredNorm());  // zero up to roundoff
  CHECK(state.assignment == *data.label);
  CHECK(state.iterations == 0);  // no assignment change after the first refit
}

TEST_CASE("kplanes with J=1 is a global PCA") {
  Rng rng(2);
  const auto p = testsup::random_model(rng, 8, 2, 1, 1);
  const auto data = testsup::random_dataset(rng, p, 60);
  const auto state = kplanes(data, 1, 2, 50, 3);
  CHECK((state.offsets[0] - data.samples.rowwise().mean()).cwiseAbs().maxCoeff() <
        1e-12);
  // Top-2 eigenvectors of the centered scatter, computed directly.
  const MatrixXd centered = data.samples.colwise() - data.samples.rowwise().mean();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(centered * centered.transpose());
  MatrixXd top(8, 2);
  top.col(0) = eig.eigenvectors().col(7);
  top.col(1) = eig.eigenvectors().col(6);
  CHECK(testsup::principal_angle(state.bases[0], top) < 1e-10);
}

TEST_CASE("kplanes bases stay orthonormal and the objective never increases") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 4 + rng.uniform_int(5);
    const int k = 1 + rng.uniform_int(2);
    const int J = 1 + rng.uniform_int(3);
    const auto p = testsup::random_model(rng, d, k, J, 1);
    const auto data = testsup::random_dataset(rng, p, 30 + rng.uniform_int(30));
    const auto state = kplanes(data, J, k, 100, trial);
    for (int j = 0; j < J; ++j) {
      const MatrixXd gram =
          state.bases[j].transpose() * state.bases[j] - MatrixXd::Identity(k, k);
      CHECK(gram.cwiseAbs().maxCoeff() < 1e-10);
    }
    for (std::size_t t = 1; t < state.objective_trace.size(); ++t)
      CHECK(state.objective_trace[t] <=
            state.objective_trace[t - 1] + 1e-9 * (1.0 + state.objective_trace[t - 1]));
  }
}

TEST_CASE("mppca with J=1 converges to the PPCA eigenstructure") {
  Rng rng(4);
  SynthConfig cfg;
  cfg.n = 400;
  cfg.d = 12;
  cfg.k = 3;
  cfg.J = 1;
  cfg.L = 1;
  cfg.lambda = VectorXd(3);
  cfg.lambda << 16.0, 9.0, 4.0;
  cfg.group_vars = VectorXd::Constant(1, 0.1);
  cfg.counts = Eigen::MatrixXi::Constant(1, 1, 400);
  cfg.seed = 5;
  const GroundTruth gt = generate(cfg);
  FitOptions opt;
  opt.rel_tol = 1e-12;
  opt.max_iters = 3000;
  opt.seed = 6;
  const auto [params, report] = mppca_fit(gt.data, 1, 3, opt);
  CHECK(report.stop_reason != StopReason::degenerate);

  const VectorXd mean = gt.data.samples.rowwise().mean();
  const MatrixXd centered = gt.data.samples.colwise() - mean;
  const MatrixXd S = centered * centered.transpose() / gt.data.n();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(S);
  MatrixXd top(12, 3);
  double tail = 0.0;
  for (int c = 0; c < 3; ++c) top.col(c) = eig.eigenvectors().col(11 - c);
  for (int c = 0; c < 9; ++c) tail += eig.eigenvalues()[c];
  tail /= 9.0;
  CHECK(testsup::principal_angle(params.factors[0], top) < 1e-4);
  CHECK(params.noise_vars[0] == doctest::Approx(tail).epsilon(1e-4));
  // Factor grams recover eigenvalue - v along each principal direction.
  Eigen::SelfAdjointEigenSolver<MatrixXd> gram(params.factors[0].transpose() *
                                               params.factors[0]);
  for (int c = 0; c < 3; ++c) {
    const double expect = eig.eigenvalues()[11 - c] - params.noise_vars[0];
    CHECK(gram.eigenvalues()[2 - c] == doctest::Approx(expect).epsilon(1e-3));
  }
}

TEST_CASE("homoscedastic data: classical and heteroscedastic fits agree in LL") {
  SynthConfig cfg;
  cfg.n = 300;
  cfg.d = 15;
  cfg.k = 2;
  cfg.J = 2;
  cfg.L = 2;
  cfg.lambda = VectorXd(2);
  cfg.lambda << 9.0, 4.0;
  cfg.group_vars = VectorXd::Constant(2, 1.0);  // v1 = v2
  cfg.counts.resize(2, 2);
  cfg.counts << 90, 90, 60, 60;
  cfg.seed = 11;
  const GroundTruth gt = generate(cfg);
  const Hyper hyper{15, 2, 2, 2};

  FitOptions opt;
  opt.seed = 13;
  const auto [mp, mp_report] = mppca_fit(gt.data, 2, 2, opt);
  const auto [he, he_report] = fit(gt.data, hyper, opt);
  const double ll_mp = mppca_observed_log_likelihood(gt.data, mp);
  const double ll_he = observed_log_likelihood(gt.data, he);
  CHECK(std::abs(ll_he - ll_mp) / std::abs(ll_mp) < 1e-3);
}

TEST_CASE("classical EM traces are monotone on seeded problems") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 4 + rng.uniform_int(4);
    const int k = 1 + rng.uniform_int(2);
    const int J = 1 + rng.uniform_int(2);
    const auto p = testsup::random_model(rng, d, k, J, 1);
    const auto data = testsup::random_dataset(rng, p, 30 + rng.uniform_int(20));
    FitOptions opt;
    opt.max_iters = 30;
    opt.seed = trial;
    const auto [params, report] = mppca_fit(data, J, k, opt);
    for (std::size_t t = 1; t < report.ll_trace.size(); ++t)
      CHECK(report.ll_trace[t] >=
            report.ll_trace[t - 1] - 1e-8 * (1.0 + std::abs(report.ll_trace[t])));
  }
}

TEST_CASE("with L=1 and J=1 both machines land on the same likelihood") {
  SynthConfig cfg;
  cfg.n = 200;
  cfg.d = 10;
  cfg.k = 2;
  cfg.J = 1;
  cfg.L = 1;
  cfg.lambda = VectorXd(2);
  cfg.lambda << 6.0, 3.0;
  cfg.group_vars = VectorXd::Constant(1, 0.4);
  cfg.counts = Eigen::MatrixXi::Constant(1, 1, 200);
  cfg.seed = 21;
  const GroundTruth gt = generate(cfg);

  FitOptions opt;
  opt.rel_tol = 1e-11;
  opt.max_iters = 2000;
  opt.seed = 3;
  const auto [mp, mp_report] = mppca_fit(gt.data, 1, 2, opt);

  ModelParams he_init;
  he_init.factors = mp.factors;
  he_init.means = mp.means;
  he_init.noise_vars = mp.noise_vars;  // L = 1 = J
  he_init.weights = mp.weights;
  FitOptions he_opt = opt;
  he_opt.init = InitMethod::explicit_params;
  he_opt.init_params = he_init;
  const auto [he, he_report] = fit(gt.data, Hyper{10, 2, 1, 1}, he_opt);

  const double ll_mp = mppca_observed_log_likelihood(gt.data, mp);
  const double ll_he = observed_log_likelihood(gt.data, he);
  CHECK(std::abs(ll_he - ll_mp) <= 1e-8 * (1.0 + std::abs(ll_mp)));
}

TEST_CASE("kmeanspp_seed: J = n selects every index") {
  Rng rng(8);
  const auto p = testsup::random_model(rng, 4, 1, 1, 1);
  const auto data = testsup::random_dataset(rng, p, 7);
  const auto idx = kmeanspp_seed(data, 7, 42);
  std::set<int> unique(idx.begin(), idx.end());
  CHECK(unique.size() == 7);
}

TEST_CASE("kmeanspp_seed never picks two duplicate points while distinct remain") {
  Dataset data;
  data.samples.resize(2, 6);
  data.samples << 0, 0, 1, 1, 2, 3,  //
      0, 0, 1, 1, 2, 3;              // columns 0/1 and 2/3 are duplicates
  data.group = VectorXi::Zero(6);
  for (int seed = 0; seed < 20; ++seed) {
    const auto idx = kmeanspp_seed(data, 4, seed);
    std::set<std::pair<double, double>> points;
    for (int i : idx) points.insert({data.samples(0, i), data.samples(1, i)});
    CHECK(points.size() == 4);  // all chosen points are distinct values
  }
}

TEST_CASE("kmeanspp_seed is deterministic in its seed") {
  Rng rng(9);
  const auto p = testsup::random_model(rng, 3, 1, 2, 1);
  const auto data = testsup::random_dataset(rng, p, 40);
  CHECK(kmeanspp_seed(data, 5, 123) == kmeanspp_seed(data, 5, 123));
  CHECK(kmeanspp_seed(data, 5, 123) != kmeanspp_seed(data, 5, 124));
}

TEST_CASE("an assignment fixed point implies an objective fixed point") {
  Rng rng(10);
  const auto p = testsup::random_model(rng, 6, 2, 2, 1);
  const auto data = testsup::random_dataset(rng, p, 50);
  const auto state = kplanes(data, 2, 2, 200, 5);
  // Re-running from the final assignment changes nothing.
  const auto again = kplanes_from_assignment(data, state.assignment, 2, 2, 200);
  CHECK(again.assignment == state.assignment);
  CHECK(again.objective == doctest::Approx(state.objective).epsilon(1e-12));
}
