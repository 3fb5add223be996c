#include <doctest.h>

#include <cmath>
#include <numeric>

#include "hemppcat/driver.hpp"
#include "hemppcat/eval.hpp"
#include "hemppcat/likelihood.hpp"
#include "hemppcat/mstep.hpp"
#include "hemppcat/rng.hpp"
#include "hemppcat/synthgen.hpp"
#include "test_support.hpp"

using namespace hemppcat;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

bool trace_non_decreasing(const std::vector<double>& trace) {
  for (std::size_t t = 1; t < trace.size(); ++t)
    if (trace[t] < trace[t - 1] - 1e-8 * (1.0 + std::abs(trace[t])))
      return false;
  return true;
}

SynthConfig small_config(int n, int d, int k, int J, int L, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n = n;
  cfg.d = d;
  cfg.k = k;
  cfg.J = J;
  cfg.L = L;
  cfg.lambda = VectorXd::LinSpaced(k, 4.0, 2.0).cwiseAbs();
  std::sort(cfg.lambda.data(), cfg.lambda.data() + k, std::greater<double>());
  cfg.group_vars = VectorXd::Constant(L, 0.5);
  cfg.counts.resize(L, J);
  const int cell = n / (L * J);
  cfg.counts.setConstant(cell);
  cfg.counts(L - 1, J - 1) += n - cell * L * J;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("high-SNR single-component fit recovers the factor") {
  // Threshold 0.05 was confirmed by a pilot sweep over n and seeds; at
  // n = 8000 the error sits near 0.015.
  SynthConfig cfg = small_config(8000, 20, 2, 1, 1, 99);
  cfg.lambda = VectorXd(2);
  cfg.lambda << 4.0, 2.0;
  cfg.group_vars = VectorXd::Constant(1, 0.01);
  const GroundTruth gt = generate(cfg);
  FitOptions opt;
  opt.seed = 7;
  const auto [params, report] = fit(gt.data, Hyper{20, 2, 1, 1}, opt);
  CHECK(report.stop_reason != StopReason::degenerate);
  CHECK(factor_error(params.factors[0], gt.truth.factors[0]) < 0.05);
}

TEST_CASE("explicit init at the truth cannot end below its own likelihood") {
  Rng rng(1);
  SynthConfig cfg = small_config(120, 8, 2, 2, 2, 3);
  const GroundTruth gt = generate(cfg);
  FitOptions opt;
  opt.init = InitMethod::explicit_params;
  opt.init_params = gt.truth;
  const double ll_truth = observed_log_likelihood(gt.data, gt.truth);
  const auto [params, report] = fit(gt.data, Hyper{8, 2, 2, 2}, opt);
  CHECK(report.ll_trace.back() >= ll_truth - 1e-6);
}

TEST_CASE("max_iters = 0 is rejected; max_iters = 1 does exactly one sweep") {
  Rng rng(2);
  const auto p = testsup::random_model(rng, 6, 2, 2, 2);
  const auto data = testsup::random_dataset(rng, p, 50);
  FitOptions opt;
  opt.max_iters = 0;
  opt.init = InitMethod::explicit_params;
  opt.init_params = p;
  CHECK_THROWS_AS(fit(data, Hyper{6, 2, 2, 2}, opt), ValidationError);
  opt.max_iters = 1;
  const auto [params, report] = fit(data, Hyper{6, 2, 2, 2}, opt);
  CHECK(report.iterations == 1);
  CHECK(report.ll_trace.size() == 2);
  CHECK_FALSE(report.converged);
  CHECK(report.stop_reason == StopReason::max_iters);
}

TEST_CASE("one driver sweep equals the op composition bitwise") {
  Rng rng(3);
  const auto p = testsup::random_model(rng, 7, 2, 2, 2);
  const auto data = testsup::random_dataset(rng, p, 60);
  const Hyper hyper{7, 2, 2, 2};

  const MatrixXd R = responsibilities(data, p);
  const EStep moments(p, hyper);
  const VectorXd pi1 = update_pi(R);
  const VectorXd v1 = update_v(data, R, moments);
  const auto mu1 = update_mu(data, R, moments, v1);
  const auto F1 = update_F(data, R, moments, v1, mu1);

  FitOptions opt;
  opt.max_iters = 1;
  opt.init = InitMethod::explicit_params;
  opt.init_params = p;
  const auto [params, report] = fit(data, hyper, opt);
  CHECK(params.weights == pi1);
  CHECK(params.noise_vars == v1);
  for (int j = 0; j < 2; ++j) {
    CHECK(params.means[j] == mu1[j]);
    CHECK(params.factors[j] == F1[j]);
  }
}

TEST_CASE("log-likelihood traces are non-decreasing on seeded problems") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 4 + rng.uniform_int(6);
    const int k = 1 + rng.uniform_int(std::min(d - 1, 3));
    const int J = 1 + rng.uniform_int(3);
    const int L = 1 + rng.uniform_int(3);
    const auto p = testsup::random_model(rng, d, k, J, L);
    const auto data = testsup::random_dataset(rng, p, 40 + rng.uniform_int(60));
    FitOptions opt;
    opt.max_iters = 40;
    opt.init = InitMethod::explicit_params;
    ModelParams init = testsup::random_model(rng, d, k, J, L);
    opt.init_params = init;
    const auto [params, report] = fit(data, Hyper{d, k, J, L}, opt);
    CHECK(trace_non_decreasing(report.ll_trace));
    if (report.stop_reason != StopReason::degenerate)
      CHECK_NOTHROW(validate_params(params, Hyper{d, k, J, L}));
  }
}

TEST_CASE("permuting sample order leaves the converged likelihood unchanged") {
  Rng rng(5);
  SynthConfig cfg = small_config(90, 7, 2, 2, 2, 17);
  const GroundTruth gt = generate(cfg);
  FitOptions opt;
  opt.init = InitMethod::explicit_params;
  opt.init_params = gt.truth;
  opt.rel_tol = 1e-9;
  const auto [p1, r1] = fit(gt.data, Hyper{7, 2, 2, 2}, opt);

  Dataset shuffled = gt.data;
  std::vector<int> order(static_cast<std::size_t>(gt.data.n()));
  std::iota(order.begin(), order.end(), 0);
  for (int i = gt.data.n() - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
  for (int i = 0; i < gt.data.n(); ++i) {
    shuffled.samples.col(i) = gt.data.samples.col(order[static_cast<std::size_t>(i)]);
    shuffled.group[i] = gt.data.group[order[static_cast<std::size_t>(i)]];
  }
  shuffled.label.reset();
  const auto [p2, r2] = fit(shuffled, Hyper{7, 2, 2, 2}, opt);
  CHECK(std::abs(r1.ll_trace.back() - r2.ll_trace.back()) <=
        1e-9 * (1.0 + std::abs(r1.ll_trace.back())));
}

TEST_CASE("fits are bitwise deterministic for a fixed seed") {
  SynthConfig cfg = small_config(80, 6, 2, 2, 2, 23);
  const GroundTruth gt = generate(cfg);
  FitOptions opt;
  opt.seed = 31;
  opt.max_iters = 60;
  const auto [p1, r1] = fit(gt.data, Hyper{6, 2, 2, 2}, opt);
  const auto [p2, r2] = fit(gt.data, Hyper{6, 2, 2, 2}, opt);
  CHECK(r1.ll_trace == r2.ll_trace);
  CHECK(r1.iterations == r2.iterations);
  CHECK(p1.weights == p2.weights);
  CHECK(p1.noise_vars == p2.noise_vars);
  for (int j = 0; j < 2; ++j) {
    CHECK(p1.means[j] == p2.means[j]);
    CHECK(p1.factors[j] == p2.factors[j]);
  }
}

TEST_CASE("init_from_mppca with J=1 copies the single variance to every group") {
  SynthConfig cfg = small_config(70, 6, 2, 1, 3, 41);
  const GroundTruth gt = generate(cfg);
  const ModelParams init = init_from_mppca(gt.data, Hyper{6, 2, 1, 3}, 5);
  // J=1: responsibilities are all one, so each group variance equals the
  // single fitted variance.
  for (int l = 1; l < 3; ++l)
    CHECK(init.noise_vars[l] == doctest::Approx(init.noise_vars[0]).epsilon(1e-12));
}

TEST_CASE("init_from_mppca returns valid parameters on random datasets") {
  Rng rng(6);
  for (int trial = 0; trial < 25; ++trial) {
    const int d = 4 + rng.uniform_int(4);
    const int k = 1 + rng.uniform_int(2);
    const int J = 1 + rng.uniform_int(2);
    const int L = 1 + rng.uniform_int(2);
    const auto p = testsup::random_model(rng, d, k, J, L);
    const auto data = testsup::random_dataset(rng, p, 40 + rng.uniform_int(20));
    const ModelParams init = init_from_mppca(data, Hyper{d, k, J, L}, trial);
    CHECK_NOTHROW(validate_params(init, Hyper{d, k, J, L}));
  }
}

TEST_CASE("the fit started from classical estimates ends at or above them") {
  SynthConfig cfg = small_config(150, 12, 2, 2, 2, 57);
  cfg.group_vars << 2.0, 0.5;
  const GroundTruth gt = generate(cfg);
  const Hyper hyper{12, 2, 2, 2};
  const ModelParams init = init_from_mppca(gt.data, hyper, 9);
  const double ll_init = observed_log_likelihood(gt.data, init);
  FitOptions opt;
  opt.init = InitMethod::explicit_params;
  opt.init_params = init;
  const auto [params, report] = fit(gt.data, hyper, opt);
  CHECK(report.ll_trace.back() >= ll_init - 1e-9 * (1.0 + std::abs(ll_init)));
}

TEST_CASE("init_from_kmeanspp: J=1 mean is the global mean") {
  SynthConfig cfg = small_config(60, 5, 2, 1, 2, 71);
  const GroundTruth gt = generate(cfg);
  const ModelParams init = init_from_kmeanspp(gt.data, Hyper{5, 2, 1, 2}, 3);
  CHECK((init.means[0] - gt.data.samples.rowwise().mean()).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("init_from_kmeanspp is deterministic and keeps every weight positive") {
  SynthConfig cfg = small_config(60, 5, 2, 3, 2, 72);
  const GroundTruth gt = generate(cfg);
  const Hyper hyper{5, 2, 3, 2};
  const ModelParams a = init_from_kmeanspp(gt.data, hyper, 12);
  const ModelParams b = init_from_kmeanspp(gt.data, hyper, 12);
  CHECK(a.weights == b.weights);
  CHECK(a.noise_vars == b.noise_vars);
  for (int j = 0; j < 3; ++j) {
    CHECK(a.means[j] == b.means[j]);
    CHECK(a.factors[j] == b.factors[j]);
  }
  CHECK(a.weights.minCoeff() > 0.0);
  CHECK_NOTHROW(validate_params(a, hyper));
}
