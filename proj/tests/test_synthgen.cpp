#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hemppcat/rng.hpp"
#include "hemppcat/synthgen.hpp"
#include "test_support.hpp"

using namespace hemppcat;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

TEST_CASE("random_stiefel columns are orthonormal") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 2 + rng.uniform_int(8);
    const int k = 1 + rng.uniform_int(d);
    const MatrixXd U = random_stiefel(d, k, rng);
    const MatrixXd gram = U.transpose() * U - MatrixXd::Identity(k, k);
    CHECK(gram.cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("random_stiefel with k = d is orthogonal with unit determinant") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd U = random_stiefel(5, 5, rng);
    CHECK(std::abs(std::abs(U.determinant()) - 1.0) < 1e-10);
  }
}

TEST_CASE("mean projector over many draws approaches (k/d) I") {
  Rng rng(3);
  const int d = 6, k = 2, draws = 10000;
  MatrixXd acc = MatrixXd::Zero(d, d);
  MatrixXd acc_sq = MatrixXd::Zero(d, d);
  for (int s = 0; s < draws; ++s) {
    const MatrixXd U = random_stiefel(d, k, rng);
    const MatrixXd P = U * U.transpose();
    acc += P;
    acc_sq += P.cwiseProduct(P);
  }
  const MatrixXd mean = acc / draws;
  const MatrixXd expect = (static_cast<double>(k) / d) * MatrixXd::Identity(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) {
      const double var = acc_sq(r, c) / draws - mean(r, c) * mean(r, c);
      const double se = std::sqrt(var / draws);
      CHECK(std::abs(mean(r, c) - expect(r, c)) < 5.0 * se + 1e-12);
    }
}

namespace {

SynthConfig reference_benchmark_config() {
  SynthConfig cfg;
  cfg.n = 1000;
  cfg.d = 100;
  cfg.k = 3;
  cfg.J = 3;
  cfg.L = 2;
  cfg.lambda = VectorXd(3);
  cfg.lambda << 16.0, 9.0, 4.0;
  cfg.group_vars = VectorXd(2);
  cfg.group_vars << 1.0, 1.0;
  cfg.counts.resize(2, 3);
  cfg.counts << 250, 250, 300, 50, 100, 50;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("generated cell counts match the configuration exactly") {
  const SynthConfig cfg = reference_benchmark_config();
  const GroundTruth gt = generate(cfg);
  REQUIRE(gt.data.n() == 1000);
  REQUIRE(gt.data.dim() == 100);
  Eigen::MatrixXi hist = Eigen::MatrixXi::Zero(2, 3);
  for (int i = 0; i < gt.data.n(); ++i)
    ++hist(gt.data.group[i], (*gt.data.label)[i]);
  CHECK(hist == cfg.counts);
  CHECK(gt.truth.factors[0].cols() == 3);
  // Factor spectrum is carried by the gram's eigenvalues.
  const MatrixXd gram = gt.truth.factors[1].transpose() * gt.truth.factors[1];
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
  CHECK(eig.eigenvalues()[2] == doctest::Approx(16.0).epsilon(1e-10));
  CHECK(eig.eigenvalues()[1] == doctest::Approx(9.0).epsilon(1e-10));
  CHECK(eig.eigenvalues()[0] == doctest::Approx(4.0).epsilon(1e-10));
}

TEST_CASE("zero-variance configs emit samples exactly on the affine spans") {
  SynthConfig cfg;
  cfg.n = 40;
  cfg.d = 8;
  cfg.k = 2;
  cfg.J = 2;
  cfg.L = 1;
  cfg.lambda = VectorXd(2);
  cfg.lambda << 4.0, 1.0;
  cfg.group_vars = VectorXd::Zero(1);
  cfg.counts = Eigen::MatrixXi::Constant(1, 2, 20);
  cfg.seed = 9;
  const GroundTruth gt = generate(cfg);
  for (int i = 0; i < gt.data.n(); ++i) {
    const int j = (*gt.data.label)[i];
    const MatrixXd& F = gt.truth.factors[j];
    const VectorXd ybar = gt.data.samples.col(i) - gt.truth.means[j];
    // Residual off the factor span.
    const VectorXd coef =
        (F.transpose() * F).ldlt().solve(F.transpose() * ybar);
    CHECK((ybar - F * coef).norm() < 1e-10);
  }
}

TEST_CASE("empirical covariance of a long stream approaches F F^T + v I") {
  SynthConfig cfg;
  cfg.n = 100000;
  cfg.d = 10;
  cfg.k = 2;
  cfg.J = 1;
  cfg.L = 1;
  cfg.lambda = VectorXd(2);
  cfg.lambda << 9.0, 4.0;
  cfg.group_vars = VectorXd::Constant(1, 0.5);
  cfg.counts = Eigen::MatrixXi::Constant(1, 1, 100000);
  cfg.seed = 13;
  const GroundTruth gt = generate(cfg);
  const VectorXd mean = gt.data.samples.rowwise().mean();
  const MatrixXd centered = gt.data.samples.colwise() - mean;
  const MatrixXd S = centered * centered.transpose() / cfg.n;
  MatrixXd C = gt.truth.factors[0] * gt.truth.factors[0].transpose();
  C.diagonal().array() += 0.5;
  CHECK((S - C).norm() / C.norm() < 0.05);
}

TEST_CASE("generation is deterministic in the seed") {
  const SynthConfig cfg = reference_benchmark_config();
  const GroundTruth a = generate(cfg);
  const GroundTruth b = generate(cfg);
  CHECK(a.data.samples == b.data.samples);
  CHECK(a.data.group == b.data.group);
  CHECK(a.truth.factors[2] == b.truth.factors[2]);
}

TEST_CASE("trajectory CSVs round-trip coordinates and labels bitwise") {
  SynthConfig cfg;
  cfg.n = 30;
  cfg.d = 12;  // 6 frames
  cfg.k = 3;
  cfg.J = 2;
  cfg.L = 1;
  cfg.lambda = VectorXd(3);
  cfg.lambda << 9.0, 4.0, 1.0;
  cfg.group_vars = VectorXd::Constant(1, 0.2);
  cfg.counts = Eigen::MatrixXi::Constant(1, 2, 15);
  cfg.seed = 17;
  const GroundTruth gt = generate(cfg);
  const std::string path = testsup::temp_path("traj");
  write_trajectory_csv(path, gt.data);
  const Dataset back = ingest_trajectories(path);
  CHECK(back.samples == gt.data.samples);
  REQUIRE(back.label.has_value());
  CHECK(*back.label == *gt.data.label);
  CHECK((back.group.array() == 0).all());
  std::filesystem::remove(path);
}

TEST_CASE("group shares (0.5, 0.35, 0.15) on n=100 give sizes (50, 35, 15)") {
  Rng rng(19);
  Dataset data;
  data.samples = MatrixXd::Constant(4, 100, 1.0);
  for (int i = 0; i < 100; ++i)
    for (int r = 0; r < 4; ++r) data.samples(r, i) += 0.01 * rng.normal();
  data.group = VectorXi::Zero(100);
  const Dataset noisy = apply_group_noise(data, default_trajectory_noise(23));
  Eigen::VectorXi sizes = Eigen::VectorXi::Zero(3);
  for (int i = 0; i < 100; ++i) ++sizes[noisy.group[i]];
  CHECK(sizes[0] == 50);
  CHECK(sizes[1] == 35);
  CHECK(sizes[2] == 15);
}

TEST_CASE("realized noise variances concentrate at the SNR-derived values") {
  Rng rng(23);
  const int n = 300, d = 40;
  Dataset data;
  data.samples.resize(d, n);
  for (int i = 0; i < n; ++i)
    for (int r = 0; r < d; ++r) data.samples(r, i) = rng.normal();
  data.group = VectorXi::Zero(n);
  double max_norm2 = 0.0;
  for (int i = 0; i < n; ++i)
    max_norm2 = std::max(max_norm2, data.samples.col(i).squaredNorm());

  const TrajectoryNoise noise = default_trajectory_noise(29);
  const Dataset noisy = apply_group_noise(data, noise);
  for (int l = 0; l < 3; ++l) {
    double sum2 = 0.0;
    int count = 0;
    for (int i = 0; i < n; ++i) {
      if (noisy.group[i] != l) continue;
      sum2 += (noisy.samples.col(i) - data.samples.col(i)).squaredNorm();
      count += d;
    }
    const double v_target = max_norm2 * std::pow(10.0, noise.snr_db[static_cast<std::size_t>(l)] / 10.0);
    const double v_hat = sum2 / count;
    // chi^2 concentration: sd of the mean of `count` squares is v sqrt(2/count)
    const double se = v_target * std::sqrt(2.0 / count);
    CHECK(std::abs(v_hat - v_target) < 3.0 * se);
  }
}

TEST_CASE("ingest without a noise config leaves the data unchanged") {
  SynthConfig cfg;
  cfg.n = 20;
  cfg.d = 8;
  cfg.k = 2;
  cfg.J = 2;
  cfg.L = 1;
  cfg.lambda = VectorXd(2);
  cfg.lambda << 4.0, 1.0;
  cfg.group_vars = VectorXd::Constant(1, 0.3);
  cfg.counts = Eigen::MatrixXi::Constant(1, 2, 10);
  cfg.seed = 31;
  const GroundTruth gt = generate(cfg);
  const std::string path = testsup::temp_path("traj_nonoise");
  write_trajectory_csv(path, gt.data);
  const Dataset back = ingest_trajectories(path, std::nullopt);
  CHECK(back.samples == gt.data.samples);
  CHECK((back.group.array() == 0).all());
  std::filesystem::remove(path);
}

TEST_CASE("zero-share groups are dropped and the rest renumbered") {
  Rng rng(37);
  Dataset data;
  data.samples.resize(3, 50);
  for (int i = 0; i < 50; ++i)
    for (int r = 0; r < 3; ++r) data.samples(r, i) = rng.normal();
  data.group = VectorXi::Zero(50);
  TrajectoryNoise noise{{-30.0, -10.0, -20.0}, {0.6, 0.0, 0.4}, 5};
  const Dataset noisy = apply_group_noise(data, noise);
  CHECK(noisy.group.maxCoeff() == 1);  // two surviving groups
  Eigen::VectorXi sizes = Eigen::VectorXi::Zero(2);
  for (int i = 0; i < 50; ++i) ++sizes[noisy.group[i]];
  CHECK(sizes[0] == 30);
  CHECK(sizes[1] == 20);
}

TEST_CASE("trajectory ingestion rejects inconsistent frames and missing labels") {
  const std::string path = testsup::temp_path("traj_bad");
  {
    std::ofstream out(path);
    out << "point_id,frame,x,y,body\n";
    out << "1,1,0.0,0.0,1\n1,2,0.1,0.1,1\n2,1,5.0,5.0,2\n";  // point 2 lacks frame 2
  }
  CHECK_THROWS_AS(ingest_trajectories(path), IoError);
  {
    std::ofstream out(path);
    out << "point_id,frame,x,y,body\n";
    out << "1,1,0.0,0.0,\n";
  }
  CHECK_THROWS_AS(ingest_trajectories(path), IoError);
  std::filesystem::remove(path);
}
