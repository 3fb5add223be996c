#include "hemppcat/synthgen.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <vector>

#include "hemppcat/io.hpp"

namespace hemppcat {

namespace {

// Seed-stream tags local to generation.
constexpr std::uint64_t kTagModel = 11;
constexpr std::uint64_t kTagSamples = 12;

}  // namespace

void validate_synth_config(const SynthConfig& config) {
  if (config.n < 1 || config.d < 1 || config.J < 1 || config.L < 1)
    throw ValidationError("synth config sizes must be positive");
  if (config.k < 1 || config.k >= config.d)
    throw ValidationError("synth config requires 1 <= k < d");
  if (config.lambda.size() != config.k)
    throw ValidationError("factor spectrum must have k entries");
  for (int i = 0; i < config.k; ++i) {
    if (!(config.lambda[i] > 0.0))
      throw ValidationError("factor spectrum entries must be positive");
    if (i > 0 && config.lambda[i] > config.lambda[i - 1])
      throw ValidationError("factor spectrum must be non-increasing");
  }
  if (config.group_vars.size() != config.L)
    throw ValidationError("group variances must have L entries");
  for (int l = 0; l < config.L; ++l)
    if (!(config.group_vars[l] >= 0.0))
      throw ValidationError("group variances must be nonnegative");
  if (config.counts.rows() != config.L || config.counts.cols() != config.J)
    throw ValidationError("counts matrix must be L x J");
  long total = 0;
  for (int l = 0; l < config.L; ++l)
    for (int j = 0; j < config.J; ++j) {
      if (config.counts(l, j) < 0) throw ValidationError("counts must be nonnegative");
      total += config.counts(l, j);
    }
  if (total != config.n)
    throw ValidationError("counts must sum to n (got " + std::to_string(total) + ")");
  for (int l = 0; l < config.L; ++l)
    if (config.counts.row(l).sum() == 0)
      throw ValidationError("every noise group needs at least one sample");
}

Eigen::MatrixXd random_stiefel(int d, int k, Rng& rng) {
  if (k > d) throw ValidationError("random_stiefel requires k <= d");
  Eigen::MatrixXd G(d, k);
  for (int c = 0; c < k; ++c)
    for (int r = 0; r < d; ++r) G(r, c) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
  const Eigen::MatrixXd R = qr.matrixQR().topRows(k);
  // Fixing the R diagonal sign makes the factorization unique, hence Haar.
  for (int c = 0; c < k; ++c)
    if (R(c, c) < 0.0) Q.col(c) = -Q.col(c);
  return Q;
}

ModelParams sample_model(const SynthConfig& config, Rng& rng) {
  ModelParams truth;
  const Eigen::VectorXd scale = config.lambda.cwiseSqrt();
  for (int j = 0; j < config.J; ++j) {
    truth.factors.push_back(random_stiefel(config.d, config.k, rng) *
                            scale.asDiagonal());
    Eigen::VectorXd mu(config.d);
    for (int r = 0; r < config.d; ++r) mu[r] = rng.uniform();
    truth.means.push_back(std::move(mu));
  }
  truth.noise_vars = config.group_vars;
  truth.weights.resize(config.J);
  for (int j = 0; j < config.J; ++j)
    truth.weights[j] =
        static_cast<double>(config.counts.col(j).sum()) / config.n;
  return truth;
}

Dataset sample_dataset(const SynthConfig& config, const ModelParams& truth,
                       Rng& rng) {
  Dataset data;
  data.samples.resize(config.d, config.n);
  data.group.resize(config.n);
  Eigen::VectorXi label(config.n);

  int col = 0;
  Eigen::VectorXd z(config.k);
  for (int l = 0; l < config.L; ++l) {
    for (int j = 0; j < config.J; ++j) {
      const double sd = std::sqrt(config.group_vars[l]);
      for (int c = 0; c < config.counts(l, j); ++c) {
        for (int r = 0; r < config.k; ++r) z[r] = rng.normal();
        Eigen::VectorXd y = truth.factors[static_cast<std::size_t>(j)] * z +
                            truth.means[static_cast<std::size_t>(j)];
        for (int r = 0; r < config.d; ++r) y[r] += sd * rng.normal();
        data.samples.col(col) = y;
        data.group[col] = l;
        label[col] = j;
        ++col;
      }
    }
  }
  data.label = std::move(label);
  return data;
}

GroundTruth generate(const SynthConfig& config) {
  validate_synth_config(config);
  const Rng root(config.seed);
  Rng model_rng = root.fork(kTagModel);
  Rng sample_rng = root.fork(kTagSamples);
  GroundTruth out;
  out.truth = sample_model(config, model_rng);
  out.data = sample_dataset(config, out.truth, sample_rng);
  return out;
}

TrajectoryNoise default_trajectory_noise(std::uint64_t seed) {
  return TrajectoryNoise{{-30.0, -25.0, -20.0}, {0.50, 0.35, 0.15}, seed};
}

Dataset apply_group_noise(const Dataset& data, const TrajectoryNoise& noise) {
  if (noise.snr_db.size() != noise.shares.size())
    throw ValidationError("snr_db and shares must have the same length");
  if (noise.shares.empty()) throw ValidationError("noise config has no groups");
  double share_sum = 0.0;
  for (double s : noise.shares) {
    if (s < 0.0) throw ValidationError("noise shares must be nonnegative");
    share_sum += s;
  }
  if (std::abs(share_sum - 1.0) > 1e-9)
    throw ValidationError("noise shares must sum to 1");

  const int n = data.n();
  const int d = data.dim();

  // Cumulative-floor sizes sum exactly to n.
  const int groups_in = static_cast<int>(noise.shares.size());
  std::vector<int> sizes(static_cast<std::size_t>(groups_in));
  double cum = 0.0;
  int prev = 0;
  for (int g = 0; g < groups_in; ++g) {
    cum += noise.shares[static_cast<std::size_t>(g)];
    const int upto = g + 1 == groups_in ? n : static_cast<int>(std::floor(cum * n));
    sizes[static_cast<std::size_t>(g)] = upto - prev;
    prev = upto;
  }

  // Seeded uniform permutation split.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(noise.seed);
  for (int i = n - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(rng.uniform_int(i + 1))]);

  double max_norm2 = 0.0;
  for (int i = 0; i < n; ++i)
    max_norm2 = std::max(max_norm2, data.samples.col(i).squaredNorm());

  Dataset out = data;
  out.group.resize(n);
  int pos = 0;
  int next_group = 0;  // zero-share groups are dropped, survivors renumbered
  for (int g = 0; g < groups_in; ++g) {
    const int m = sizes[static_cast<std::size_t>(g)];
    if (m == 0) continue;
    const double v = max_norm2 *
                     std::pow(10.0, noise.snr_db[static_cast<std::size_t>(g)] / 10.0);
    const double sd = std::sqrt(v);
    for (int c = 0; c < m; ++c) {
      const int i = order[static_cast<std::size_t>(pos++)];
      out.group[i] = next_group;
      for (int r = 0; r < d; ++r) out.samples(r, i) += sd * rng.normal();
    }
    ++next_group;
  }
  return out;
}

namespace {

struct TrajectoryPoint {
  std::vector<long> frames;
  std::vector<double> xs;
  std::vector<double> ys;
  long body = 0;
};

}  // namespace

Dataset ingest_trajectories(const std::string& path,
                            const std::optional<TrajectoryNoise>& noise) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path + "' is empty");
  {
    std::stringstream hdr(line);
    std::string expect = "point_id,frame,x,y,body";
    std::string got;
    for (char ch : line)
      if (ch != ' ' && ch != '\r') got.push_back(ch);
    if (got != expect)
      throw IoError("'" + path + "' header must be 'point_id,frame,x,y,body'");
  }

  std::vector<long> point_order;
  std::map<long, TrajectoryPoint> points;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f0, f1, f2, f3, f4;
    if (!std::getline(ss, f0, ',') || !std::getline(ss, f1, ',') ||
        !std::getline(ss, f2, ',') || !std::getline(ss, f3, ',') ||
        !std::getline(ss, f4))
      throw IoError("'" + path + "' line " + std::to_string(lineno) +
                    " has too few fields");
    char* end = nullptr;
    const long pid = std::strtol(f0.c_str(), &end, 10);
    if (end == f0.c_str()) throw IoError("bad point_id at line " + std::to_string(lineno));
    const long frame = std::strtol(f1.c_str(), &end, 10);
    const double x = std::strtod(f2.c_str(), &end);
    const double y = std::strtod(f3.c_str(), &end);
    // strip trailing \r from the last field
    while (!f4.empty() && (f4.back() == '\r' || f4.back() == ' ')) f4.pop_back();
    if (f4.empty())
      throw IoError("'" + path + "' line " + std::to_string(lineno) +
                    ": missing body label");
    const long body = std::strtol(f4.c_str(), &end, 10);
    if (end == f4.c_str())
      throw IoError("'" + path + "' line " + std::to_string(lineno) +
                    ": missing body label");

    auto it = points.find(pid);
    if (it == points.end()) {
      point_order.push_back(pid);
      it = points.emplace(pid, TrajectoryPoint{}).first;
      it->second.body = body;
    } else if (it->second.body != body) {
      throw IoError("point " + std::to_string(pid) + " has inconsistent body labels");
    }
    it->second.frames.push_back(frame);
    it->second.xs.push_back(x);
    it->second.ys.push_back(y);
  }
  if (points.empty()) throw IoError("'" + path + "' has no data rows");

  // Every trajectory must cover the same frames.
  const std::size_t F = points.begin()->second.frames.size();
  for (auto& [pid, pt] : points) {
    if (pt.frames.size() != F)
      throw IoError("inconsistent frame counts: point " + std::to_string(pid));
    // sort by frame
    std::vector<std::size_t> idx(pt.frames.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return pt.frames[a] < pt.frames[b]; });
    TrajectoryPoint sorted;
    sorted.body = pt.body;
    for (std::size_t s : idx) {
      sorted.frames.push_back(pt.frames[s]);
      sorted.xs.push_back(pt.xs[s]);
      sorted.ys.push_back(pt.ys[s]);
    }
    pt = std::move(sorted);
  }
  const auto& ref_frames = points.begin()->second.frames;
  for (const auto& [pid, pt] : points)
    if (pt.frames != ref_frames)
      throw IoError("inconsistent frame sets: point " + std::to_string(pid));

  // Stack (x_f, y_f) per frame into 2F-dimensional samples.
  const int n = static_cast<int>(point_order.size());
  const int d = static_cast<int>(2 * F);
  Dataset data;
  data.samples.resize(d, n);
  data.group = Eigen::VectorXi::Zero(n);
  Eigen::VectorXi label(n);

  std::vector<long> bodies;
  for (const auto& [pid, pt] : points) bodies.push_back(pt.body);
  std::sort(bodies.begin(), bodies.end());
  bodies.erase(std::unique(bodies.begin(), bodies.end()), bodies.end());

  for (int i = 0; i < n; ++i) {
    const auto& pt = points.at(point_order[static_cast<std::size_t>(i)]);
    for (std::size_t f = 0; f < F; ++f) {
      data.samples(static_cast<int>(2 * f), i) = pt.xs[f];
      data.samples(static_cast<int>(2 * f + 1), i) = pt.ys[f];
    }
    const auto at = std::lower_bound(bodies.begin(), bodies.end(), pt.body);
    label[i] = static_cast<int>(at - bodies.begin());
  }
  data.label = std::move(label);

  if (noise) return apply_group_noise(data, *noise);
  return data;
}

void write_trajectory_csv(const std::string& path, const Dataset& data) {
  if (!data.label)
    throw ValidationError("trajectory output requires body labels");
  if (data.dim() % 2 != 0)
    throw ValidationError("trajectory samples must have even dimension (2 per frame)");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "point_id,frame,x,y,body\n";
  const int F = data.dim() / 2;
  for (int i = 0; i < data.n(); ++i) {
    for (int f = 0; f < F; ++f) {
      out << (i + 1) << ',' << (f + 1) << ','
          << format_double(data.samples(2 * f, i)) << ','
          << format_double(data.samples(2 * f + 1, i)) << ','
          << ((*data.label)[i] + 1) << '\n';
    }
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace hemppcat
