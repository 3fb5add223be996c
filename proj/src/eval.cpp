#include "hemppcat/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "gem_loop.hpp"
#include "hemppcat/driver.hpp"
#include "hemppcat/grouping.hpp"
#include "hemppcat/io.hpp"
#include "hemppcat/likelihood.hpp"
#include "hemppcat/rng.hpp"

namespace hemppcat {

double factor_error(const Eigen::MatrixXd& F_hat, const Eigen::MatrixXd& F_true) {
  if (F_hat.rows() != F_true.rows() || F_hat.cols() != F_true.cols())
    throw ValidationError("factor_error: shape mismatch");
  const double denom = (F_true * F_true.transpose()).norm();
  if (!(denom > 0.0))
    throw ValidationError("factor_error undefined for a zero reference factor");
  return (F_hat * F_hat.transpose() - F_true * F_true.transpose()).norm() / denom;
}

namespace {

int argmax_score(const Eigen::VectorXd& scores) {
  int best = 0;
  for (int j = 1; j < scores.size(); ++j)
    if (scores[j] > scores[best]) best = j;
  return best;
}

template <typename Params>
Eigen::VectorXd component_scores(const Eigen::VectorXd& y, int l, const Params& params,
                                 const ComponentGaussianCache& cache) {
  const int J = params.components();
  Eigen::VectorXd scores(J);
  for (int j = 0; j < J; ++j) {
    if (params.weights[j] <= 0.0) {
      scores[j] = -std::numeric_limits<double>::infinity();
      continue;
    }
    scores[j] = std::log(params.weights[j]) +
                detail::log_pdf_low_rank(y, params.means[static_cast<std::size_t>(j)],
                                         params.factors[static_cast<std::size_t>(j)],
                                         cache.at(l, j));
  }
  return scores;
}

}  // namespace

int classify(const Eigen::VectorXd& y, int group, const ModelParams& params) {
  const Hyper hyper = hyper_of(params);
  if (group < 0 || group >= hyper.L)
    throw ValidationError("classify: group index out of range");
  const ComponentGaussianCache cache(params, hyper);
  return argmax_score(component_scores(y, group, params, cache));
}

int classify(const Eigen::VectorXd& y, const MppcaParams& params) {
  const ComponentGaussianCache cache(detail::ref_of(params),
                                     static_cast<int>(y.size()));
  return argmax_score(component_scores(y, 0, params, cache));
}

Eigen::VectorXi classify_all(const Dataset& data, const ModelParams& params) {
  const Hyper hyper = hyper_of(params);
  if (data.group.maxCoeff() >= hyper.L)
    throw ValidationError("dataset group indices exceed the model's group count");
  const ComponentGaussianCache cache(params, hyper);
  Eigen::VectorXi pred(data.n());
  for (int i = 0; i < data.n(); ++i)
    pred[i] =
        argmax_score(component_scores(data.samples.col(i), data.group[i], params, cache));
  return pred;
}

Eigen::VectorXi classify_all(const Dataset& data, const MppcaParams& params) {
  const ComponentGaussianCache cache(detail::ref_of(params), data.dim());
  Eigen::VectorXi pred(data.n());
  for (int i = 0; i < data.n(); ++i)
    pred[i] = argmax_score(component_scores(data.samples.col(i), 0, params, cache));
  return pred;
}

Eigen::VectorXi classify_all(const Dataset& data, const KPlanesState& state) {
  Eigen::VectorXi pred(data.n());
  for (int i = 0; i < data.n(); ++i) pred[i] = kplanes_assign(data.samples.col(i), state);
  return pred;
}

namespace {

// Permutation p (applied to prediction indices) maximizing the number of
// agreements with the labels; first-best in lexicographic order.
std::vector<int> best_label_permutation(const Eigen::VectorXi& predictions,
                                        const Eigen::VectorXi& labels, int J) {
  Eigen::MatrixXi confusion = Eigen::MatrixXi::Zero(J, J);
  for (int i = 0; i < predictions.size(); ++i)
    ++confusion(predictions[i], labels[i]);
  std::vector<int> perm(static_cast<std::size_t>(J));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  int best_correct = -1;
  do {
    int correct = 0;
    for (int p = 0; p < J; ++p) correct += confusion(p, perm[static_cast<std::size_t>(p)]);
    if (correct > best_correct) {
      best_correct = correct;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

double misclassification_rate(const Eigen::VectorXi& predictions,
                              const Eigen::VectorXi& labels, bool align) {
  if (predictions.size() != labels.size())
    throw ValidationError("misclassification_rate: length mismatch");
  const int n = static_cast<int>(predictions.size());
  if (n == 0) throw ValidationError("misclassification_rate: empty input");
  int J = 0;
  for (int i = 0; i < n; ++i) {
    if (predictions[i] < 0 || labels[i] < 0)
      throw ValidationError("misclassification_rate: label out of range");
    J = std::max({J, predictions[i] + 1, labels[i] + 1});
  }
  if (!align) {
    int wrong = 0;
    for (int i = 0; i < n; ++i) wrong += predictions[i] != labels[i];
    return static_cast<double>(wrong) / n;
  }
  if (J > 8)
    throw ValidationError("aligned misclassification supports at most 8 labels");
  const auto perm = best_label_permutation(predictions, labels, J);
  int wrong = 0;
  for (int i = 0; i < n; ++i)
    wrong += perm[static_cast<std::size_t>(predictions[i])] != labels[i];
  return static_cast<double>(wrong) / n;
}

std::vector<int> align_components(const std::vector<Eigen::MatrixXd>& fitted,
                                  const std::vector<Eigen::MatrixXd>& truth) {
  const int J = static_cast<int>(truth.size());
  if (static_cast<int>(fitted.size()) != J)
    throw ValidationError("align_components: component count mismatch");
  if (J > 8) throw ValidationError("align_components supports at most 8 components");
  std::vector<int> perm(static_cast<std::size_t>(J));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_total = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int t = 0; t < J; ++t)
      total += factor_error(fitted[static_cast<std::size_t>(perm[static_cast<std::size_t>(t)])],
                            truth[static_cast<std::size_t>(t)]);
    if (total < best_total) {
      best_total = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

namespace {

constexpr std::uint64_t kTagSweepModel = 21;
constexpr std::uint64_t kTagSweepData = 22;
constexpr std::uint64_t kTagSweepKPlanes = 23;

const std::vector<std::string> kMethodOrder = {"kplanes", "mppca", "hemppcat"};

struct CellErrors {
  // per method: per component error, or empty when the fit degenerated
  std::map<std::string, std::vector<double>> by_method;
};

std::vector<double> aligned_errors(const std::vector<Eigen::MatrixXd>& fitted,
                                   const std::vector<Eigen::MatrixXd>& truth) {
  const auto perm = align_components(fitted, truth);
  std::vector<double> err;
  err.reserve(truth.size());
  for (std::size_t t = 0; t < truth.size(); ++t)
    err.push_back(factor_error(fitted[static_cast<std::size_t>(perm[t])], truth[t]));
  return err;
}

}  // namespace

SweepResult run_v1_sweep(const SynthConfig& base, const std::vector<double>& v1_grid,
                         int replicates, const std::vector<std::string>& methods,
                         std::uint64_t seed, int threads,
                         const std::function<void(const std::string&)>& progress) {
  validate_synth_config(base);
  if (replicates < 1) throw ValidationError("replicates must be positive");
  if (v1_grid.empty()) throw ValidationError("v1 grid is empty");
  for (std::size_t g = 1; g < v1_grid.size(); ++g)
    if (!(v1_grid[g] > v1_grid[g - 1]))
      throw ValidationError("v1 grid must be strictly increasing");
  for (const auto& m : methods)
    if (std::find(kMethodOrder.begin(), kMethodOrder.end(), m) == kMethodOrder.end())
      throw ValidationError("unknown method '" + m + "'");
  if (methods.empty()) throw ValidationError("no methods requested");

  const bool want_kplanes =
      std::find(methods.begin(), methods.end(), "kplanes") != methods.end();
  const bool want_mppca =
      std::find(methods.begin(), methods.end(), "mppca") != methods.end();
  const bool want_hemppcat =
      std::find(methods.begin(), methods.end(), "hemppcat") != methods.end();
  const bool need_mppca = want_mppca || want_hemppcat;

  const Hyper hyper{base.d, base.k, base.J, base.L};
  const int G = static_cast<int>(v1_grid.size());

  // results[r * G + g]
  std::vector<CellErrors> results(static_cast<std::size_t>(replicates) *
                                  static_cast<std::size_t>(G));
  std::mutex progress_mutex;

  auto run_replicate = [&](int r) {
    const Rng rep_rng = Rng(seed).fork(static_cast<std::uint64_t>(r) + 1);
    Rng model_rng = rep_rng.fork(kTagSweepModel);
    ModelParams truth = sample_model(base, model_rng);

    for (int g = 0; g < G; ++g) {
      SynthConfig cfg = base;
      cfg.group_vars[0] = v1_grid[static_cast<std::size_t>(g)];
      truth.noise_vars = cfg.group_vars;
      Rng data_rng = rep_rng.fork(kTagSweepData + 100 * static_cast<std::uint64_t>(g));
      const Dataset data = sample_dataset(cfg, truth, data_rng);

      CellErrors& cell = results[static_cast<std::size_t>(r) * G + g];
      const auto state = kplanes(
          data, base.J, base.k, 1000,
          rep_rng.fork(kTagSweepKPlanes + 100 * static_cast<std::uint64_t>(g)).next_u64());
      const MppcaParams kp_params = mppca_from_kplanes(data, state);
      if (want_kplanes)
        cell.by_method["kplanes"] =
            aligned_errors(kplanes_factor_estimates(data, state), truth.factors);

      if (need_mppca) {
        FitOptions mp_opt;
        mp_opt.max_iters = 500;
        mp_opt.rel_tol = 1e-6;
        auto [mp, mp_report] = mppca_fit_from(data, kp_params, mp_opt);
        if (want_mppca && mp_report.stop_reason != StopReason::degenerate)
          cell.by_method["mppca"] = aligned_errors(mp.factors, truth.factors);

        if (want_hemppcat) {
          FitOptions he_opt;
          he_opt.init = InitMethod::explicit_params;
          he_opt.init_params = hemppcat_from_mppca(data, hyper, mp);
          auto [he, he_report] = fit(data, hyper, he_opt);
          if (he_report.stop_reason != StopReason::degenerate)
            cell.by_method["hemppcat"] = aligned_errors(he.factors, truth.factors);
        }
      }
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress("replicate " + std::to_string(r + 1) + "/" +
                 std::to_string(replicates) + " v1=" +
                 format_double(v1_grid[static_cast<std::size_t>(g)]));
      }
    }
  };

  const int workers = std::max(1, std::min(threads, replicates));
  if (workers == 1) {
    for (int r = 0; r < replicates; ++r) run_replicate(r);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int r = w; r < replicates; r += workers) run_replicate(r);
      });
    for (auto& th : pool) th.join();
  }

  SweepResult out;
  out.v1_grid = v1_grid;
  out.replicates = replicates;
  out.components = base.J;
  for (const auto& m : kMethodOrder)
    if (std::find(methods.begin(), methods.end(), m) != methods.end())
      out.methods.push_back(m);

  for (int g = 0; g < G; ++g) {
    for (const auto& m : out.methods) {
      std::vector<double> sums(static_cast<std::size_t>(base.J), 0.0);
      int ok = 0;
      for (int r = 0; r < replicates; ++r) {
        const auto& cell = results[static_cast<std::size_t>(r) * G + g];
        const auto it = cell.by_method.find(m);
        if (it == cell.by_method.end()) continue;
        ++ok;
        for (int j = 0; j < base.J; ++j) sums[static_cast<std::size_t>(j)] += it->second[static_cast<std::size_t>(j)];
      }
      for (int j = 0; j < base.J; ++j) {
        SweepRow row;
        row.v1 = v1_grid[static_cast<std::size_t>(g)];
        row.method = m;
        row.component = j + 1;
        row.n_ok = ok;
        row.mean_error = ok > 0 ? sums[static_cast<std::size_t>(j)] / ok
                                : std::numeric_limits<double>::quiet_NaN();
        out.rows.push_back(std::move(row));
      }
    }
  }
  return out;
}

void validate_sweep_result(const SweepResult& result) {
  for (std::size_t g = 1; g < result.v1_grid.size(); ++g)
    if (!(result.v1_grid[g] > result.v1_grid[g - 1]))
      throw ValidationError("sweep grid must be strictly increasing");
  for (const auto& row : result.rows) {
    if (row.n_ok > 0 && !(row.mean_error >= 0.0))
      throw ValidationError("sweep errors must be nonnegative");
    if (row.n_ok < 0 || row.n_ok > result.replicates)
      throw ValidationError("sweep n_ok out of range");
  }
}

void write_sweep_csv(const std::string& path, const SweepResult& result) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "v1,method,component,mean_error,n_ok\n";
  for (const auto& row : result.rows)
    out << format_double(row.v1) << ',' << row.method << ',' << row.component << ','
        << format_double(row.mean_error) << ',' << row.n_ok << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

SweepResult read_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path + "' is empty");
  SweepResult result;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    SweepRow row;
    std::string field;
    std::getline(ss, field, ',');
    row.v1 = std::strtod(field.c_str(), nullptr);
    std::getline(ss, row.method, ',');
    std::getline(ss, field, ',');
    row.component = std::atoi(field.c_str());
    std::getline(ss, field, ',');
    row.mean_error = std::strtod(field.c_str(), nullptr);
    std::getline(ss, field);
    row.n_ok = std::atoi(field.c_str());
    result.components = std::max(result.components, row.component);
    result.replicates = std::max(result.replicates, row.n_ok);
    if (result.v1_grid.empty() || result.v1_grid.back() != row.v1) {
      if (std::find(result.v1_grid.begin(), result.v1_grid.end(), row.v1) ==
          result.v1_grid.end())
        result.v1_grid.push_back(row.v1);
    }
    if (std::find(result.methods.begin(), result.methods.end(), row.method) ==
        result.methods.end())
      result.methods.push_back(row.method);
    result.rows.push_back(std::move(row));
  }
  return result;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& data,
                                             double test_fraction,
                                             std::uint64_t seed) {
  if (!data.label) throw ValidationError("stratified split requires labels");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ValidationError("test fraction must lie in (0, 1)");

  const int n = data.n();
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < n; ++i) by_class[(*data.label)[i]].push_back(i);

  Rng rng(seed);
  std::vector<int> test_idx;
  std::vector<int> train_idx;
  for (auto& [cls, members] : by_class) {
    for (int i = static_cast<int>(members.size()) - 1; i > 0; --i)
      std::swap(members[static_cast<std::size_t>(i)],
                members[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
    const int m = static_cast<int>(members.size());
    int t = static_cast<int>(std::llround(test_fraction * m));
    t = std::min(std::max(t, m > 1 ? 1 : 0), m - 1);
    for (int i = 0; i < m; ++i)
      (i < t ? test_idx : train_idx).push_back(members[static_cast<std::size_t>(i)]);
  }
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  auto take = [&](const std::vector<int>& idx) {
    Dataset out;
    out.samples.resize(data.dim(), static_cast<Eigen::Index>(idx.size()));
    out.group.resize(static_cast<Eigen::Index>(idx.size()));
    Eigen::VectorXi label(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) {
      out.samples.col(static_cast<Eigen::Index>(c)) = data.samples.col(idx[c]);
      out.group[static_cast<Eigen::Index>(c)] = data.group[idx[c]];
      label[static_cast<Eigen::Index>(c)] = (*data.label)[idx[c]];
    }
    out.label = std::move(label);
    return out;
  };
  return {take(train_idx), take(test_idx)};
}

std::vector<ClassificationRow> classification_report(const Dataset& data,
                                                     const Eigen::VectorXi& predictions,
                                                     const std::string& method) {
  if (!data.label) throw ValidationError("classification report requires labels");
  const Eigen::VectorXi& labels = *data.label;
  int J = 0;
  for (int i = 0; i < data.n(); ++i)
    J = std::max({J, predictions[i] + 1, labels[i] + 1});
  Eigen::VectorXi aligned = predictions;
  if (J <= 8) {
    const auto perm = best_label_permutation(predictions, labels, J);
    for (int i = 0; i < aligned.size(); ++i)
      aligned[i] = perm[static_cast<std::size_t>(predictions[i])];
  }

  const int L = data.group.maxCoeff() + 1;
  std::vector<ClassificationRow> rows;
  for (int l = 0; l < L; ++l) {
    int wrong = 0, total = 0;
    for (int i = 0; i < data.n(); ++i) {
      if (data.group[i] != l) continue;
      ++total;
      wrong += aligned[i] != labels[i];
    }
    rows.push_back({std::to_string(l + 1), method,
                    total > 0 ? static_cast<double>(wrong) / total : 0.0});
  }
  int wrong = 0;
  for (int i = 0; i < data.n(); ++i) wrong += aligned[i] != labels[i];
  rows.push_back({"overall", method, static_cast<double>(wrong) / data.n()});
  return rows;
}

void write_classification_csv(const std::string& path,
                              const std::vector<ClassificationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "group,method,error_rate\n";
  for (const auto& row : rows)
    out << row.group << ',' << row.method << ',' << format_double(row.error_rate)
        << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace hemppcat
