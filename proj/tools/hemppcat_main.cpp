// Command-line entry point: generate | fit | benchmark | classify |
// ingest-trajectories. One JSON config file describes a run; every
// stochastic choice flows from one master seed, so runs are byte-for-byte
// reproducible. Exit codes: 0 success, 1 usage/config error, 2 degenerate
// fit, 3 I/O error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hemppcat/driver.hpp"
#include "hemppcat/eval.hpp"
#include "hemppcat/io.hpp"
#include "hemppcat/rng.hpp"
#include "hemppcat/synthgen.hpp"

namespace {

using nlohmann::ordered_json;
namespace fs = std::filesystem;
using namespace hemppcat;

constexpr const char* kVersion = "0.1.0";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void check_keys(const ordered_json& obj, std::initializer_list<const char*> allowed,
                const std::string& context) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + context);
  }
}

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = ".";
  int threads = 1;
  std::optional<Hyper> hyper;
  FitOptions fit_options;
  std::optional<SynthConfig> synth;  // d/k/J/L filled from hyper
  std::optional<std::string> dataset;
  std::vector<std::string> methods = {"kplanes", "mppca", "hemppcat"};
  std::vector<double> v1_grid;
  int replicates = 25;
  std::optional<TrajectoryNoise> trajectory_noise;
  ordered_json raw;
};

std::vector<double> parse_grid(const ordered_json& bench) {
  if (bench.contains("v1_grid")) {
    std::vector<double> grid = bench.at("v1_grid").get<std::vector<double>>();
    return grid;
  }
  const double from = bench.at("v1_from").get<double>();
  const double to = bench.at("v1_to").get<double>();
  const double step = bench.at("v1_step").get<double>();
  if (!(step > 0.0)) throw ConfigError("benchmark v1_step must be positive");
  std::vector<double> grid;
  for (int i = 0;; ++i) {
    const double v = from + i * step;
    if (v > to + step / 2) break;
    grid.push_back(v);
  }
  return grid;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  ordered_json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }

  RunConfig cfg;
  cfg.raw = doc;
  check_keys(doc,
             {"seed", "out", "threads", "hyper", "fit", "synth", "dataset",
              "methods", "benchmark", "trajectory_noise"},
             "config");
  try {
    if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("out")) cfg.out = doc.at("out").get<std::string>();
    if (doc.contains("threads")) cfg.threads = doc.at("threads").get<int>();
    if (doc.contains("hyper")) {
      const auto& h = doc.at("hyper");
      check_keys(h, {"d", "k", "J", "L"}, "hyper");
      cfg.hyper = Hyper{h.at("d").get<int>(), h.at("k").get<int>(),
                        h.at("J").get<int>(), h.at("L").get<int>()};
    }
    if (doc.contains("fit")) {
      const auto& f = doc.at("fit");
      check_keys(f, {"max_iters", "rel_tol", "init"}, "fit");
      if (f.contains("max_iters")) cfg.fit_options.max_iters = f.at("max_iters").get<int>();
      if (f.contains("rel_tol")) cfg.fit_options.rel_tol = f.at("rel_tol").get<double>();
      if (f.contains("init")) {
        const std::string init = f.at("init").get<std::string>();
        if (init == "mppca") cfg.fit_options.init = InitMethod::mppca;
        else if (init == "kplanes") cfg.fit_options.init = InitMethod::kplanes;
        else if (init == "kmeanspp") cfg.fit_options.init = InitMethod::kmeanspp;
        else throw ConfigError("unknown init method '" + init + "'");
      }
    }
    if (doc.contains("synth")) {
      const auto& s = doc.at("synth");
      check_keys(s, {"n", "lambda", "group_vars", "counts", "seed"}, "synth");
      SynthConfig sc;
      sc.n = s.at("n").get<int>();
      const auto lambda = s.at("lambda").get<std::vector<double>>();
      sc.lambda = Eigen::Map<const Eigen::VectorXd>(lambda.data(),
                                                    static_cast<Eigen::Index>(lambda.size()));
      const auto vars = s.at("group_vars").get<std::vector<double>>();
      sc.group_vars = Eigen::Map<const Eigen::VectorXd>(vars.data(),
                                                        static_cast<Eigen::Index>(vars.size()));
      const auto counts = s.at("counts").get<std::vector<std::vector<int>>>();
      sc.counts.resize(static_cast<Eigen::Index>(counts.size()),
                       counts.empty() ? 0 : static_cast<Eigen::Index>(counts[0].size()));
      for (std::size_t l = 0; l < counts.size(); ++l) {
        if (counts[l].size() != counts[0].size())
          throw ConfigError("synth counts rows must have equal length");
        for (std::size_t j = 0; j < counts[l].size(); ++j)
          sc.counts(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)) = counts[l][j];
      }
      sc.seed = s.contains("seed") ? s.at("seed").get<std::uint64_t>() : 0;
      cfg.synth = sc;
    }
    if (doc.contains("dataset")) cfg.dataset = doc.at("dataset").get<std::string>();
    if (doc.contains("methods"))
      cfg.methods = doc.at("methods").get<std::vector<std::string>>();
    if (doc.contains("benchmark")) {
      const auto& b = doc.at("benchmark");
      check_keys(b, {"v1_grid", "v1_from", "v1_to", "v1_step", "replicates"},
                 "benchmark");
      cfg.v1_grid = parse_grid(b);
      if (b.contains("replicates")) cfg.replicates = b.at("replicates").get<int>();
    }
    if (doc.contains("trajectory_noise")) {
      const auto& t = doc.at("trajectory_noise");
      check_keys(t, {"snr_db", "shares"}, "trajectory_noise");
      TrajectoryNoise noise;
      noise.snr_db = t.at("snr_db").get<std::vector<double>>();
      noise.shares = t.at("shares").get<std::vector<double>>();
      cfg.trajectory_noise = noise;
    }
  } catch (const ordered_json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return cfg;
}

void require_out_dir(const RunConfig& cfg) {
  if (!fs::is_directory(cfg.out))
    throw IoError("output directory '" + cfg.out + "' does not exist");
}

void write_run_info(const RunConfig& cfg, const std::string& command) {
  ordered_json info;
  info["tool"] = "hemppcat";
  info["version"] = kVersion;
  info["command"] = command;
  info["seed"] = cfg.seed;
  info["config"] = cfg.raw;
  std::ofstream out(fs::path(cfg.out) / "run_info.json");
  if (!out) throw IoError("cannot write run_info.json");
  out << info.dump(2) << '\n';
}

SynthConfig synth_from(const RunConfig& cfg) {
  if (!cfg.hyper) throw ConfigError("config needs a 'hyper' section");
  if (!cfg.synth) throw ConfigError("config needs a 'synth' section");
  SynthConfig sc = *cfg.synth;
  sc.d = cfg.hyper->d;
  sc.k = cfg.hyper->k;
  sc.J = cfg.hyper->J;
  sc.L = cfg.hyper->L;
  if (sc.seed == 0) sc.seed = Rng(cfg.seed).fork(101).next_u64();
  return sc;
}

void write_fit_report_json(const std::string& path, const FitReport& report) {
  ordered_json doc;
  doc["iterations"] = report.iterations;
  doc["converged"] = report.converged;
  doc["stop_reason"] = to_string(report.stop_reason);
  ordered_json trace = ordered_json::array();
  for (double ll : report.ll_trace) trace.push_back(ll);
  doc["ll_trace"] = std::move(trace);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << doc.dump(2) << '\n';
}

int cmd_generate(const RunConfig& cfg) {
  require_out_dir(cfg);
  const SynthConfig sc = synth_from(cfg);
  const GroundTruth gt = generate(sc);
  write_dataset_csv((fs::path(cfg.out) / "dataset.csv").string(), gt.data);
  ModelParams truth = gt.truth;
  // The file format requires valid parameters; noiseless configs floor.
  for (int l = 0; l < truth.noise_vars.size(); ++l)
    truth.noise_vars[l] = std::max(truth.noise_vars[l], kVarianceFloor);
  save_model(truth, Hyper{sc.d, sc.k, sc.J, sc.L},
             (fs::path(cfg.out) / "truth_model.txt").string());
  write_run_info(cfg, "generate");

  std::cout << "seed " << sc.seed << "\n";
  std::cout << "n " << sc.n << " d " << sc.d << " k " << sc.k << " J " << sc.J
            << " L " << sc.L << "\n";
  for (int l = 0; l < sc.L; ++l) {
    std::cout << "group " << (l + 1) << " counts";
    for (int j = 0; j < sc.J; ++j) std::cout << ' ' << sc.counts(l, j);
    std::cout << "\n";
  }
  return 0;
}

int cmd_fit(const RunConfig& cfg, const std::string& data_path,
            const std::string& method) {
  require_out_dir(cfg);
  if (!cfg.hyper) throw ConfigError("config needs a 'hyper' section");
  const Dataset data = read_dataset_csv(data_path);
  const Hyper hyper = *cfg.hyper;
  if (data.dim() != hyper.d)
    throw ConfigError("dataset dimension " + std::to_string(data.dim()) +
                      " does not match configured d=" + std::to_string(hyper.d));

  FitOptions options = cfg.fit_options;
  options.seed = cfg.seed;
  const std::string model_path = (fs::path(cfg.out) / "model.txt").string();
  const std::string report_path = (fs::path(cfg.out) / "fit_report.json").string();
  write_run_info(cfg, "fit");

  int exit_code = 0;
  if (method == "hemppcat") {
    auto [params, report] = fit(data, hyper, options);
    save_model(params, hyper, model_path);
    write_fit_report_json(report_path, report);
    std::cout << "method hemppcat iterations " << report.iterations << " stop "
              << to_string(report.stop_reason) << " ll "
              << format_double(report.ll_trace.back()) << "\n";
    if (report.stop_reason == StopReason::degenerate) exit_code = 2;
  } else if (method == "mppca") {
    auto [params, report] = mppca_fit(data, hyper.J, hyper.k, options);
    save_mppca_model(params, model_path);
    write_fit_report_json(report_path, report);
    std::cout << "method mppca iterations " << report.iterations << " stop "
              << to_string(report.stop_reason) << " ll "
              << format_double(report.ll_trace.back()) << "\n";
    if (report.stop_reason == StopReason::degenerate) exit_code = 2;
  } else if (method == "kplanes") {
    const auto state = kplanes(data, hyper.J, hyper.k, std::max(options.max_iters, 1),
                               Rng(options.seed).fork(1).next_u64());
    save_kplanes_model(state, model_path);
    ordered_json doc;
    doc["iterations"] = state.iterations;
    doc["objective"] = state.objective;
    ordered_json trace = ordered_json::array();
    for (double o : state.objective_trace) trace.push_back(o);
    doc["objective_trace"] = std::move(trace);
    std::ofstream out(report_path);
    if (!out) throw IoError("cannot write '" + report_path + "'");
    out << doc.dump(2) << '\n';
    std::cout << "method kplanes iterations " << state.iterations << " objective "
              << format_double(state.objective) << "\n";
  } else {
    throw ConfigError("unknown method '" + method + "'");
  }
  return exit_code;
}

int cmd_benchmark(const RunConfig& cfg) {
  require_out_dir(cfg);
  if (cfg.v1_grid.empty()) throw ConfigError("config needs a 'benchmark' section");
  const SynthConfig base = synth_from(cfg);
  write_run_info(cfg, "benchmark");
  const auto result = run_v1_sweep(
      base, cfg.v1_grid, cfg.replicates, cfg.methods, cfg.seed, cfg.threads,
      [](const std::string& line) { std::cerr << line << "\n"; });
  write_sweep_csv((fs::path(cfg.out) / "sweep.csv").string(), result);
  std::cout << "rows " << result.rows.size() << "\n";
  return 0;
}

int cmd_classify(const RunConfig& cfg, const std::string& model_path,
                 const std::string& data_path) {
  require_out_dir(cfg);
  const LoadedModel loaded = load_any_model(model_path);
  const Dataset data = read_dataset_csv(data_path);
  if (data.dim() != loaded.hyper.d)
    throw ConfigError("dataset dimension " + std::to_string(data.dim()) +
                      " does not match model d=" + std::to_string(loaded.hyper.d));

  Eigen::VectorXi pred;
  std::string method;
  if (loaded.kind == "hemppcat") {
    method = "hemppcat";
    pred = classify_all(data, std::get<ModelParams>(loaded.model));
  } else if (loaded.kind == "mppca") {
    method = "mppca";
    pred = classify_all(data, std::get<MppcaParams>(loaded.model));
  } else {
    method = "kplanes";
    pred = classify_all(data, std::get<KPlanesState>(loaded.model));
  }

  {
    std::ofstream out(fs::path(cfg.out) / "predictions.csv");
    if (!out) throw IoError("cannot write predictions.csv");
    out << "sample,predicted\n";
    for (int i = 0; i < pred.size(); ++i)
      out << (i + 1) << ',' << (pred[i] + 1) << '\n';
  }
  write_run_info(cfg, "classify");

  if (data.label) {
    const auto rows = classification_report(data, pred, method);
    write_classification_csv(
        (fs::path(cfg.out) / "classification_report.csv").string(), rows);
    for (const auto& row : rows)
      std::cout << row.group << ' ' << row.method << ' '
                << format_double(row.error_rate) << "\n";
  } else {
    std::cout << "predictions " << pred.size() << " (no labels, rates omitted)\n";
  }
  return 0;
}

int cmd_ingest(const RunConfig& cfg, const std::string& input, bool no_noise) {
  require_out_dir(cfg);
  std::optional<TrajectoryNoise> noise;
  if (!no_noise) {
    noise = cfg.trajectory_noise ? *cfg.trajectory_noise
                                 : default_trajectory_noise(0);
    noise->seed = Rng(cfg.seed).fork(301).next_u64();
  }
  const Dataset data = ingest_trajectories(input, noise);
  write_dataset_csv((fs::path(cfg.out) / "trajectories_dataset.csv").string(), data);
  write_run_info(cfg, "ingest-trajectories");
  std::cout << "trajectories " << data.n() << " dim " << data.dim() << " groups "
            << (data.group.maxCoeff() + 1) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heteroscedastic mixtures of probabilistic PCA"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string data_path;
  std::string model_path;
  std::string input_path;
  std::string method = "hemppcat";
  std::string out_override;
  std::uint64_t seed_override = 0;
  bool seed_given = false;
  int threads_override = 0;
  bool no_noise = false;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", config_path, "JSON run configuration");
    if (config_required) opt->required();
    sub->add_option("--seed", seed_override, "master seed override")
        ->each([&](const std::string&) { seed_given = true; });
    sub->add_option("--out", out_override, "output directory override");
    sub->add_option("--threads", threads_override, "worker threads override");
  };

  auto* gen = app.add_subcommand("generate", "synthesize a dataset and ground truth");
  add_common(gen, true);

  auto* fitc = app.add_subcommand("fit", "fit a model to a dataset CSV");
  add_common(fitc, true);
  fitc->add_option("--data", data_path, "dataset CSV")->required();
  fitc->add_option("--method", method, "hemppcat | mppca | kplanes");

  auto* bench = app.add_subcommand("benchmark", "run the v1 sweep");
  add_common(bench, true);

  auto* cls = app.add_subcommand("classify", "classify a dataset with a saved model");
  add_common(cls, false);
  cls->add_option("--model", model_path, "model file")->required();
  cls->add_option("--data", data_path, "dataset CSV")->required();

  auto* ingest = app.add_subcommand("ingest-trajectories",
                                    "stack a trajectory CSV into a dataset");
  add_common(ingest, false);
  ingest->add_option("--input", input_path, "trajectory CSV")->required();
  ingest->add_flag("--no-noise", no_noise, "skip the grouped noise protocol");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (seed_given) cfg.seed = seed_override;
    if (!out_override.empty()) cfg.out = out_override;
    if (threads_override > 0) cfg.threads = threads_override;

    if (gen->parsed()) return cmd_generate(cfg);
    if (fitc->parsed()) return cmd_fit(cfg, data_path, method);
    if (bench->parsed()) return cmd_benchmark(cfg);
    if (cls->parsed()) return cmd_classify(cfg, model_path, data_path);
    if (ingest->parsed()) return cmd_ingest(cfg, input_path, no_noise);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
