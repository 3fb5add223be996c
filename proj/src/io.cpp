#include "hemppcat/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

namespace hemppcat {

namespace {

constexpr int kSchemaVersion = 1;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, const std::string& context) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double x = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw IoError("could not parse number '" + s + "' in " + context);
  return x;
}

long parse_int(const std::string& s, const std::string& context) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const long x = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0')
    throw IoError("could not parse integer '" + s + "' in " + context);
  return x;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) return buf;
  }
  return buf;
}

std::string format_double_hex(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", x);
  return buf;
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const int d = data.dim();
  for (int c = 0; c < d; ++c) out << 'f' << (c + 1) << ',';
  out << "group";
  if (data.label) out << ",label";
  out << '\n';
  for (int i = 0; i < data.n(); ++i) {
    for (int c = 0; c < d; ++c) out << format_double(data.samples(c, i)) << ',';
    out << (data.group[i] + 1);
    if (data.label) out << ',' << ((*data.label)[i] + 1);
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path + "' is empty");
  const auto header = split_csv_line(line);

  int group_col = -1;
  int label_col = -1;
  std::vector<int> feature_cols;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    if (header[static_cast<std::size_t>(c)] == "group") group_col = c;
    else if (header[static_cast<std::size_t>(c)] == "label") label_col = c;
    else feature_cols.push_back(c);
  }
  if (group_col < 0) throw IoError("'" + path + "' has no 'group' column");
  if (feature_cols.empty()) throw IoError("'" + path + "' has no feature columns");

  std::vector<std::vector<double>> rows;
  std::vector<int> groups;
  std::vector<int> labels;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw IoError("'" + path + "' line " + std::to_string(lineno) +
                    " has wrong field count");
    const std::string ctx = path + " line " + std::to_string(lineno);
    std::vector<double> row;
    row.reserve(feature_cols.size());
    for (int c : feature_cols)
      row.push_back(parse_double(fields[static_cast<std::size_t>(c)], ctx));
    const long g = parse_int(fields[static_cast<std::size_t>(group_col)], ctx);
    if (g < 1) throw IoError(ctx + ": group index must be >= 1");
    groups.push_back(static_cast<int>(g - 1));
    if (label_col >= 0) {
      const long lbl = parse_int(fields[static_cast<std::size_t>(label_col)], ctx);
      if (lbl < 1) throw IoError(ctx + ": label must be >= 1");
      labels.push_back(static_cast<int>(lbl - 1));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("'" + path + "' has no data rows");

  Dataset data;
  const int n = static_cast<int>(rows.size());
  const int d = static_cast<int>(feature_cols.size());
  data.samples.resize(d, n);
  data.group.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d; ++c)
      data.samples(c, i) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    data.group[i] = groups[static_cast<std::size_t>(i)];
  }
  if (label_col >= 0) {
    Eigen::VectorXi lv(n);
    for (int i = 0; i < n; ++i) lv[i] = labels[static_cast<std::size_t>(i)];
    data.label = lv;
  }
  return data;
}

namespace {

void write_values(std::ofstream& out, const double* values, long count) {
  for (long i = 0; i < count; ++i) out << ' ' << format_double_hex(values[i]);
}

void write_model_file(const std::string& path, const std::string& kind, int d, int k,
                      int J, int L, const Eigen::VectorXd* pi,
                      const Eigen::VectorXd* v,
                      const std::vector<Eigen::VectorXd>& mu,
                      const std::vector<Eigen::MatrixXd>& F,
                      const char* factor_tag) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "hemppcat-model " << kSchemaVersion << '\n';
  out << "kind " << kind << '\n';
  out << "dims " << d << ' ' << k << ' ' << J << ' ' << L << '\n';
  if (pi) {
    out << "pi";
    write_values(out, pi->data(), pi->size());
    out << '\n';
  }
  if (v) {
    out << "v";
    write_values(out, v->data(), v->size());
    out << '\n';
  }
  for (int j = 0; j < J; ++j) {
    out << "mu " << (j + 1);
    write_values(out, mu[static_cast<std::size_t>(j)].data(),
                 mu[static_cast<std::size_t>(j)].size());
    out << '\n';
  }
  for (int j = 0; j < J; ++j) {
    out << factor_tag << ' ' << (j + 1);
    // column-major payload
    write_values(out, F[static_cast<std::size_t>(j)].data(),
                 F[static_cast<std::size_t>(j)].size());
    out << '\n';
  }
  out << "end\n";
  if (!out) throw IoError("write failed for '" + path + "'");
}

struct ModelTokens {
  std::string kind;
  int d = 0, k = 0, J = 0, L = 0;
  Eigen::VectorXd pi;
  Eigen::VectorXd v;
  bool has_pi = false, has_v = false;
  std::vector<Eigen::VectorXd> mu;
  std::vector<Eigen::MatrixXd> F;
};

ModelTokens parse_model_file(const std::string& path, const char* factor_tag) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string word;
  auto next = [&](const char* what) {
    if (!(in >> word)) throw IoError("'" + path + "' is truncated (expected " +
                                     what + ")");
    return word;
  };
  auto read_doubles = [&](double* dst, long count, const char* what) {
    for (long i = 0; i < count; ++i) {
      next(what);
      const char* begin = word.c_str();
      char* end = nullptr;
      dst[i] = std::strtod(begin, &end);
      if (end == begin || *end != '\0')
        throw IoError("'" + path + "': bad numeric payload in " + what);
    }
  };

  if (next("magic") != "hemppcat-model")
    throw IoError("'" + path + "' is not a model file");
  if (parse_int(next("schema version"), path) != kSchemaVersion)
    throw IoError("'" + path + "': schema-version mismatch");

  ModelTokens t;
  if (next("kind") != "kind") throw IoError("'" + path + "': expected 'kind'");
  t.kind = next("model kind");
  if (next("dims") != "dims") throw IoError("'" + path + "': expected 'dims'");
  t.d = static_cast<int>(parse_int(next("d"), path));
  t.k = static_cast<int>(parse_int(next("k"), path));
  t.J = static_cast<int>(parse_int(next("J"), path));
  t.L = static_cast<int>(parse_int(next("L"), path));
  if (t.d < 1 || t.k < 1 || t.J < 1 || t.L < 0)
    throw IoError("'" + path + "': invalid dims");

  while (next("section") != "end") {
    if (word == "pi") {
      t.pi.resize(t.J);
      read_doubles(t.pi.data(), t.J, "pi");
      t.has_pi = true;
    } else if (word == "v") {
      const int count = t.kind == "mppca" ? t.J : t.L;
      t.v.resize(count);
      read_doubles(t.v.data(), count, "v");
      t.has_v = true;
    } else if (word == "mu") {
      const long j = parse_int(next("mu index"), path);
      if (j != static_cast<long>(t.mu.size()) + 1)
        throw IoError("'" + path + "': mu sections out of order");
      Eigen::VectorXd m(t.d);
      read_doubles(m.data(), t.d, "mu");
      t.mu.push_back(std::move(m));
    } else if (word == factor_tag) {
      const long j = parse_int(next("factor index"), path);
      if (j != static_cast<long>(t.F.size()) + 1)
        throw IoError("'" + path + "': factor sections out of order");
      Eigen::MatrixXd f(t.d, t.k);
      read_doubles(f.data(), static_cast<long>(t.d) * t.k, "factor payload");
      t.F.push_back(std::move(f));
    } else {
      throw IoError("'" + path + "': unknown section '" + word + "'");
    }
  }
  if (static_cast<int>(t.mu.size()) != t.J ||
      static_cast<int>(t.F.size()) != t.J)
    throw IoError("'" + path + "' is truncated (missing sections)");
  return t;
}

}  // namespace

void save_model(const ModelParams& params, const Hyper& hyper,
                const std::string& path) {
  validate_params(params, hyper);
  write_model_file(path, "hemppcat", hyper.d, hyper.k, hyper.J, hyper.L,
                   &params.weights, &params.noise_vars, params.means,
                   params.factors, "F");
}

void save_mppca_model(const MppcaParams& params, const std::string& path) {
  const int d = static_cast<int>(params.factors.at(0).rows());
  const int k = static_cast<int>(params.factors.at(0).cols());
  write_model_file(path, "mppca", d, k, params.components(), 0, &params.weights,
                   &params.noise_vars, params.means, params.factors, "F");
}

void save_kplanes_model(const KPlanesState& state, const std::string& path) {
  const int d = static_cast<int>(state.bases.at(0).rows());
  const int k = static_cast<int>(state.bases.at(0).cols());
  write_model_file(path, "kplanes", d, k, static_cast<int>(state.bases.size()), 0,
                   nullptr, nullptr, state.offsets, state.bases, "U");
}

LoadedModel load_any_model(const std::string& path) {
  // Peek the kind to pick the factor tag.
  std::ifstream peek(path);
  if (!peek) throw IoError("cannot open '" + path + "'");
  std::string w1, w2, w3, w4;
  peek >> w1 >> w2 >> w3 >> w4;
  const char* tag = (w4 == "kplanes") ? "U" : "F";

  const ModelTokens t = parse_model_file(path, tag);
  LoadedModel loaded;
  loaded.kind = t.kind;
  loaded.hyper = Hyper{t.d, t.k, t.J, t.L};
  if (t.kind == "hemppcat") {
    if (!t.has_pi || !t.has_v) throw IoError("'" + path + "': missing pi or v");
    ModelParams params{t.F, t.mu, t.v, t.pi};
    validate_params(params, loaded.hyper);
    loaded.model = std::move(params);
  } else if (t.kind == "mppca") {
    if (!t.has_pi || !t.has_v) throw IoError("'" + path + "': missing pi or v");
    MppcaParams params{t.F, t.mu, t.v, t.pi};
    Hyper h = loaded.hyper;
    h.L = 1;  // shape check only; variances attach to components
    validate_mppca_params(params, h);
    loaded.model = std::move(params);
  } else if (t.kind == "kplanes") {
    KPlanesState state;
    state.bases = t.F;
    state.offsets = t.mu;
    if (t.k >= t.d) throw IoError("'" + path + "': invalid dims (k >= d)");
    loaded.model = std::move(state);
  } else {
    throw IoError("'" + path + "': unknown model kind '" + t.kind + "'");
  }
  return loaded;
}

std::pair<ModelParams, Hyper> load_model(const std::string& path) {
  LoadedModel loaded = load_any_model(path);
  if (loaded.kind != "hemppcat")
    throw IoError("'" + path + "' holds a '" + loaded.kind +
                  "' model, expected 'hemppcat'");
  return {std::get<ModelParams>(std::move(loaded.model)), loaded.hyper};
}

}  // namespace hemppcat
