#include "hemppcat/types.hpp"

#include <cmath>
#include <string>

namespace hemppcat {

namespace {

std::string shape_msg(const char* what, long rows, long cols, long want_rows,
                      long want_cols) {
  return std::string("dimension mismatch: ") + what + " is " +
         std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
         std::to_string(want_rows) + "x" + std::to_string(want_cols);
}

}  // namespace

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::tolerance: return "tolerance";
    case StopReason::max_iters: return "max_iters";
    case StopReason::degenerate: return "degenerate";
  }
  return "unknown";
}

void validate_hyper(const Hyper& hyper) {
  if (hyper.d < 1) throw ValidationError("ambient dimension d must be positive");
  if (hyper.k < 1 || hyper.k >= hyper.d)
    throw ValidationError("factor rank k must satisfy 1 <= k < d (got k=" +
                          std::to_string(hyper.k) + ", d=" + std::to_string(hyper.d) + ")");
  if (hyper.J < 1) throw ValidationError("component count J must be positive");
  if (hyper.L < 1) throw ValidationError("noise group count L must be positive");
}

void validate_params(const ModelParams& params, const Hyper& hyper) {
  validate_hyper(hyper);
  if (params.components() != hyper.J)
    throw ValidationError("expected " + std::to_string(hyper.J) + " factor matrices, got " +
                          std::to_string(params.components()));
  if (static_cast<int>(params.means.size()) != hyper.J)
    throw ValidationError("expected " + std::to_string(hyper.J) + " mean vectors, got " +
                          std::to_string(params.means.size()));
  if (params.noise_vars.size() != hyper.L)
    throw ValidationError("expected " + std::to_string(hyper.L) + " noise variances, got " +
                          std::to_string(params.noise_vars.size()));
  if (params.weights.size() != hyper.J)
    throw ValidationError("expected " + std::to_string(hyper.J) + " mixing proportions, got " +
                          std::to_string(params.weights.size()));

  for (int j = 0; j < hyper.J; ++j) {
    const auto& F = params.factors[j];
    if (F.rows() != hyper.d || F.cols() != hyper.k)
      throw ValidationError(shape_msg("factor matrix", F.rows(), F.cols(), hyper.d, hyper.k));
    if (!F.allFinite()) throw ValidationError("factor matrix has non-finite entries");
    const auto& mu = params.means[j];
    if (mu.size() != hyper.d)
      throw ValidationError(shape_msg("mean vector", mu.size(), 1, hyper.d, 1));
    if (!mu.allFinite()) throw ValidationError("mean vector has non-finite entries");
  }

  for (int l = 0; l < hyper.L; ++l) {
    const double v = params.noise_vars[l];
    if (!std::isfinite(v) || v < 0.0)
      throw ValidationError("negative variance: v[" + std::to_string(l + 1) + "] = " +
                            std::to_string(v));
    if (v < kVarianceFloor)
      throw ValidationError("variance below floor: v[" + std::to_string(l + 1) + "] = " +
                            std::to_string(v));
  }

  double sum = 0.0;
  for (int j = 0; j < hyper.J; ++j) {
    const double p = params.weights[j];
    if (!std::isfinite(p) || p < 0.0)
      throw ValidationError("mixing proportion pi[" + std::to_string(j + 1) +
                            "] is negative or non-finite");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSimplexTol)
    throw ValidationError("pi not simplex: proportions sum to " + std::to_string(sum));
}

void validate_mppca_params(const MppcaParams& params, const Hyper& hyper) {
  ModelParams as_model{params.factors, params.means, params.noise_vars, params.weights};
  Hyper h = hyper;
  h.L = params.components();  // variances attach to components here
  validate_params(as_model, h);
}

void validate_dataset(const Dataset& data, const Hyper& hyper) {
  validate_hyper(hyper);
  const int n = data.n();
  if (n < 1) throw ValidationError("dataset is empty");
  if (data.dim() != hyper.d)
    throw ValidationError("dataset dimension " + std::to_string(data.dim()) +
                          " does not match d=" + std::to_string(hyper.d));
  if (!data.samples.allFinite()) throw ValidationError("dataset has non-finite entries");
  if (data.group.size() != n)
    throw ValidationError("group vector length does not match sample count");
  if (hyper.L > n) throw ValidationError("more noise groups than samples (L > n)");

  std::vector<int> counts(static_cast<std::size_t>(hyper.L), 0);
  for (int i = 0; i < n; ++i) {
    const int g = data.group[i];
    if (g < 0 || g >= hyper.L)
      throw ValidationError("sample " + std::to_string(i + 1) + " has group index out of range");
    ++counts[static_cast<std::size_t>(g)];
  }
  for (int l = 0; l < hyper.L; ++l)
    if (counts[static_cast<std::size_t>(l)] == 0)
      throw ValidationError("noise group " + std::to_string(l + 1) + " has no samples");

  if (data.label) {
    if (data.label->size() != n)
      throw ValidationError("label vector length does not match sample count");
    for (int i = 0; i < n; ++i) {
      const int c = (*data.label)[i];
      if (c < 0 || c >= hyper.J)
        throw ValidationError("sample " + std::to_string(i + 1) + " has label out of range");
    }
  }
}

Hyper hyper_of(const ModelParams& params) {
  Hyper h;
  h.J = params.components();
  h.L = params.groups();
  if (h.J > 0) {
    h.d = static_cast<int>(params.factors[0].rows());
    h.k = static_cast<int>(params.factors[0].cols());
  }
  return h;
}

}  // namespace hemppcat
