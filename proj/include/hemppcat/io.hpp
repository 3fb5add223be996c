// File formats: dataset CSV and the line-oriented model file. Model files
// store every floating value as C99 hexadecimal text, so save -> load
// round-trips bitwise; the layout is documented in docs/model-format.md.

#pragma once

#include <string>
#include <utility>
#include <variant>

#include "hemppcat/baselines.hpp"
#include "hemppcat/types.hpp"

namespace hemppcat {

// Shortest decimal text that parses back to exactly x.
std::string format_double(double x);

// Exact hexadecimal text (C99 %a).
std::string format_double_hex(double x);

// CSV with d feature columns, a 1-based `group` column, and an optional
// 1-based `label` column; header row required.
void write_dataset_csv(const std::string& path, const Dataset& data);
Dataset read_dataset_csv(const std::string& path);

void save_model(const ModelParams& params, const Hyper& hyper,
                const std::string& path);
void save_mppca_model(const MppcaParams& params, const std::string& path);
void save_kplanes_model(const KPlanesState& state, const std::string& path);

// Loads a `kind hemppcat` file; validates invariants before returning.
std::pair<ModelParams, Hyper> load_model(const std::string& path);

struct LoadedModel {
  std::variant<ModelParams, MppcaParams, KPlanesState> model;
  Hyper hyper;          // L = 0 for kinds without noise groups
  std::string kind;     // "hemppcat", "mppca", or "kplanes"
};

LoadedModel load_any_model(const std::string& path);

}  // namespace hemppcat
