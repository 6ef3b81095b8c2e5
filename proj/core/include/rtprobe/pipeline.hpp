#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtprobe/corpus.hpp"
#include "rtprobe/predictors.hpp"
#include "rtprobe/regression.hpp"
#include "rtprobe/report.hpp"
#include "rtprobe/trace.hpp"

namespace rtprobe::pipeline {

struct FamilySpec {
  predictors::Family family = predictors::Family::Baseline;
  std::vector<int> layers;  // empty for non-layerwise families; empty + all_layers for "all"
  bool all_layers = false;
};

/// Declarative run description. Relative paths resolve against `base_dir`.
struct RunConfig {
  std::filesystem::path base_dir;
  std::filesystem::path corpus;
  std::string schema = "native";
  std::filesystem::path trace;
  std::optional<std::filesystem::path> frequency;
  std::string tokenizer = "sentencepiece";
  std::vector<std::string> languages;  // empty: every language in the corpus
  std::vector<corpus::Measure> measures{corpus::Measure::FFD, corpus::Measure::GD, corpus::Measure::TRT};
  std::vector<FamilySpec> families;    // empty: every family at every exported layer
  std::size_t folds = 10;
  std::size_t holdout_docs = 5;
  double lambda_min = 0.001;
  double lambda_max = 10.0;
  int lambda_points = 20;
  std::vector<regression::Penalty> penalties{regression::Penalty::None, regression::Penalty::Ridge,
                                             regression::Penalty::Lasso};
  bool include_eos = false;
  struct Seeds {
    std::uint64_t split = 0;
    std::uint64_t folds = 0;
    std::uint64_t permutation = 0;
    std::uint64_t synthetic = 0;
  } seeds;
  std::filesystem::path output = "out";
  std::size_t lmm_components = 25;
  std::vector<FamilySpec> lmm_families;  // empty: baseline, surprisal, representation
  std::optional<std::size_t> workers;

  /// Seeds must be given explicitly (split, folds, permutation).
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::filesystem::path output_dir() const { return resolve(output); }
};

/// Trace findings plus corpus parsing and alignment checks; never throws for
/// bad inputs.
trace::ValidationReport cmd_validate(const RunConfig& config);

/// Full evaluation: tuning, cross-validation, permutation controls,
/// significance and report files under the output directory.
report::EvalReport cmd_run(const RunConfig& config);

/// Mixed-model evaluation on per-participant rows; files under output/lmm.
report::EvalReport cmd_lmm(const RunConfig& config);

/// Re-renders summary tables from a report.json into `out_dir`.
report::EvalReport cmd_report(const std::filesystem::path& report_json, const std::filesystem::path& out_dir);

/// Expanded (family, layer) list in evaluation order.
std::vector<predictors::PredictorConfig> expand_configs(const std::vector<FamilySpec>& families,
                                                        const std::vector<int>& exported_layers);

}  // namespace rtprobe::pipeline
