#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "rtprobe/alignment.hpp"
#include "rtprobe/corpus.hpp"
#include "rtprobe/trace.hpp"

namespace rtprobe::predictors {

enum class Family {
  Baseline,
  Surprisal,
  LogitLens,
  InfoValue,
  Representation,
  ReprSurprisal,
  ReprInfoValue,
  ReprLogitLens,
};

inline constexpr Family kAllFamilies[] = {
    Family::Baseline,       Family::Surprisal,     Family::LogitLens,     Family::InfoValue,
    Family::Representation, Family::ReprSurprisal, Family::ReprInfoValue, Family::ReprLogitLens};

std::string family_name(Family f);
Family family_from_name(std::string_view name);
bool is_layerwise(Family f);
bool uses_representation(Family f);
/// The scalar partner of a combined setting (ReprSurprisal -> Surprisal, ...).
std::optional<Family> scalar_component(Family f);

struct PredictorConfig {
  Family family = Family::Baseline;
  std::optional<int> layer;
  bool include_baseline = true;

  /// Enforces "layer present iff family is layer-wise".
  static PredictorConfig make(Family family, std::optional<int> layer = std::nullopt,
                              bool include_baseline = true);
  std::string label() const;

  bool operator==(const PredictorConfig&) const = default;
};

/// Word -> corpus count. Unknown words count 0.
class FrequencyTable {
 public:
  FrequencyTable() = default;
  static FrequencyTable load(const std::filesystem::path& path);

  void add(std::string word, double count);
  double count(std::string_view word) const;
  std::size_t size() const { return counts_.size(); }
  void save(const std::filesystem::path& path) const;

 private:
  std::unordered_map<std::string, double> counts_;
};

/// Unit-level control predictors shared by every configuration.
struct BaselineBlock {
  std::vector<std::string> names;
  Eigen::MatrixXd values;   // [U x B]
  Eigen::RowVectorXd eos;   // predictor values for the end-of-passage row
};

Eigen::VectorXd unit_surprisal(const trace::DocumentTrace& doc, const corpus::AlignmentMap& align);
Eigen::VectorXd unit_logitlens_surprisal(const trace::DocumentTrace& doc,
                                         const corpus::AlignmentMap& align, int layer);
Eigen::MatrixXd pool_unit_representation(const trace::DocumentTrace& doc,
                                         const corpus::AlignmentMap& align, int layer);
Eigen::VectorXd information_value(const trace::DocumentTrace& doc, int layer);

/// [length, log(1 + frequency), relative position in [0, 1]] per unit.
Eigen::MatrixXd baseline_features(const corpus::UnitTable& table, const FrequencyTable& freq);
BaselineBlock default_baseline(const corpus::UnitTable& table, const FrequencyTable& freq);

struct DesignOptions {
  bool include_eos = false;      // append the wrap-up row when both trace and corpus carry it
  bool per_participant = false;  // one row per (participant, unit) instead of participant means
};

struct DesignMatrix {
  Eigen::MatrixXd X;  // [n x D], column 0 is the intercept
  Eigen::VectorXd y;  // [n], milliseconds
  std::vector<std::string> feature_names;
  std::vector<std::size_t> doc_of_row;       // index into doc_ids
  std::vector<std::size_t> unit_of_row;      // unit position; U for the EOS row
  std::vector<std::string> subject_of_row;   // per-participant designs only
  std::vector<std::string> doc_ids;
  PredictorConfig config;
  corpus::Measure measure = corpus::Measure::FFD;
  std::size_t repr_begin = 0;  // representation column block [begin, end)
  std::size_t repr_end = 0;

  Eigen::Index rows() const { return X.rows(); }
  Eigen::Index cols() const { return X.cols(); }
};

DesignMatrix build_design_matrix(const PredictorConfig& config, const trace::DocumentTrace& doc,
                                 const corpus::AlignmentMap& align, const corpus::UnitTable& table,
                                 corpus::Measure measure, const BaselineBlock& baseline,
                                 const DesignOptions& options = {});

/// Row-concatenates per-document designs of one configuration.
DesignMatrix stack(const std::vector<DesignMatrix>& parts);

void write_design_matrix(const std::filesystem::path& path, const DesignMatrix& design);

}  // namespace rtprobe::predictors
