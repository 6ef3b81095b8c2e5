#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtprobe/evaluation.hpp"

namespace rtprobe::report {

/// One (language, measure, family, layer) result.
struct ReportRow {
  std::string language;
  corpus::Measure measure = corpus::Measure::FFD;
  predictors::PredictorConfig config;
  double mean_mse = 0.0;
  double std_mse = 0.0;
  double permuted_mean_mse = 0.0;
  double permuted_std_mse = 0.0;
  double delta_mean = 0.0;  // target - baseline
  double delta_std = 0.0;
  evaluation::Significance significance;
  regression::Penalty penalty = regression::Penalty::None;
  double lambda = 0.0;
  double tuning_mse = 0.0;
  std::vector<double> fold_mses;
  std::vector<double> permuted_fold_mses;
};

/// A table cell: mean delta with subscripted std, markers, optional layer.
struct Cell {
  predictors::Family family = predictors::Family::Surprisal;
  std::optional<int> layer;
  double delta_mean = 0.0;
  double delta_std = 0.0;
  bool star = false;    // beats its permuted control
  bool bullet = false;  // beats the baseline
  bool dagger = false;  // combined setting beats the representation
  bool bold = false;    // lowest delta in the row
};

struct SummaryRow {
  std::string language;
  corpus::Measure measure = corpus::Measure::FFD;
  std::vector<Cell> cells;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::vector<SummaryRow> summary;         // surprisal and best-layer scalar/representation columns
  std::vector<SummaryRow> combined;        // combined settings
};

const std::vector<predictors::Family>& main_columns();
const std::vector<predictors::Family>& combined_columns();

/// Rows for one (language, measure); deltas are taken against the baseline result.
std::vector<ReportRow> build_rows(const std::string& language,
                                  const std::vector<evaluation::CvResult>& results);

/// Row with the lowest mean MSE among the family's layers (ties: lower layer).
std::optional<ReportRow> best_layer(const std::vector<ReportRow>& rows, const std::string& language,
                                    corpus::Measure measure, predictors::Family family);

Cell make_cell(const ReportRow& row);

/// Cells for the requested families (missing ones skipped), bold on the row minimum.
SummaryRow summarize(const std::vector<ReportRow>& rows, const std::string& language,
                     corpus::Measure measure, const std::vector<predictors::Family>& columns);

/// Fills `summary` and `combined` from `rows`.
void summarize_all(EvalReport& report);

/// Two decimals; "-0.00" is printed as "0.00".
std::string format_number(double v);
std::string format_cell_text(const Cell& cell);
std::string format_cell_latex(const Cell& cell);
/// "FFD & cell & cell \\"
std::string render_latex_row(const SummaryRow& row);
std::string render_latex_table(const std::vector<SummaryRow>& rows);
std::string render_text_table(const std::vector<SummaryRow>& rows);

std::string to_tsv(const EvalReport& report);
nlohmann::ordered_json to_json(const EvalReport& report);
EvalReport from_json(const nlohmann::json& j);
/// MSE-vs-layer curves per (language, measure, family).
nlohmann::ordered_json plot_data(const EvalReport& report);

/// Writes report.tsv, report.json, summary.tex, summary.txt and plot_data.json.
void write_report(const std::filesystem::path& dir, const EvalReport& report);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace rtprobe::report
