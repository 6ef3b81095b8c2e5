#include "rtprobe/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <algorithm>
#include <map>
#include <tuple>
#include <sstream>

#include "rtprobe/error.hpp"

namespace rtprobe::report {

using predictors::Family;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io", "cannot open for writing: " + path.string());
  out << text;
  if (!out) throw Error("io", "write failed: " + path.string());
}

ordered_json number_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

double number_from(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

}  // namespace

const std::vector<Family>& main_columns() {
  static const std::vector<Family> cols{Family::Surprisal, Family::Representation, Family::InfoValue,
                                        Family::LogitLens};
  return cols;
}

const std::vector<Family>& combined_columns() {
  static const std::vector<Family> cols{Family::Surprisal, Family::Representation, Family::ReprSurprisal,
                                        Family::ReprInfoValue, Family::ReprLogitLens};
  return cols;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<ReportRow> build_rows(const std::string& language,
                                  const std::vector<evaluation::CvResult>& results) {
  const evaluation::CvResult* baseline = nullptr;
  for (const auto& r : results)
    if (r.config.family == Family::Baseline) baseline = &r;
  if (baseline == nullptr) throw ValidationError("missing partner result: baseline");
  std::vector<ReportRow> rows;
  for (const auto& r : results) {
    ReportRow row;
    row.language = language;
    row.measure = r.measure;
    row.config = r.config;
    row.mean_mse = r.mean_mse;
    row.std_mse = r.std_mse;
    row.permuted_mean_mse = r.permuted_mean_mse;
    row.permuted_std_mse = r.permuted_std_mse;
    const auto d = evaluation::delta_mse(r, *baseline);
    row.delta_mean = d.mean;
    row.delta_std = d.std;
    row.significance = r.significance;
    if (r.tuning) {
      row.penalty = r.tuning->chosen_penalty;
      row.lambda = r.tuning->chosen_lambda;
      row.tuning_mse = r.tuning->tuning_mse;
    }
    row.fold_mses = r.fold_mses;
    row.permuted_fold_mses = r.permuted_fold_mses;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::optional<ReportRow> best_layer(const std::vector<ReportRow>& rows, const std::string& language,
                                    corpus::Measure measure, Family family) {
  const ReportRow* best = nullptr;
  for (const auto& r : rows) {
    if (r.language != language || r.measure != measure || r.config.family != family) continue;
    if (best == nullptr || r.mean_mse < best->mean_mse ||
        (r.mean_mse == best->mean_mse && r.config.layer.value_or(0) < best->config.layer.value_or(0)))
      best = &r;
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

Cell make_cell(const ReportRow& row) {
  Cell c;
  c.family = row.config.family;
  c.layer = row.config.layer;
  c.delta_mean = row.delta_mean;
  c.delta_std = row.delta_std;
  c.star = row.significance.vs_permuted;
  c.bullet = row.significance.vs_baseline;
  c.dagger = predictors::scalar_component(row.config.family).has_value() && row.significance.vs_representation;
  return c;
}

SummaryRow summarize(const std::vector<ReportRow>& rows, const std::string& language,
                     corpus::Measure measure, const std::vector<Family>& columns) {
  SummaryRow out;
  out.language = language;
  out.measure = measure;
  for (auto f : columns)
    if (auto r = best_layer(rows, language, measure, f)) out.cells.push_back(make_cell(*r));
  if (!out.cells.empty()) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < out.cells.size(); ++i)
      if (out.cells[i].delta_mean < out.cells[arg].delta_mean) arg = i;
    out.cells[arg].bold = true;
  }
  return out;
}

void summarize_all(EvalReport& report) {
  report.summary.clear();
  report.combined.clear();
  std::vector<std::pair<std::string, corpus::Measure>> keys;
  for (const auto& r : report.rows) {
    const std::pair<std::string, corpus::Measure> k{r.language, r.measure};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  for (const auto& [lang, m] : keys) {
    auto main = summarize(report.rows, lang, m, main_columns());
    if (!main.cells.empty()) report.summary.push_back(std::move(main));
    bool has_combined = false;
    for (const auto& r : report.rows)
      if (r.language == lang && r.measure == m && predictors::scalar_component(r.config.family)) has_combined = true;
    if (has_combined) report.combined.push_back(summarize(report.rows, lang, m, combined_columns()));
  }
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s(buf);
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string format_cell_text(const Cell& cell) {
  std::string s = format_number(cell.delta_mean) + "₍" + format_number(cell.delta_std) + "₎";
  if (cell.star) s += "*";
  if (cell.bullet) s += "•";
  if (cell.dagger) s += "‡";
  if (cell.layer) s += " (" + std::to_string(*cell.layer) + ")";
  return cell.bold ? "**" + s + "**" : s;
}

std::string format_cell_latex(const Cell& cell) {
  std::string s = format_number(cell.delta_mean) + "$_{" + format_number(cell.delta_std) + "}$";
  std::string marks;
  if (cell.star) marks += "*";
  if (cell.bullet) marks += "\\bullet";
  if (cell.dagger) marks += "\\ddagger";
  if (!marks.empty()) s += "$^{" + marks + "}$";
  if (cell.layer) s += " (" + std::to_string(*cell.layer) + ")";
  return cell.bold ? "\\textbf{" + s + "}" : s;
}

std::string render_latex_row(const SummaryRow& row) {
  std::string s = corpus::measure_name(row.measure);
  for (const auto& c : row.cells) s += " & " + format_cell_latex(c);
  return s + " \\\\";
}

std::string render_latex_table(const std::vector<SummaryRow>& rows) {
  std::string out;
  std::string lang;
  bool first = true;
  for (const auto& r : rows) {
    if (first || r.language != lang) {
      lang = r.language;
      out += "% " + lang + "\n";
      first = false;
    }
    out += render_latex_row(r) + "\n";
  }
  return out;
}

std::string render_text_table(const std::vector<SummaryRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.language + "\t" + corpus::measure_name(r.measure);
    for (const auto& c : r.cells) out += "\t" + predictors::family_name(c.family) + "=" + format_cell_text(c);
    out += "\n";
  }
  return out;
}

std::string to_tsv(const EvalReport& report) {
  std::ostringstream out;
  out << "language\tmeasure\tfamily\tlayer\tmean_mse\tstd_mse\tpermuted_mean_mse\tpermuted_std_mse"
         "\tdelta_mean\tdelta_std\tvs_permuted\tvs_baseline\tvs_representation\tvs_scalar"
         "\tp_permuted\tp_baseline\tp_representation\tp_scalar\tpenalty\tlambda\ttuning_mse"
         "\tfold_mses\tpermuted_fold_mses\n";
  for (const auto& r : report.rows) {
    const auto& s = r.significance;
    out << r.language << '\t' << corpus::measure_name(r.measure) << '\t'
        << predictors::family_name(r.config.family) << '\t'
        << (r.config.layer ? std::to_string(*r.config.layer) : "NA") << '\t' << format_double(r.mean_mse)
        << '\t' << format_double(r.std_mse) << '\t' << format_double(r.permuted_mean_mse) << '\t'
        << format_double(r.permuted_std_mse) << '\t' << format_double(r.delta_mean) << '\t'
        << format_double(r.delta_std) << '\t' << s.vs_permuted << '\t' << s.vs_baseline << '\t'
        << s.vs_representation << '\t' << s.vs_scalar << '\t' << format_double(s.p_permuted) << '\t'
        << format_double(s.p_baseline) << '\t' << format_double(s.p_representation) << '\t'
        << format_double(s.p_scalar) << '\t' << regression::penalty_name(r.penalty) << '\t'
        << format_double(r.lambda) << '\t' << format_double(r.tuning_mse) << '\t' << join_doubles(r.fold_mses)
        << '\t' << join_doubles(r.permuted_fold_mses) << '\n';
  }
  return out.str();
}

namespace {

ordered_json cell_json(const Cell& c) {
  ordered_json j;
  j["family"] = predictors::family_name(c.family);
  j["layer"] = c.layer ? ordered_json(*c.layer) : ordered_json(nullptr);
  j["delta_mean"] = number_or_null(c.delta_mean);
  j["delta_std"] = number_or_null(c.delta_std);
  j["star"] = c.star;
  j["bullet"] = c.bullet;
  j["dagger"] = c.dagger;
  j["bold"] = c.bold;
  j["latex"] = format_cell_latex(c);
  j["text"] = format_cell_text(c);
  return j;
}

ordered_json summary_json(const std::vector<SummaryRow>& rows) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json j;
    j["language"] = r.language;
    j["measure"] = corpus::measure_name(r.measure);
    j["cells"] = ordered_json::array();
    for (const auto& c : r.cells) j["cells"].push_back(cell_json(c));
    j["latex"] = render_latex_row(r);
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace

ordered_json to_json(const EvalReport& report) {
  ordered_json j;
  j["rows"] = ordered_json::array();
  for (const auto& r : report.rows) {
    ordered_json o;
    o["language"] = r.language;
    o["measure"] = corpus::measure_name(r.measure);
    o["family"] = predictors::family_name(r.config.family);
    o["layer"] = r.config.layer ? ordered_json(*r.config.layer) : ordered_json(nullptr);
    o["mean_mse"] = number_or_null(r.mean_mse);
    o["std_mse"] = number_or_null(r.std_mse);
    o["permuted_mean_mse"] = number_or_null(r.permuted_mean_mse);
    o["permuted_std_mse"] = number_or_null(r.permuted_std_mse);
    o["delta_mean"] = number_or_null(r.delta_mean);
    o["delta_std"] = number_or_null(r.delta_std);
    const auto& s = r.significance;
    o["significance"] = {{"vs_permuted", s.vs_permuted},
                         {"vs_baseline", s.vs_baseline},
                         {"vs_representation", s.vs_representation},
                         {"vs_scalar", s.vs_scalar},
                         {"p_permuted", number_or_null(s.p_permuted)},
                         {"p_baseline", number_or_null(s.p_baseline)},
                         {"p_representation", number_or_null(s.p_representation)},
                         {"p_scalar", number_or_null(s.p_scalar)}};
    o["penalty"] = regression::penalty_name(r.penalty);
    o["lambda"] = r.lambda;
    o["tuning_mse"] = number_or_null(r.tuning_mse);
    o["fold_mses"] = r.fold_mses;
    o["permuted_fold_mses"] = r.permuted_fold_mses;
    j["rows"].push_back(std::move(o));
  }
  j["summary"] = summary_json(report.summary);
  j["combined"] = summary_json(report.combined);
  return j;
}

EvalReport from_json(const json& j) {
  EvalReport rep;
  try {
    for (const auto& o : j.at("rows")) {
      ReportRow r;
      r.language = o.at("language").get<std::string>();
      r.measure = corpus::measure_from_name(o.at("measure").get<std::string>());
      const auto fam = predictors::family_from_name(o.at("family").get<std::string>());
      std::optional<int> layer;
      if (!o.at("layer").is_null()) layer = o.at("layer").get<int>();
      r.config = predictors::PredictorConfig::make(fam, layer);
      r.mean_mse = number_from(o.at("mean_mse"));
      r.std_mse = number_from(o.at("std_mse"));
      r.permuted_mean_mse = number_from(o.at("permuted_mean_mse"));
      r.permuted_std_mse = number_from(o.at("permuted_std_mse"));
      r.delta_mean = number_from(o.at("delta_mean"));
      r.delta_std = number_from(o.at("delta_std"));
      const auto& s = o.at("significance");
      r.significance.vs_permuted = s.at("vs_permuted").get<bool>();
      r.significance.vs_baseline = s.at("vs_baseline").get<bool>();
      r.significance.vs_representation = s.at("vs_representation").get<bool>();
      r.significance.vs_scalar = s.at("vs_scalar").get<bool>();
      r.significance.p_permuted = number_from(s.at("p_permuted"));
      r.significance.p_baseline = number_from(s.at("p_baseline"));
      r.significance.p_representation = number_from(s.at("p_representation"));
      r.significance.p_scalar = number_from(s.at("p_scalar"));
      r.penalty = regression::penalty_from_name(o.at("penalty").get<std::string>());
      r.lambda = o.at("lambda").get<double>();
      r.tuning_mse = number_from(o.at("tuning_mse"));
      r.fold_mses = o.at("fold_mses").get<std::vector<double>>();
      r.permuted_fold_mses = o.at("permuted_fold_mses").get<std::vector<double>>();
      rep.rows.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
  summarize_all(rep);
  return rep;
}

ordered_json plot_data(const EvalReport& report) {
  ordered_json curves = ordered_json::array();
  std::vector<std::tuple<std::string, corpus::Measure, Family>> keys;
  for (const auto& r : report.rows) {
    if (!predictors::is_layerwise(r.config.family)) continue;
    const auto k = std::make_tuple(r.language, r.measure, r.config.family);
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  for (const auto& [lang, m, fam] : keys) {
    std::map<int, const ReportRow*> by_layer;
    for (const auto& r : report.rows)
      if (r.language == lang && r.measure == m && r.config.family == fam) by_layer[*r.config.layer] = &r;
    ordered_json c;
    c["language"] = lang;
    c["measure"] = corpus::measure_name(m);
    c["family"] = predictors::family_name(fam);
    c["points"] = ordered_json::array();
    for (const auto& [layer, r] : by_layer)
      c["points"].push_back({{"layer", layer},
                             {"mean_mse", number_or_null(r->mean_mse)},
                             {"std_mse", number_or_null(r->std_mse)},
                             {"delta_mean", number_or_null(r->delta_mean)}});
    curves.push_back(std::move(c));
  }
  return ordered_json{{"curves", curves}};
}

void write_report(const std::filesystem::path& dir, const EvalReport& report) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("io", "cannot create output directory: " + dir.string());
  write_text(dir / "report.tsv", to_tsv(report));
  write_text(dir / "report.json", to_json(report).dump(2) + "\n");
  std::string tex = render_latex_table(report.summary);
  if (!report.combined.empty()) tex += "% combined\n" + render_latex_table(report.combined);
  write_text(dir / "summary.tex", tex);
  std::string txt = render_text_table(report.summary);
  if (!report.combined.empty()) txt += "\n" + render_text_table(report.combined);
  write_text(dir / "summary.txt", txt);
  write_text(dir / "plot_data.json", plot_data(report).dump(2) + "\n");
}

}  // namespace rtprobe::report
