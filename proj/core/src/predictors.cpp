#include "rtprobe/predictors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rtprobe/error.hpp"

namespace rtprobe::predictors {

using corpus::AlignmentMap;
using trace::DocumentTrace;

std::string family_name(Family f) {
  switch (f) {
    case Family::Baseline: return "baseline";
    case Family::Surprisal: return "surprisal";
    case Family::LogitLens: return "logitlens";
    case Family::InfoValue: return "infovalue";
    case Family::Representation: return "representation";
    case Family::ReprSurprisal: return "repr+surprisal";
    case Family::ReprInfoValue: return "repr+infovalue";
    case Family::ReprLogitLens: return "repr+logitlens";
  }
  return "?";
}

Family family_from_name(std::string_view name) {
  for (auto f : kAllFamilies) {
    if (family_name(f) == name) return f;
  }
  throw ConfigError("unknown predictor family: " + std::string(name));
}

bool is_layerwise(Family f) { return f != Family::Baseline && f != Family::Surprisal; }

bool uses_representation(Family f) {
  return f == Family::Representation || f == Family::ReprSurprisal ||
         f == Family::ReprInfoValue || f == Family::ReprLogitLens;
}

std::optional<Family> scalar_component(Family f) {
  switch (f) {
    case Family::ReprSurprisal: return Family::Surprisal;
    case Family::ReprInfoValue: return Family::InfoValue;
    case Family::ReprLogitLens: return Family::LogitLens;
    default: return std::nullopt;
  }
}

PredictorConfig PredictorConfig::make(Family family, std::optional<int> layer, bool include_baseline) {
  if (is_layerwise(family) != layer.has_value()) {
    throw ConfigError("family " + family_name(family) +
                      (layer ? " does not take a layer" : " requires a layer"));
  }
  return PredictorConfig{family, layer, include_baseline};
}

std::string PredictorConfig::label() const {
  return family_name(family) + (layer ? "@" + std::to_string(*layer) : "");
}

FrequencyTable FrequencyTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open frequency table: " + path.string());
  FrequencyTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
    auto cells = corpus::split_delimited(line, delim);
    if (cells.size() < 2) {
      throw CorpusError("frequency table line " + std::to_string(line_no) + ": expected two columns");
    }
    char* end = nullptr;
    const double c = std::strtod(cells[1].c_str(), &end);
    if (end == cells[1].c_str() || *end != '\0') {
      if (line_no == 1) continue;  // header
      throw CorpusError("frequency table line " + std::to_string(line_no) + ": non-numeric count");
    }
    if (c < 0.0) throw CorpusError("frequency table line " + std::to_string(line_no) + ": negative count");
    t.add(cells[0], c);
  }
  return t;
}

void FrequencyTable::add(std::string word, double count) { counts_[std::move(word)] += count; }

double FrequencyTable::count(std::string_view word) const {
  auto it = counts_.find(std::string(word));
  return it == counts_.end() ? 0.0 : it->second;
}

void FrequencyTable::save(const std::filesystem::path& path) const {
  std::vector<std::pair<std::string, double>> rows(counts_.begin(), counts_.end());
  std::sort(rows.begin(), rows.end());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("io", "cannot open for writing: " + path.string());
  out << "token\tcount\n";
  for (const auto& [w, c] : rows) out << w << '\t' << c << '\n';
}

namespace {

void require_alignment(const DocumentTrace& doc, const AlignmentMap& align) {
  if (align.token_count() != doc.text_token_count()) {
    throw DimensionError("alignment covers " + std::to_string(align.token_count()) +
                         " tokens but document " + doc.doc_id + " has " +
                         std::to_string(doc.text_token_count()));
  }
}

}  // namespace

Eigen::VectorXd unit_surprisal(const DocumentTrace& doc, const AlignmentMap& align) {
  require_alignment(doc, align);
  if (doc.final_surprisal.size() != doc.token_count()) {
    throw DimensionError("final_surprisal missing for document " + doc.doc_id);
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(align.unit_count()));
  for (std::size_t u = 0; u < align.unit_count(); ++u) {
    double s = 0.0;
    for (std::size_t t = align.spans[u].begin; t < align.spans[u].end; ++t) s += doc.final_surprisal[t];
    out[static_cast<Eigen::Index>(u)] = s;
  }
  return out;
}

Eigen::VectorXd unit_logitlens_surprisal(const DocumentTrace& doc, const AlignmentMap& align,
                                         int layer) {
  require_alignment(doc, align);
  if (doc.logitlens_surprisal.empty()) {
    throw DimensionError("logit-lens surprisal not exported for document " + doc.doc_id);
  }
  const std::size_t slot = doc.layer_slot(layer);
  const std::size_t L = doc.logitlens_surprisal.dims[1];
  Eigen::VectorXd out(static_cast<Eigen::Index>(align.unit_count()));
  for (std::size_t u = 0; u < align.unit_count(); ++u) {
    double s = 0.0;
    for (std::size_t t = align.spans[u].begin; t < align.spans[u].end; ++t) {
      s += doc.logitlens_surprisal.values[t * L + slot];
    }
    out[static_cast<Eigen::Index>(u)] = s;
  }
  return out;
}

Eigen::MatrixXd pool_unit_representation(const DocumentTrace& doc, const AlignmentMap& align,
                                         int layer) {
  require_alignment(doc, align);
  if (doc.hidden_states.empty()) {
    throw DimensionError("hidden states not exported for document " + doc.doc_id);
  }
  const std::size_t slot = doc.layer_slot(layer);
  const std::size_t L = doc.hidden_states.dims[1];
  const std::size_t d = doc.hidden_states.dims[2];
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(align.unit_count()),
                                              static_cast<Eigen::Index>(d));
  for (std::size_t u = 0; u < align.unit_count(); ++u) {
    const auto& sp = align.spans[u];
    for (std::size_t t = sp.begin; t < sp.end; ++t) {
      const float* row = doc.hidden_states.values.data() + (t * L + slot) * d;
      for (std::size_t k = 0; k < d; ++k) out(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(k)) += row[k];
    }
    out.row(static_cast<Eigen::Index>(u)) /= static_cast<double>(sp.size());
  }
  return out;
}

Eigen::VectorXd information_value(const DocumentTrace& doc, int layer) {
  if (doc.iv_distances.empty()) {
    throw DimensionError("information-value distances not exported for document " + doc.doc_id);
  }
  const std::size_t slot = doc.layer_slot(layer);
  const std::size_t U = doc.iv_distances.dims[0];
  const std::size_t L = doc.iv_distances.dims[1];
  const std::size_t N = doc.iv_distances.dims[2];
  if (N == 0) throw DimensionError("information value needs at least one sample (N = 0)");
  Eigen::VectorXd out(static_cast<Eigen::Index>(U));
  for (std::size_t u = 0; u < U; ++u) {
    const float* samples = doc.iv_distances.values.data() + (u * L + slot) * N;
    double s = 0.0;
    for (std::size_t k = 0; k < N; ++k) s += samples[k];
    out[static_cast<Eigen::Index>(u)] = s / static_cast<double>(N);
  }
  return out;
}

Eigen::MatrixXd baseline_features(const corpus::UnitTable& table, const FrequencyTable& freq) {
  const auto U = static_cast<Eigen::Index>(table.size());
  Eigen::MatrixXd out(U, 3);
  for (Eigen::Index u = 0; u < U; ++u) {
    const auto& w = table.units[static_cast<std::size_t>(u)];
    // length in characters (UTF-8 code points)
    const auto chars = std::count_if(w.begin(), w.end(),
                                     [](char c) { return (static_cast<unsigned char>(c) & 0xc0) != 0x80; });
    out(u, 0) = static_cast<double>(chars);
    out(u, 1) = std::log1p(freq.count(w));
    out(u, 2) = U > 1 ? static_cast<double>(u) / static_cast<double>(U - 1) : 0.0;
  }
  return out;
}

BaselineBlock default_baseline(const corpus::UnitTable& table, const FrequencyTable& freq) {
  BaselineBlock b;
  b.names = {"length", "log_frequency", "position"};
  b.values = baseline_features(table, freq);
  b.eos = Eigen::RowVectorXd::Zero(3);
  b.eos[2] = 1.0;
  return b;
}

DesignMatrix build_design_matrix(const PredictorConfig& config, const DocumentTrace& doc,
                                 const AlignmentMap& align, const corpus::UnitTable& table,
                                 corpus::Measure measure, const BaselineBlock& baseline,
                                 const DesignOptions& options) {
  const std::size_t U = table.size();
  if (align.unit_count() != U) {
    throw DimensionError("document " + doc.doc_id + ": alignment has " +
                         std::to_string(align.unit_count()) + " units, corpus has " +
                         std::to_string(U));
  }
  if (config.include_baseline && static_cast<std::size_t>(baseline.values.rows()) != U) {
    throw DimensionError("baseline block row count differs from unit count");
  }
  const Family fam = config.family;
  const bool want_eos = options.include_eos && doc.has_eos_row && table.eos_aggregated.has_value();

  // Unit-level predictor columns (without intercept); row U is the EOS row.
  std::vector<std::string> names{"intercept"};
  std::vector<Eigen::MatrixXd> blocks;
  const Eigen::Index rows_all = static_cast<Eigen::Index>(U + (want_eos ? 1 : 0));
  auto add_block = [&](Eigen::MatrixXd m) { blocks.push_back(std::move(m)); };
  const std::size_t eos_row = doc.token_count() - 1;

  if (config.include_baseline) {
    Eigen::MatrixXd b(rows_all, baseline.values.cols());
    b.topRows(static_cast<Eigen::Index>(U)) = baseline.values;
    if (want_eos) b.row(static_cast<Eigen::Index>(U)) = baseline.eos;
    names.insert(names.end(), baseline.names.begin(), baseline.names.end());
    add_block(std::move(b));
  }

  std::size_t repr_begin = 0, repr_end = 0;
  const std::string lsuffix = config.layer ? "_L" + std::to_string(*config.layer) : "";
  if (uses_representation(fam)) {
    const Eigen::MatrixXd pooled = pool_unit_representation(doc, align, *config.layer);
    Eigen::MatrixXd b(rows_all, pooled.cols());
    b.topRows(static_cast<Eigen::Index>(U)) = pooled;
    if (want_eos) {
      const std::size_t slot = doc.layer_slot(*config.layer);
      const std::size_t L = doc.hidden_states.dims[1], d = doc.hidden_states.dims[2];
      const float* row = doc.hidden_states.values.data() + (eos_row * L + slot) * d;
      for (std::size_t k = 0; k < d; ++k) b(static_cast<Eigen::Index>(U), static_cast<Eigen::Index>(k)) = row[k];
    }
    repr_begin = names.size();
    for (Eigen::Index k = 0; k < pooled.cols(); ++k) names.push_back("repr" + lsuffix + "_" + std::to_string(k));
    repr_end = names.size();
    add_block(std::move(b));
  }

  auto scalar_block = [&](const Eigen::VectorXd& v, double eos_value, const std::string& name) {
    Eigen::MatrixXd b(rows_all, 1);
    b.topRows(static_cast<Eigen::Index>(U)) = v;
    if (want_eos) b(static_cast<Eigen::Index>(U), 0) = eos_value;
    names.push_back(name);
    add_block(std::move(b));
  };
  if (fam == Family::Surprisal || fam == Family::ReprSurprisal) {
    scalar_block(unit_surprisal(doc, align), want_eos ? doc.final_surprisal[eos_row] : 0.0, "surprisal");
  }
  if (fam == Family::LogitLens || fam == Family::ReprLogitLens) {
    double eos_value = 0.0;
    if (want_eos) {
      eos_value = doc.logitlens_surprisal.values[eos_row * doc.logitlens_surprisal.dims[1] +
                                                 doc.layer_slot(*config.layer)];
    }
    scalar_block(unit_logitlens_surprisal(doc, align, *config.layer), eos_value, "logitlens" + lsuffix);
  }
  if (fam == Family::InfoValue || fam == Family::ReprInfoValue) {
    auto iv = information_value(doc, *config.layer);
    if (static_cast<std::size_t>(iv.size()) != U) throw DimensionError("iv_distances unit count mismatch");
    // no alternative continuations are defined after the end of the passage
    scalar_block(iv, 0.0, "infovalue" + lsuffix);
  }

  Eigen::Index D = 1;
  for (const auto& b : blocks) D += b.cols();
  Eigen::MatrixXd full(rows_all, D);
  full.col(0).setOnes();
  Eigen::Index c = 1;
  for (const auto& b : blocks) {
    full.middleCols(c, b.cols()) = b;
    c += b.cols();
  }

  // Collect response rows.
  struct Row {
    std::size_t unit;
    double y;
    std::string subject;
  };
  std::vector<Row> rows;
  if (options.per_participant) {
    for (const auto& [key, m] : table.per_participant) {
      if (auto v = m.get(measure)) rows.push_back({key.second, *v, key.first});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.unit < b.unit; });
    if (want_eos) {
      for (const auto& [pid, m] : table.eos_per_participant) {
        if (auto v = m.get(measure)) rows.push_back({U, *v, pid});
      }
    }
  } else {
    for (std::size_t u = 0; u < U; ++u) {
      if (auto v = table.aggregated[u].get(measure)) rows.push_back({u, *v, {}});
    }
    if (want_eos) {
      if (auto v = table.eos_aggregated->get(measure)) rows.push_back({U, *v, {}});
    }
  }

  DesignMatrix dm;
  dm.config = config;
  dm.measure = measure;
  dm.feature_names = std::move(names);
  dm.repr_begin = repr_begin;
  dm.repr_end = repr_end;
  dm.doc_ids = {doc.doc_id};
  dm.X.resize(static_cast<Eigen::Index>(rows.size()), D);
  dm.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    dm.X.row(static_cast<Eigen::Index>(i)) = full.row(static_cast<Eigen::Index>(rows[i].unit));
    dm.y[static_cast<Eigen::Index>(i)] = rows[i].y;
    dm.unit_of_row.push_back(rows[i].unit);
    dm.doc_of_row.push_back(0);
    if (options.per_participant) dm.subject_of_row.push_back(rows[i].subject);
  }
  if (!dm.X.allFinite() || !dm.y.allFinite()) {
    throw ValidationError("design matrix for document " + doc.doc_id + " contains non-finite values");
  }
  return dm;
}

DesignMatrix stack(const std::vector<DesignMatrix>& parts) {
  if (parts.empty()) throw DimensionError("cannot stack zero design matrices");
  DesignMatrix out;
  out.config = parts[0].config;
  out.measure = parts[0].measure;
  out.feature_names = parts[0].feature_names;
  out.repr_begin = parts[0].repr_begin;
  out.repr_end = parts[0].repr_end;
  Eigen::Index n = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts[0].cols() || p.feature_names != parts[0].feature_names) {
      throw DimensionError("cannot stack design matrices with different columns");
    }
    n += p.rows();
  }
  out.X.resize(n, parts[0].cols());
  out.y.resize(n);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.X.middleRows(r, p.rows()) = p.X;
    out.y.segment(r, p.rows()) = p.y;
    r += p.rows();
    const std::size_t offset = out.doc_ids.size();
    out.doc_ids.insert(out.doc_ids.end(), p.doc_ids.begin(), p.doc_ids.end());
    for (auto d : p.doc_of_row) out.doc_of_row.push_back(d + offset);
    out.unit_of_row.insert(out.unit_of_row.end(), p.unit_of_row.begin(), p.unit_of_row.end());
    out.subject_of_row.insert(out.subject_of_row.end(), p.subject_of_row.begin(), p.subject_of_row.end());
  }
  return out;
}

void write_design_matrix(const std::filesystem::path& path, const DesignMatrix& design) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("io", "cannot open for writing: " + path.string());
  out.precision(17);
  out << "doc_id\tunit_index";
  if (!design.subject_of_row.empty()) out << "\tsubject";
  out << "\ty";
  for (const auto& n : design.feature_names) out << '\t' << n;
  out << '\n';
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    out << design.doc_ids[design.doc_of_row[idx]] << '\t' << design.unit_of_row[idx];
    if (!design.subject_of_row.empty()) out << '\t' << design.subject_of_row[idx];
    out << '\t' << design.y[i];
    for (Eigen::Index j = 0; j < design.cols(); ++j) out << '\t' << design.X(i, j);
    out << '\n';
  }
}

}  // namespace rtprobe::predictors
