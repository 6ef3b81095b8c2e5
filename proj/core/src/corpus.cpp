#include "rtprobe/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "rtprobe/error.hpp"

namespace rtprobe::corpus {

std::string measure_name(Measure m) {
  switch (m) {
    case Measure::FFD: return "FFD";
    case Measure::GD: return "GD";
    case Measure::TRT: return "TRT";
  }
  return "?";
}

Measure measure_from_name(std::string_view name) {
  std::string up(name);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  if (up == "FFD") return Measure::FFD;
  if (up == "GD") return Measure::GD;
  if (up == "TRT") return Measure::TRT;
  throw ConfigError("unknown measure: " + std::string(name));
}

std::optional<double> Measures::get(Measure m) const {
  switch (m) {
    case Measure::FFD: return ffd;
    case Measure::GD: return gd;
    case Measure::TRT: return trt;
  }
  return std::nullopt;
}

void Measures::set(Measure m, std::optional<double> v) {
  switch (m) {
    case Measure::FFD: ffd = v; break;
    case Measure::GD: gd = v; break;
    case Measure::TRT: trt = v; break;
  }
}

bool Measures::ordered() const {
  if (!ffd || !gd || !trt) return true;
  return *ffd <= *gd && *gd <= *trt;
}

ColumnSchema ColumnSchema::native() {
  ColumnSchema s;
  s.language = "language";
  return s;
}

ColumnSchema ColumnSchema::provo() {
  ColumnSchema s;
  s.delimiter = ',';
  s.doc_id = "Text_ID";
  s.participant_id = "Participant_ID";
  s.unit_index = "Word_Number";
  s.unit_text = "Word";
  s.ffd = "IA_FIRST_FIXATION_DURATION";
  s.gd = "IA_FIRST_RUN_DWELL_TIME";
  s.trt = "IA_DWELL_TIME";
  s.index_base = 1;
  s.default_language = "en";
  return s;
}

ColumnSchema ColumnSchema::meco() {
  ColumnSchema s;
  s.delimiter = ',';
  s.doc_id = "trialid";
  s.participant_id = "subid";
  s.unit_index = "ianum";
  s.unit_text = "ia";
  s.ffd = "firstfix.dur";
  s.gd = "firstrun.dur";
  s.trt = "dur";
  s.language = "lang";
  s.index_base = 1;
  return s;
}

ColumnSchema ColumnSchema::preset(std::string_view name) {
  if (name == "native") return native();
  if (name == "provo") return provo();
  if (name == "meco") return meco();
  throw ConfigError("unknown schema preset: " + std::string(name));
}

std::vector<std::string> split_delimited(std::string_view line, char delimiter) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == delimiter) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

namespace {

std::vector<std::string> read_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (!lines.empty() && lines[0].rfind("\xEF\xBB\xBF", 0) == 0) lines[0].erase(0, 3);
  return lines;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open corpus file: " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::pair<std::string, const std::string*>> required_columns(const ColumnSchema& s) {
  std::vector<std::pair<std::string, const std::string*>> cols = {
      {"doc_id", &s.doc_id}, {"participant_id", &s.participant_id},
      {"unit_index", &s.unit_index}, {"unit_text", &s.unit_text},
      {"ffd", &s.ffd}, {"gd", &s.gd}, {"trt", &s.trt}};
  if (!s.language.empty()) cols.emplace_back("language", &s.language);
  return cols;
}

std::vector<std::string> unknown_in_header(const std::vector<std::string>& header,
                                           const ColumnSchema& schema) {
  std::vector<std::string> missing;
  for (const auto& [field, name] : required_columns(schema)) {
    if (std::find(header.begin(), header.end(), *name) == header.end()) missing.push_back(*name);
  }
  return missing;
}

std::optional<double> parse_measure(const std::string& cell, const ColumnSchema& schema,
                                    std::size_t line, const std::string& column) {
  if (std::find(schema.missing_markers.begin(), schema.missing_markers.end(), cell) !=
      schema.missing_markers.end()) {
    return std::nullopt;
  }
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first < last && *first == ' ') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || !std::isfinite(v)) {
    throw CorpusError("line " + std::to_string(line) + ": non-numeric measure cell '" + cell +
                      "' in column " + column);
  }
  if (v < 0.0) {
    throw CorpusError("line " + std::to_string(line) + ": negative reading time in column " + column);
  }
  return v;
}

}  // namespace

std::vector<std::string> missing_columns(const std::filesystem::path& path,
                                         const ColumnSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open corpus file: " + path.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  return unknown_in_header(split_delimited(line, schema.delimiter), schema);
}

std::vector<ReadingRecord> parse_corpus_text(std::string_view text, const ColumnSchema& schema) {
  const auto lines = read_lines(text);
  if (lines.empty()) throw CorpusError("corpus file is empty");
  const auto header = split_delimited(lines[0], schema.delimiter);
  if (auto missing = unknown_in_header(header, schema); !missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw CorpusError("unknown column(s): " + list);
  }
  auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  const std::size_t c_doc = col(schema.doc_id), c_part = col(schema.participant_id),
                    c_idx = col(schema.unit_index), c_text = col(schema.unit_text),
                    c_ffd = col(schema.ffd), c_gd = col(schema.gd), c_trt = col(schema.trt);
  const std::size_t c_lang = schema.language.empty() ? header.size() : col(schema.language);

  std::vector<ReadingRecord> records;
  std::set<std::tuple<std::string, std::string, std::size_t>> seen;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto cells = split_delimited(lines[li], schema.delimiter);
    const std::size_t line_no = li + 1;
    if (cells.size() < header.size()) {
      throw CorpusError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " cells, found " +
                        std::to_string(cells.size()));
    }
    ReadingRecord r;
    r.line = line_no;
    r.doc_id = cells[c_doc];
    r.participant_id = cells[c_part];
    r.unit_text = cells[c_text];
    r.language = c_lang < cells.size() ? cells[c_lang] : schema.default_language;

    long long idx = 0;
    const auto& cell = cells[c_idx];
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), idx);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || idx < schema.index_base) {
      throw CorpusError("line " + std::to_string(line_no) + ": invalid unit index '" + cell + "'");
    }
    r.unit_index = static_cast<std::size_t>(idx - schema.index_base);
    r.is_eos = !schema.eos_marker.empty() && r.unit_text == schema.eos_marker;

    r.measures.ffd = parse_measure(cells[c_ffd], schema, line_no, schema.ffd);
    r.measures.gd = parse_measure(cells[c_gd], schema, line_no, schema.gd);
    r.measures.trt = parse_measure(cells[c_trt], schema, line_no, schema.trt);
    r.ordering_violated = !r.measures.ordered();

    if (!seen.emplace(r.doc_id, r.participant_id, r.unit_index).second) {
      throw CorpusError("line " + std::to_string(line_no) + ": duplicate (doc, participant, unit) key (" +
                        r.doc_id + ", " + r.participant_id + ", " + std::to_string(r.unit_index) + ")");
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<ReadingRecord> parse_corpus(const std::filesystem::path& path,
                                        const ColumnSchema& schema) {
  return parse_corpus_text(slurp(path), schema);
}

std::vector<std::string> UnitTable::participants() const {
  std::set<std::string> ids;
  for (const auto& [key, m] : per_participant) ids.insert(key.first);
  return {ids.begin(), ids.end()};
}

Corpus aggregate(const std::vector<ReadingRecord>& records) {
  struct Accum {
    std::map<std::size_t, std::string> text;
    std::map<std::size_t, std::vector<const ReadingRecord*>> rows;
    std::vector<const ReadingRecord*> eos;
    std::optional<std::size_t> eos_index;
    std::string language;
  };
  std::map<std::string, Accum> docs;
  for (const auto& r : records) {
    auto& acc = docs[r.doc_id];
    if (acc.language.empty()) {
      acc.language = r.language;
    } else if (acc.language != r.language) {
      throw CorpusError("document " + r.doc_id + " has conflicting language tags");
    }
    if (r.is_eos) {
      if (acc.eos_index && *acc.eos_index != r.unit_index) {
        throw CorpusError("document " + r.doc_id + " has EOS rows at different indices");
      }
      acc.eos_index = r.unit_index;
      acc.eos.push_back(&r);
      continue;
    }
    auto [it, inserted] = acc.text.emplace(r.unit_index, r.unit_text);
    if (!inserted && it->second != r.unit_text) {
      throw CorpusError("conflicting unit_text at document " + r.doc_id + " index " +
                        std::to_string(r.unit_index) + ": '" + it->second + "' vs '" +
                        r.unit_text + "'");
    }
    acc.rows[r.unit_index].push_back(&r);
  }

  auto mean_of = [](const std::vector<const ReadingRecord*>& rows, Measure m) -> std::optional<double> {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto* r : rows) {
      if (auto v = r->measures.get(m)) {
        sum += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };

  Corpus out;
  for (auto& [doc_id, acc] : docs) {
    UnitTable t;
    t.doc_id = doc_id;
    t.language = acc.language;
    const std::size_t U = acc.text.size();
    if (U == 0) throw CorpusError("document " + doc_id + " has no units");
    if (acc.text.rbegin()->first != U - 1) {
      throw CorpusError("document " + doc_id + " unit positions are not contiguous 0..U-1");
    }
    for (std::size_t u = 0; u < U; ++u) {
      t.units.push_back(acc.text[u]);
      Measures m;
      for (auto measure : kAllMeasures) m.set(measure, mean_of(acc.rows[u], measure));
      t.aggregated.push_back(m);
      for (const auto* r : acc.rows[u]) t.per_participant[{r->participant_id, u}] = r->measures;
    }
    if (acc.eos_index) {
      if (*acc.eos_index != U) {
        throw CorpusError("document " + doc_id + " EOS row must follow the last unit");
      }
      Measures m;
      for (auto measure : kAllMeasures) m.set(measure, mean_of(acc.eos, measure));
      t.eos_aggregated = m;
      for (const auto* r : acc.eos) t.eos_per_participant[r->participant_id] = r->measures;
    }
    out.emplace(doc_id, std::move(t));
  }
  return out;
}

void write_unit_tables(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("io", "cannot open for writing: " + path.string());
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("NA");
    std::ostringstream os;
    os.precision(10);
    os << *v;
    return os.str();
  };
  out << "doc_id\tlanguage\tunit_index\tunit_text\tffd\tgd\ttrt\n";
  for (const auto& [doc_id, t] : corpus) {
    for (std::size_t u = 0; u < t.size(); ++u) {
      const auto& m = t.aggregated[u];
      out << doc_id << '\t' << t.language << '\t' << u << '\t' << t.units[u] << '\t'
          << cell(m.ffd) << '\t' << cell(m.gd) << '\t' << cell(m.trt) << '\n';
    }
  }
}

HoldoutSplit holdout_split(const std::vector<std::string>& doc_ids, std::size_t n_holdout,
                           std::uint64_t seed) {
  if (n_holdout >= doc_ids.size()) {
    throw ConfigError("holdout size " + std::to_string(n_holdout) +
                      " must be smaller than the document count " + std::to_string(doc_ids.size()));
  }
  std::vector<std::size_t> order(doc_ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<bool> held(doc_ids.size(), false);
  for (std::size_t i = 0; i < n_holdout; ++i) held[order[i]] = true;

  HoldoutSplit split;
  for (std::size_t i = 0; i < doc_ids.size(); ++i) {
    (held[i] ? split.tuning : split.experiment).push_back(doc_ids[i]);
  }
  return split;
}

HoldoutSplit holdout_split(const Corpus& corpus, std::size_t n_holdout, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& [id, t] : corpus) ids.push_back(id);
  return holdout_split(ids, n_holdout, seed);
}

}  // namespace rtprobe::corpus
