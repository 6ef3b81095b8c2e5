#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rtprobe::corpus {

enum class Measure { FFD, GD, TRT };

inline constexpr Measure kAllMeasures[] = {Measure::FFD, Measure::GD, Measure::TRT};

std::string measure_name(Measure m);
Measure measure_from_name(std::string_view name);

/// Reading-time measures in milliseconds; nullopt marks a skipped/missing value.
struct Measures {
  std::optional<double> ffd;
  std::optional<double> gd;
  std::optional<double> trt;

  std::optional<double> get(Measure m) const;
  void set(Measure m, std::optional<double> v);
  /// ffd <= gd <= trt, checked only when all three are present.
  bool ordered() const;

  bool operator==(const Measures&) const = default;
};

struct ReadingRecord {
  std::string doc_id;
  std::string participant_id;
  std::size_t unit_index = 0;
  std::string unit_text;
  std::string language;
  Measures measures;
  bool is_eos = false;
  bool ordering_violated = false;
  std::size_t line = 0;
};

/// Maps corpus columns to record fields. Presets cover Provo, MECO and the
/// toolkit's own tab-separated layout.
struct ColumnSchema {
  char delimiter = '\t';
  std::string doc_id = "doc_id";
  std::string participant_id = "participant_id";
  std::string unit_index = "unit_index";
  std::string unit_text = "unit_text";
  std::string ffd = "ffd";
  std::string gd = "gd";
  std::string trt = "trt";
  std::string language;  // optional; empty means no language column
  int index_base = 0;
  std::vector<std::string> missing_markers{"", "NA"};
  std::string eos_marker = "<eos>";
  std::string default_language = "und";

  static ColumnSchema native();
  static ColumnSchema provo();
  static ColumnSchema meco();
  static ColumnSchema preset(std::string_view name);
};

/// Returns the schema columns absent from the file's header row.
std::vector<std::string> missing_columns(const std::filesystem::path& path,
                                         const ColumnSchema& schema);

/// Parses a delimited corpus file. Rows violating ffd <= gd <= trt are kept
/// and flagged via `ordering_violated`.
std::vector<ReadingRecord> parse_corpus(const std::filesystem::path& path,
                                        const ColumnSchema& schema);
std::vector<ReadingRecord> parse_corpus_text(std::string_view text, const ColumnSchema& schema);

struct UnitTable {
  std::string doc_id;
  std::string language;
  std::vector<std::string> units;  // position == index
  std::vector<Measures> aggregated;
  std::map<std::pair<std::string, std::size_t>, Measures> per_participant;
  // wrap-up reading time on the end-of-passage position, when the corpus has one
  std::optional<Measures> eos_aggregated;
  std::map<std::string, Measures> eos_per_participant;

  std::size_t size() const { return units.size(); }
  std::vector<std::string> participants() const;
};

using Corpus = std::map<std::string, UnitTable>;

/// Participant means per unit and measure over non-missing values.
Corpus aggregate(const std::vector<ReadingRecord>& records);

void write_unit_tables(const std::filesystem::path& path, const Corpus& corpus);

struct HoldoutSplit {
  std::vector<std::string> tuning;
  std::vector<std::string> experiment;
};

/// Seeded selection of whole documents for tuning; the remainder (in input
/// order) forms the experiment set.
HoldoutSplit holdout_split(const std::vector<std::string>& doc_ids, std::size_t n_holdout,
                           std::uint64_t seed);
HoldoutSplit holdout_split(const Corpus& corpus, std::size_t n_holdout, std::uint64_t seed);

/// Splits one delimited line honoring double quotes.
std::vector<std::string> split_delimited(std::string_view line, char delimiter);

}  // namespace rtprobe::corpus
