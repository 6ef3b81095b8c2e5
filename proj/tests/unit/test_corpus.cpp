#include <algorithm>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rtprobe/alignment.hpp"
#include "rtprobe/corpus.hpp"
#include "rtprobe/error.hpp"

using namespace rtprobe;
using namespace rtprobe::corpus;

namespace {

const char* kHeader = "doc_id\tparticipant_id\tunit_index\tunit_text\tffd\tgd\ttrt\tlanguage\n";

std::string row(const std::string& doc, const std::string& pid, int idx, const std::string& text,
                const std::string& ffd, const std::string& gd, const std::string& trt) {
  return doc + "\t" + pid + "\t" + std::to_string(idx) + "\t" + text + "\t" + ffd + "\t" + gd + "\t" + trt + "\ten\n";
}

}  // namespace

TEST(Corpus, OrderedRowAccepted) {
  const auto recs = parse_corpus_text(std::string(kHeader) + row("d", "p1", 0, "cat", "200", "250", "400"),
                                      ColumnSchema::native());
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_FALSE(recs[0].ordering_violated);
  EXPECT_EQ(recs[0].measures.ffd, 200.0);
  EXPECT_EQ(recs[0].measures.trt, 400.0);
  EXPECT_EQ(recs[0].language, "en");
}

TEST(Corpus, OrderingViolationFlaggedNotDropped) {
  const auto recs = parse_corpus_text(std::string(kHeader) + row("d", "p1", 0, "cat", "300", "250", "400"),
                                      ColumnSchema::native());
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_TRUE(recs[0].ordering_violated);
}

TEST(Corpus, MissingMarkersAndSkippedUnit) {
  const auto text = std::string(kHeader) + row("d", "p1", 0, "a", "200", "200", "200") +
                    row("d", "p2", 0, "a", "NA", "", "") + row("d", "p1", 1, "b", "100", "100", "100") +
                    row("d", "p2", 1, "b", "300", "300", "300");
  const auto corpus = aggregate(parse_corpus_text(text, ColumnSchema::native()));
  const auto& t = corpus.at("d");
  EXPECT_EQ(t.aggregated[0].ffd, 200.0);
  EXPECT_EQ(t.aggregated[1].ffd, 200.0);
  EXPECT_EQ(t.participants(), (std::vector<std::string>{"p1", "p2"}));
}

TEST(Corpus, MeanSingleParticipantAndEmptyMean) {
  const auto text = std::string(kHeader) + row("d", "p1", 0, "a", "200", "200", "NA") +
                    row("d", "p2", 0, "a", "300", "300", "NA") + row("d", "p1", 1, "b", "120", "130", "140");
  const auto t = aggregate(parse_corpus_text(text, ColumnSchema::native())).at("d");
  EXPECT_EQ(t.aggregated[0].ffd, 250.0);
  EXPECT_FALSE(t.aggregated[0].trt.has_value());
  EXPECT_EQ(t.aggregated[1], (Measures{120.0, 130.0, 140.0}));
}

TEST(Corpus, RejectsBadInput) {
  const ColumnSchema s = ColumnSchema::native();
  EXPECT_THROW(parse_corpus_text(std::string(kHeader) + row("d", "p", 0, "a", "x", "1", "1"), s), CorpusError);
  EXPECT_THROW(parse_corpus_text(std::string(kHeader) + row("d", "p", 0, "a", "1", "1", "1") +
                                     row("d", "p", 0, "a", "1", "1", "1"),
                                 s),
               CorpusError);
  EXPECT_THROW(parse_corpus_text("doc\tparticipant_id\n", s), CorpusError);
  EXPECT_THROW(aggregate(parse_corpus_text(std::string(kHeader) + row("d", "p", 0, "a", "1", "1", "1") +
                                               row("d", "q", 0, "b", "1", "1", "1"),
                                           s)),
               CorpusError);
}

TEST(Corpus, ProvoPresetReadsOneBasedIndices) {
  const std::string text =
      "Participant_ID,Text_ID,Word_Number,Word,IA_FIRST_FIXATION_DURATION,IA_FIRST_RUN_DWELL_TIME,IA_DWELL_TIME\n"
      "s1,1,1,\"Hello,\",200,220,300\n"
      "s1,1,2,world,180,180,180\n";
  const auto recs = parse_corpus_text(text, ColumnSchema::provo());
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].unit_index, 0u);
  EXPECT_EQ(recs[0].unit_text, "Hello,");
  EXPECT_EQ(recs[1].language, "en");
}

TEST(Corpus, AggregationInvariantToParticipantOrder) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> ms(80, 600);
  std::string body;
  std::vector<std::string> lines;
  for (int p = 0; p < 7; ++p)
    for (int u = 0; u < 5; ++u) {
      const int f = ms(rng), g = f + ms(rng) % 50, t = g + ms(rng) % 100;
      lines.push_back(row("d", "p" + std::to_string(p), u, "w" + std::to_string(u), std::to_string(f),
                          std::to_string(g), u == 3 && p % 2 ? "NA" : std::to_string(t)));
    }
  auto build = [&](const std::vector<std::string>& ls) {
    std::string s = kHeader;
    for (const auto& l : ls) s += l;
    return aggregate(parse_corpus_text(s, ColumnSchema::native())).at("d");
  };
  const auto ref = build(lines);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(lines.begin(), lines.end(), rng);
    const auto t = build(lines);
    EXPECT_EQ(t.aggregated, ref.aggregated);
    EXPECT_EQ(t.per_participant, ref.per_participant);
  }
}

TEST(Corpus, EosRowsBecomeWrapUpMeasures) {
  const auto text = std::string(kHeader) + row("d", "p1", 0, "a", "200", "200", "200") +
                    row("d", "p1", 1, "<eos>", "90", "90", "90") + row("d", "p2", 0, "a", "100", "100", "100") +
                    row("d", "p2", 1, "<eos>", "110", "110", "110");
  const auto t = aggregate(parse_corpus_text(text, ColumnSchema::native())).at("d");
  EXPECT_EQ(t.size(), 1u);
  ASSERT_TRUE(t.eos_aggregated.has_value());
  EXPECT_EQ(t.eos_aggregated->gd, 100.0);
}

TEST(Holdout, ProvoAndMecoSizes) {
  std::vector<std::string> ids;
  for (int i = 0; i < 55; ++i) ids.push_back("doc" + std::to_string(i));
  auto s = holdout_split(ids, 5, 42);
  EXPECT_EQ(s.tuning.size(), 5u);
  EXPECT_EQ(s.experiment.size(), 50u);
  ids.resize(12);
  s = holdout_split(ids, 2, 42);
  EXPECT_EQ(s.tuning.size(), 2u);
  EXPECT_EQ(s.experiment.size(), 10u);
  EXPECT_THROW(holdout_split(ids, 12, 1), rtprobe::Error);
}

TEST(Holdout, DisjointExhaustiveReproducible) {
  std::vector<std::string> ids;
  for (int i = 0; i < 30; ++i) ids.push_back("d" + std::to_string(i));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = holdout_split(ids, 4, seed);
    const auto b = holdout_split(ids, 4, seed);
    EXPECT_EQ(a.tuning, b.tuning);
    EXPECT_EQ(a.experiment, b.experiment);
    std::set<std::string> all(a.tuning.begin(), a.tuning.end());
    for (const auto& e : a.experiment) EXPECT_TRUE(all.insert(e).second);
    EXPECT_EQ(all.size(), ids.size());
  }
}

TEST(Alignment, SimpleAndMultiToken) {
  const auto sp = TokenizerMarkerRules::sentencepiece();
  auto m = align_tokens_to_units({"The", "cat"}, {"The", "\xe2\x96\x81" "cat"}, sp);
  EXPECT_EQ(m.spans, (std::vector<AlignmentMap::Span>{{0, 1}, {1, 2}}));
  m = align_tokens_to_units({"unbelievable"}, {"un", "believ", "able"}, sp);
  EXPECT_EQ(m.spans, (std::vector<AlignmentMap::Span>{{0, 3}}));
}

TEST(Alignment, TokenAcrossBoundaryIsError) {
  try {
    align_tokens_to_units({"The", "cat"}, {"Th", "e c", "at"}, TokenizerMarkerRules::sentencepiece());
    FAIL();
  } catch (const AlignmentError& e) {
    EXPECT_NE(std::string(e.what()).find("token spans two units"), std::string::npos);
  }
  EXPECT_THROW(align_tokens_to_units({"The", "cat"}, {"The", "ca"}, TokenizerMarkerRules::sentencepiece()),
               AlignmentError);
}

TEST(Alignment, ByteLevelTokens) {
  // GPT-2 style: "Ġ" encodes the leading space, "Ã©" encodes the bytes of "é".
  const auto m = align_tokens_to_units({"café", "au"}, {"caf", "\xc3\x83\xc2\xa9", "\xc4\xa0" "au"},
                                       TokenizerMarkerRules::gpt2());
  EXPECT_EQ(m.spans, (std::vector<AlignmentMap::Span>{{0, 2}, {2, 3}}));
}

TEST(Alignment, DetokenizeInvertsAlignment) {
  std::mt19937_64 rng(8);
  const auto sp = TokenizerMarkerRules::sentencepiece();
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> units, tokens;
    const int U = 1 + static_cast<int>(rng() % 8);
    for (int u = 0; u < U; ++u) {
      std::string w;
      const int len = 1 + static_cast<int>(rng() % 9);
      for (int k = 0; k < len; ++k) w += static_cast<char>('a' + rng() % 26);
      units.push_back(w);
      std::size_t pos = 0;
      bool first = true;
      while (pos < w.size()) {
        const std::size_t take = 1 + rng() % (w.size() - pos);
        tokens.push_back((first && u > 0 ? "\xe2\x96\x81" : "") + w.substr(pos, take));
        pos += take;
        first = false;
      }
    }
    const auto m = align_tokens_to_units(units, tokens, sp);
    EXPECT_EQ(detokenize(m, tokens, sp), units);
    EXPECT_EQ(alignment_from_unit_index(m.unit_index_of_token(), tokens.size()), m);
  }
}
