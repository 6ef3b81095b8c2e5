#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rtprobe::corpus {

/// How tokenizer surface forms map back to text. Word-boundary markers are
/// dropped; byte-level tokens (GPT-2 style) are decoded to raw bytes first.
struct TokenizerMarkerRules {
  std::vector<std::string> boundary_markers{"▁"};  // SentencePiece "▁"
  bool byte_level = false;
  bool byte_fallback = true;  // "<0xHH>" tokens

  static TokenizerMarkerRules sentencepiece();
  static TokenizerMarkerRules gpt2();
  static TokenizerMarkerRules plain();
  static TokenizerMarkerRules preset(std::string_view name);
};

/// Half-open token interval per unit, in order, partitioning all tokens.
struct AlignmentMap {
  struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    bool operator==(const Span&) const = default;
  };
  std::vector<Span> spans;

  std::size_t unit_count() const { return spans.size(); }
  std::size_t token_count() const { return spans.empty() ? 0 : spans.back().end; }
  std::vector<std::uint32_t> unit_index_of_token() const;

  bool operator==(const AlignmentMap&) const = default;
};

/// Surface text of a token after marker normalization, whitespace removed.
std::string normalize_token(std::string_view token, const TokenizerMarkerRules& rules);

AlignmentMap align_tokens_to_units(const std::vector<std::string>& unit_texts,
                                   const std::vector<std::string>& tokens,
                                   const TokenizerMarkerRules& rules);

/// Builds the map directly from a per-token unit index (as stored in traces).
AlignmentMap alignment_from_unit_index(const std::vector<std::uint32_t>& unit_index_of_token,
                                       std::size_t token_count);

/// Concatenated normalized text of each span; inverse of alignment.
std::vector<std::string> detokenize(const AlignmentMap& align, const std::vector<std::string>& tokens,
                                    const TokenizerMarkerRules& rules);

}  // namespace rtprobe::corpus
