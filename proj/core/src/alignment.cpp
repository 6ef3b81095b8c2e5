#include "rtprobe/alignment.hpp"

#include <array>
#include <cstdint>
#include <optional>

#include "rtprobe/error.hpp"

namespace rtprobe::corpus {

TokenizerMarkerRules TokenizerMarkerRules::sentencepiece() { return TokenizerMarkerRules{}; }

TokenizerMarkerRules TokenizerMarkerRules::gpt2() {
  TokenizerMarkerRules r;
  r.boundary_markers.clear();
  r.byte_level = true;
  r.byte_fallback = false;
  return r;
}

TokenizerMarkerRules TokenizerMarkerRules::plain() {
  TokenizerMarkerRules r;
  r.boundary_markers.clear();
  r.byte_fallback = false;
  return r;
}

TokenizerMarkerRules TokenizerMarkerRules::preset(std::string_view name) {
  if (name == "sentencepiece") return sentencepiece();
  if (name == "gpt2" || name == "bytelevel") return gpt2();
  if (name == "plain") return plain();
  throw ConfigError("unknown tokenizer marker preset: " + std::string(name));
}

namespace {

// Inverse of the GPT-2 byte -> printable-codepoint table.
const std::array<int, 512>& byte_decoder() {
  static const std::array<int, 512> table = [] {
    std::array<int, 512> t{};
    t.fill(-1);
    auto printable = [](int b) {
      return (b >= 33 && b <= 126) || (b >= 161 && b <= 172) || (b >= 174 && b <= 255);
    };
    int n = 0;
    for (int b = 0; b < 256; ++b) {
      if (printable(b)) {
        t[b] = b;
      } else {
        t[256 + n] = b;
        ++n;
      }
    }
    return t;
  }();
  return table;
}

// Decodes one UTF-8 codepoint starting at s[i]; advances i.
std::optional<std::uint32_t> next_codepoint(std::string_view s, std::size_t& i) {
  const auto c = static_cast<unsigned char>(s[i]);
  int len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xe ? 3 : (c >> 3) == 0x1e ? 4 : 0;
  if (len == 0 || i + len > s.size()) {
    ++i;
    return std::nullopt;
  }
  std::uint32_t cp = len == 1 ? c : len == 2 ? (c & 0x1f) : len == 3 ? (c & 0x0f) : (c & 0x07);
  for (int k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3f);
  i += len;
  return cp;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

std::string strip_space(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (!is_space(c)) out.push_back(c);
  }
  return out;
}

}  // namespace

std::string normalize_token(std::string_view token, const TokenizerMarkerRules& rules) {
  std::string raw;
  if (rules.byte_fallback && token.size() == 6 && token.substr(0, 3) == "<0x" && token[5] == '>') {
    raw.push_back(static_cast<char>(std::stoi(std::string(token.substr(3, 2)), nullptr, 16)));
  } else if (rules.byte_level) {
    const auto& dec = byte_decoder();
    std::size_t i = 0;
    while (i < token.size()) {
      const std::size_t start = i;
      auto cp = next_codepoint(token, i);
      if (cp && *cp < dec.size() && dec[*cp] >= 0) {
        raw.push_back(static_cast<char>(dec[*cp]));
      } else {
        raw.append(token.substr(start, i - start));
      }
    }
  } else {
    raw.assign(token);
  }
  for (const auto& marker : rules.boundary_markers) {
    if (marker.empty()) continue;
    std::size_t pos;
    while ((pos = raw.find(marker)) != std::string::npos) raw.replace(pos, marker.size(), " ");
  }
  return strip_space(raw);
}

std::vector<std::uint32_t> AlignmentMap::unit_index_of_token() const {
  std::vector<std::uint32_t> out(token_count());
  for (std::size_t u = 0; u < spans.size(); ++u) {
    for (std::size_t t = spans[u].begin; t < spans[u].end; ++t) out[t] = static_cast<std::uint32_t>(u);
  }
  return out;
}

AlignmentMap align_tokens_to_units(const std::vector<std::string>& unit_texts,
                                   const std::vector<std::string>& tokens,
                                   const TokenizerMarkerRules& rules) {
  std::string target;
  std::vector<std::size_t> unit_end;
  for (const auto& u : unit_texts) {
    auto s = strip_space(u);
    if (s.empty()) throw AlignmentError("empty unit text cannot be aligned");
    target += s;
    unit_end.push_back(target.size());
  }

  std::vector<std::size_t> unit_of(tokens.size());
  std::vector<std::size_t> pending;  // marker-only tokens waiting for their unit
  std::size_t cursor = 0;
  std::size_t unit = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto s = normalize_token(tokens[i], rules);
    if (s.empty()) {
      pending.push_back(i);
      continue;
    }
    if (cursor + s.size() > target.size()) {
      throw AlignmentError("length mismatch: tokens extend past the end of the unit text at token " +
                           std::to_string(i) + " '" + tokens[i] + "'");
    }
    if (target.compare(cursor, s.size(), s) != 0) {
      throw AlignmentError("token " + std::to_string(i) + " '" + tokens[i] +
                           "' does not match the unit text at character " + std::to_string(cursor));
    }
    while (unit_end[unit] <= cursor) ++unit;
    if (cursor + s.size() > unit_end[unit]) {
      throw AlignmentError("token spans two units: token " + std::to_string(i) + " '" + tokens[i] +
                           "' crosses the boundary after unit " + std::to_string(unit) + " '" +
                           unit_texts[unit] + "' (the tokenizer must respect unit boundaries)");
    }
    for (auto p : pending) unit_of[p] = unit;
    pending.clear();
    unit_of[i] = unit;
    cursor += s.size();
  }
  if (cursor != target.size()) {
    throw AlignmentError("length mismatch: tokens cover " + std::to_string(cursor) + " of " +
                         std::to_string(target.size()) + " characters");
  }
  const std::size_t last = unit_texts.empty() ? 0 : unit_texts.size() - 1;
  for (auto p : pending) unit_of[p] = last;

  AlignmentMap map;
  map.spans.resize(unit_texts.size());
  for (std::size_t u = 0; u < unit_texts.size(); ++u) map.spans[u] = {tokens.size(), 0};
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto& sp = map.spans[unit_of[i]];
    sp.begin = std::min(sp.begin, i);
    sp.end = std::max(sp.end, i + 1);
  }
  return map;
}

AlignmentMap alignment_from_unit_index(const std::vector<std::uint32_t>& unit_index_of_token,
                                       std::size_t token_count) {
  AlignmentMap map;
  for (std::size_t i = 0; i < token_count; ++i) {
    const std::size_t u = unit_index_of_token.at(i);
    if (u == map.spans.size()) {
      map.spans.push_back({i, i + 1});
    } else if (u + 1 == map.spans.size() && map.spans.back().end == i) {
      map.spans.back().end = i + 1;
    } else {
      throw AlignmentError("token/unit order violated at token " + std::to_string(i));
    }
  }
  return map;
}

std::vector<std::string> detokenize(const AlignmentMap& align, const std::vector<std::string>& tokens,
                                    const TokenizerMarkerRules& rules) {
  std::vector<std::string> out;
  for (const auto& sp : align.spans) {
    std::string s;
    for (std::size_t t = sp.begin; t < sp.end; ++t) s += normalize_token(tokens.at(t), rules);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace rtprobe::corpus
