#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ranges>
#include <string>
#include <string_view>
#include <vector>

#include "rtprobe/tensor_blob.hpp"

namespace rtprobe::trace {

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";

struct DocumentEntry {
  std::string doc_id;
  std::uint64_t token_count = 0;
  std::uint64_t unit_count = 0;
  // field name ("tokens", "final_surprisal", ...) -> file name relative to the trace dir
  std::map<std::string, std::string> files;

  bool operator==(const DocumentEntry&) const = default;
};

struct TraceManifest {
  int format_version = kFormatVersion;
  std::string model_name;
  std::uint64_t num_layers = 0;
  std::uint64_t hidden_dim = 0;
  std::uint64_t vocab_size = 0;
  std::uint64_t iv_sample_count = 0;
  std::vector<int> layers_exported;
  DType hidden_dtype = DType::Float32;
  std::vector<DocumentEntry> documents;

  bool operator==(const TraceManifest&) const = default;
};

/// One document's LM export. Token rows include the optional trailing EOS row;
/// when `has_eos_row` is set that row's unit index equals `unit_count()`.
struct DocumentTrace {
  std::string doc_id;
  std::vector<std::string> tokens;
  std::vector<std::uint32_t> unit_index_of_token;
  std::vector<float> final_surprisal;  // [T], nats
  Tensor logitlens_surprisal;          // [T x layers], nats
  Tensor hidden_states;                // [T x layers x d]
  Tensor iv_distances;                 // [U x layers x N], cosine distance
  bool has_eos_row = false;
  std::vector<int> layers;             // layers_exported, copied from the manifest

  std::size_t token_count() const { return tokens.size(); }
  std::size_t text_token_count() const { return tokens.size() - (has_eos_row ? 1 : 0); }
  std::size_t unit_count() const;
  std::size_t hidden_dim() const { return hidden_states.empty() ? 0 : hidden_states.dims[2]; }
  std::size_t iv_sample_count() const { return iv_distances.empty() ? 0 : iv_distances.dims[2]; }

  /// Column of `layer` within the exported-layer axis; throws if not exported.
  std::size_t layer_slot(int layer) const;
  bool has_layer(int layer) const;

  bool operator==(const DocumentTrace&) const = default;
};

struct Finding {
  std::string doc_id;    // empty for manifest-level findings
  std::string location;  // file or field the finding refers to
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> findings;
  bool clean() const { return findings.empty(); }
};

/// Writes `docs` under `target`. The manifest's `documents` list is rebuilt
/// from `docs`; header fields (layers, dims, N) must agree with every doc.
/// Returns the manifest actually written.
TraceManifest write_trace(TraceManifest manifest, const std::vector<DocumentTrace>& docs,
                          const std::filesystem::path& target);

/// Read-only view over a trace directory. Documents load on demand and are
/// validated on every load. Safe for concurrent use.
class TraceReader {
 public:
  explicit TraceReader(std::filesystem::path source);

  const TraceManifest& manifest() const { return manifest_; }
  const std::filesystem::path& path() const { return root_; }
  std::size_t size() const { return manifest_.documents.size(); }

  DocumentTrace load(std::size_t index) const;
  DocumentTrace load(std::string_view doc_id) const;
  std::optional<std::size_t> find(std::string_view doc_id) const;

  /// Lazy view in manifest order.
  auto documents() const& {
    return std::views::iota(std::size_t{0}, size()) |
           std::views::transform([this](std::size_t i) { return load(i); });
  }
  // the view borrows the reader
  void documents() const&& = delete;

 private:
  std::filesystem::path root_;
  TraceManifest manifest_;
};

TraceReader read_trace(const std::filesystem::path& source);

/// Collects every invariant violation in the trace; only I/O failures on the
/// directory itself abort.
ValidationReport validate_trace(const std::filesystem::path& source);

/// In-memory invariant check for a single document against manifest header fields.
std::vector<Finding> check_document(const TraceManifest& manifest, const DocumentTrace& doc);

std::string dtype_name(DType dtype);
DType dtype_from_name(std::string_view name);

}  // namespace rtprobe::trace
