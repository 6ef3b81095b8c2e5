#include "rtprobe/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rtprobe/error.hpp"

namespace rtprobe::trace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kTensorFields[] = {"final_surprisal", "logitlens_surprisal",
                                         "hidden_states", "iv_distances"};

std::string file_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "doc%05zu", index);
  return buf;
}

std::string shape_string(const std::vector<std::uint64_t>& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ']';
  return os.str();
}

ojson manifest_to_json(const TraceManifest& m) {
  ojson j;
  j["format_version"] = m.format_version;
  j["model_name"] = m.model_name;
  j["num_layers"] = m.num_layers;
  j["hidden_dim"] = m.hidden_dim;
  j["vocab_size"] = m.vocab_size;
  j["iv_sample_count"] = m.iv_sample_count;
  j["layers_exported"] = m.layers_exported;
  j["hidden_dtype"] = dtype_name(m.hidden_dtype);
  j["documents"] = ojson::array();
  for (const auto& d : m.documents) {
    ojson e;
    e["doc_id"] = d.doc_id;
    e["token_count"] = d.token_count;
    e["unit_count"] = d.unit_count;
    e["files"] = ojson::object();
    for (const auto& [k, v] : d.files) e["files"][k] = v;
    j["documents"].push_back(std::move(e));
  }
  return j;
}

TraceManifest manifest_from_json(const ojson& j) {
  TraceManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    m.model_name = j.at("model_name").get<std::string>();
    m.num_layers = j.at("num_layers").get<std::uint64_t>();
    m.hidden_dim = j.at("hidden_dim").get<std::uint64_t>();
    m.vocab_size = j.at("vocab_size").get<std::uint64_t>();
    m.iv_sample_count = j.at("iv_sample_count").get<std::uint64_t>();
    m.layers_exported = j.at("layers_exported").get<std::vector<int>>();
    if (j.contains("hidden_dtype")) {
      m.hidden_dtype = dtype_from_name(j.at("hidden_dtype").get<std::string>());
    }
    for (const auto& e : j.at("documents")) {
      DocumentEntry d;
      d.doc_id = e.at("doc_id").get<std::string>();
      d.token_count = e.at("token_count").get<std::uint64_t>();
      d.unit_count = e.at("unit_count").get<std::uint64_t>();
      for (const auto& [k, v] : e.at("files").items()) d.files[k] = v.get<std::string>();
      m.documents.push_back(std::move(d));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed manifest: ") + ex.what());
  }
  return m;
}

std::vector<Finding> check_manifest(const TraceManifest& m) {
  std::vector<Finding> out;
  auto add = [&](std::string loc, std::string msg) {
    out.push_back({"", std::move(loc), std::move(msg)});
  };
  if (m.format_version != kFormatVersion) {
    add("format_version", "unsupported format_version " + std::to_string(m.format_version));
  }
  for (std::size_t i = 0; i < m.layers_exported.size(); ++i) {
    const int l = m.layers_exported[i];
    if (l < 1 || static_cast<std::uint64_t>(l) > m.num_layers) {
      add("layers_exported", "layer " + std::to_string(l) + " outside [1, num_layers]");
    }
    if (i > 0 && l <= m.layers_exported[i - 1]) {
      add("layers_exported", "layers_exported is not strictly increasing");
    }
  }
  std::set<std::string> seen;
  for (const auto& d : m.documents) {
    if (!seen.insert(d.doc_id).second) add("documents", "duplicate doc_id " + d.doc_id);
    if (!d.files.contains("tokens")) add(d.doc_id, "document entry lacks a tokens file");
    if (!d.files.contains("final_surprisal")) {
      add(d.doc_id, "document entry lacks a final_surprisal file");
    }
  }
  return out;
}

ojson read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open " + path.string());
  try {
    return ojson::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError("malformed JSON in " + path.filename().string() + ": " + ex.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io", "cannot open for writing: " + path.string());
  out << text;
  if (!out) throw Error("io", "write failed: " + path.string());
}

// Loads the files of one entry, recording decode failures as findings. Returns
// nullopt when any component could not be decoded.
std::optional<DocumentTrace> load_entry(const fs::path& root, const TraceManifest& m,
                                        const DocumentEntry& e, std::vector<Finding>& findings) {
  DocumentTrace doc;
  doc.doc_id = e.doc_id;
  doc.layers = m.layers_exported;
  bool ok = true;

  if (auto it = e.files.find("tokens"); it != e.files.end()) {
    try {
      const auto j = read_json_file(root / it->second);
      doc.tokens = j.at("tokens").get<std::vector<std::string>>();
      doc.unit_index_of_token = j.at("unit_index_of_token").get<std::vector<std::uint32_t>>();
      doc.has_eos_row = j.value("has_eos_row", false);
    } catch (const nlohmann::json::exception& ex) {
      findings.push_back({e.doc_id, it->second, std::string("malformed tokens file: ") + ex.what()});
      ok = false;
    } catch (const Error& ex) {
      findings.push_back({e.doc_id, it->second, ex.what()});
      ok = false;
    }
  } else {
    ok = false;
  }

  for (const char* field : kTensorFields) {
    auto it = e.files.find(field);
    if (it == e.files.end()) continue;
    const auto path = root / it->second;
    if (!fs::exists(path)) {
      findings.push_back({e.doc_id, it->second, "referenced tensor file missing"});
      ok = false;
      continue;
    }
    try {
      DType dtype{};
      Tensor t = read_blob(path, &dtype);
      const std::string name = field;
      if (dtype != DType::Float32 && name != "hidden_states") {
        findings.push_back({e.doc_id, it->second, name + " must be stored as float32"});
        ok = false;
        continue;
      }
      if (name == "final_surprisal") {
        if (t.rank() != 1) {
          findings.push_back({e.doc_id, it->second, "final_surprisal must be rank 1"});
          ok = false;
          continue;
        }
        doc.final_surprisal = std::move(t.values);
      } else if (name == "logitlens_surprisal") {
        doc.logitlens_surprisal = std::move(t);
      } else if (name == "hidden_states") {
        doc.hidden_states = std::move(t);
      } else {
        doc.iv_distances = std::move(t);
      }
    } catch (const Error& ex) {
      findings.push_back({e.doc_id, it->second, ex.what()});
      ok = false;
    }
  }
  if (!ok) return std::nullopt;

  if (doc.token_count() != e.token_count) {
    findings.push_back({e.doc_id, "tokens", "token count " + std::to_string(doc.token_count()) +
                                                " differs from manifest " +
                                                std::to_string(e.token_count)});
    return std::nullopt;
  }
  return doc;
}

}  // namespace

std::string dtype_name(DType dtype) {
  return dtype == DType::Float16 ? "float16" : "float32";
}

DType dtype_from_name(std::string_view name) {
  if (name == "float32") return DType::Float32;
  if (name == "float16") return DType::Float16;
  throw FormatError("unknown dtype name " + std::string(name));
}

std::size_t DocumentTrace::unit_count() const {
  const std::size_t n = text_token_count();
  if (n == 0 || unit_index_of_token.size() < n) return 0;
  return static_cast<std::size_t>(unit_index_of_token[n - 1]) + 1;
}

bool DocumentTrace::has_layer(int layer) const {
  return std::find(layers.begin(), layers.end(), layer) != layers.end();
}

std::size_t DocumentTrace::layer_slot(int layer) const {
  auto it = std::find(layers.begin(), layers.end(), layer);
  if (it == layers.end()) {
    throw DimensionError("layer " + std::to_string(layer) + " not exported for document " + doc_id);
  }
  return static_cast<std::size_t>(it - layers.begin());
}

std::vector<Finding> check_document(const TraceManifest& m, const DocumentTrace& doc) {
  std::vector<Finding> out;
  auto add = [&](std::string loc, std::string msg) {
    out.push_back({doc.doc_id, std::move(loc), std::move(msg)});
  };

  const std::size_t T = doc.token_count();
  if (T == 0 || doc.text_token_count() == 0) {
    add("tokens", "empty document");
    return out;
  }
  if (doc.unit_index_of_token.size() != T) {
    add("unit_index_of_token", "length differs from token count");
    return out;
  }

  const std::size_t text = doc.text_token_count();
  bool order_ok = doc.unit_index_of_token[0] == 0;
  bool contiguous = true;
  for (std::size_t i = 1; i < text; ++i) {
    const auto prev = doc.unit_index_of_token[i - 1];
    const auto cur = doc.unit_index_of_token[i];
    if (cur < prev) order_ok = false;
    if (cur > prev + 1) contiguous = false;
  }
  if (!order_ok) add("unit_index_of_token", "token/unit order violated");
  if (order_ok && !contiguous) add("unit_index_of_token", "unit indices are not surjective onto 0..U-1");
  const std::size_t U = doc.unit_count();
  if (doc.has_eos_row && doc.unit_index_of_token[T - 1] != U) {
    add("unit_index_of_token", "EOS row must carry unit index U");
  }

  const std::size_t L = m.layers_exported.size();
  auto expect_shape = [&](const char* name, const Tensor& t, std::vector<std::uint64_t> want) {
    if (t.dims != want) {
      add(name, std::string("shape mismatch: ") + shape_string(t.dims) + " expected " +
                    shape_string(want));
      return false;
    }
    return true;
  };

  if (doc.final_surprisal.size() != T) {
    add("final_surprisal", "length " + std::to_string(doc.final_surprisal.size()) +
                               " differs from token count " + std::to_string(T));
  } else if (!std::all_of(doc.final_surprisal.begin(), doc.final_surprisal.end(),
                          [](float v) { return std::isfinite(v) && v >= 0.0f; })) {
    add("final_surprisal", "surprisal entries must be finite and >= 0");
  }

  if (!doc.logitlens_surprisal.empty() &&
      expect_shape("logitlens_surprisal", doc.logitlens_surprisal, {T, L})) {
    const auto& v = doc.logitlens_surprisal.values;
    if (!std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x) && x >= 0.0f; })) {
      add("logitlens_surprisal", "surprisal entries must be finite and >= 0");
    }
  }
  if (!doc.hidden_states.empty() &&
      expect_shape("hidden_states", doc.hidden_states, {T, L, m.hidden_dim})) {
    const auto& v = doc.hidden_states.values;
    if (!std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); })) {
      add("hidden_states", "hidden states must be finite");
    }
  }
  if (!doc.iv_distances.empty() &&
      expect_shape("iv_distances", doc.iv_distances, {U, L, m.iv_sample_count})) {
    const auto& v = doc.iv_distances.values;
    if (!std::all_of(v.begin(), v.end(), [](float x) { return x >= 0.0f && x <= 2.0f; })) {
      add("iv_distances", "iv_distances entries outside [0, 2]");
    }
  }
  return out;
}

TraceManifest write_trace(TraceManifest manifest, const std::vector<DocumentTrace>& docs,
                          const fs::path& target) {
  manifest.documents.clear();
  manifest.format_version = kFormatVersion;
  if (auto f = check_manifest(manifest); !f.empty()) {
    throw ValidationError("manifest: " + f.front().message);
  }
  for (const auto& doc : docs) {
    if (doc.text_token_count() == 0) throw ValidationError("empty document: " + doc.doc_id);
    if (doc.layers != manifest.layers_exported) {
      throw DimensionError("shape mismatch: document " + doc.doc_id +
                           " layers differ from manifest layers_exported");
    }
    if (auto f = check_document(manifest, doc); !f.empty()) {
      throw DimensionError("document " + doc.doc_id + ": " + f.front().location + ": " +
                           f.front().message);
    }
  }

  std::error_code ec;
  fs::create_directories(target, ec);
  if (ec) throw Error("io", "cannot create " + target.string() + ": " + ec.message());

  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& doc = docs[i];
    const auto stem = file_stem(i);
    DocumentEntry entry;
    entry.doc_id = doc.doc_id;
    entry.token_count = doc.token_count();
    entry.unit_count = doc.unit_count();

    ojson tj;
    tj["doc_id"] = doc.doc_id;
    tj["has_eos_row"] = doc.has_eos_row;
    tj["tokens"] = doc.tokens;
    tj["unit_index_of_token"] = doc.unit_index_of_token;
    entry.files["tokens"] = stem + ".tokens.json";
    write_text_file(target / entry.files["tokens"], tj.dump(2) + "\n");

    entry.files["final_surprisal"] = stem + ".final_surprisal.gtrc";
    write_blob(target / entry.files["final_surprisal"],
               Tensor({doc.final_surprisal.size()}, doc.final_surprisal), DType::Float32);
    if (!doc.logitlens_surprisal.empty()) {
      entry.files["logitlens_surprisal"] = stem + ".logitlens_surprisal.gtrc";
      write_blob(target / entry.files["logitlens_surprisal"], doc.logitlens_surprisal,
                 DType::Float32);
    }
    if (!doc.hidden_states.empty()) {
      entry.files["hidden_states"] = stem + ".hidden_states.gtrc";
      write_blob(target / entry.files["hidden_states"], doc.hidden_states, manifest.hidden_dtype);
    }
    if (!doc.iv_distances.empty()) {
      entry.files["iv_distances"] = stem + ".iv_distances.gtrc";
      write_blob(target / entry.files["iv_distances"], doc.iv_distances, DType::Float32);
    }
    manifest.documents.push_back(std::move(entry));
  }

  write_text_file(target / kManifestFile, manifest_to_json(manifest).dump(2) + "\n");
  return manifest;
}

TraceReader::TraceReader(fs::path source) : root_(std::move(source)) {
  if (!fs::is_directory(root_)) throw Error("io", "trace directory not found: " + root_.string());
  manifest_ = manifest_from_json(read_json_file(root_ / kManifestFile));
  if (auto f = check_manifest(manifest_); !f.empty()) {
    throw ValidationError("manifest: " + f.front().message);
  }
}

std::optional<std::size_t> TraceReader::find(std::string_view doc_id) const {
  for (std::size_t i = 0; i < manifest_.documents.size(); ++i) {
    if (manifest_.documents[i].doc_id == doc_id) return i;
  }
  return std::nullopt;
}

DocumentTrace TraceReader::load(std::size_t index) const {
  if (index >= size()) throw DimensionError("document index out of range");
  const auto& entry = manifest_.documents[index];
  std::vector<Finding> findings;
  auto doc = load_entry(root_, manifest_, entry, findings);
  if (doc) {
    auto more = check_document(manifest_, *doc);
    if (doc->unit_count() != entry.unit_count) {
      more.push_back({entry.doc_id, "unit_count", "unit count differs from manifest"});
    }
    findings.insert(findings.end(), more.begin(), more.end());
  }
  if (!findings.empty()) {
    const auto& f = findings.front();
    throw ValidationError("document " + entry.doc_id + ": " + f.location + ": " + f.message);
  }
  return std::move(*doc);
}

DocumentTrace TraceReader::load(std::string_view doc_id) const {
  auto i = find(doc_id);
  if (!i) throw ValidationError("document not in trace: " + std::string(doc_id));
  return load(*i);
}

TraceReader read_trace(const fs::path& source) { return TraceReader(source); }

ValidationReport validate_trace(const fs::path& source) {
  ValidationReport report;
  if (!fs::is_directory(source)) {
    throw Error("io", "trace directory not found: " + source.string());
  }
  TraceManifest m;
  try {
    m = manifest_from_json(read_json_file(source / kManifestFile));
  } catch (const Error& ex) {
    report.findings.push_back({"", kManifestFile, ex.what()});
    return report;
  }
  report.findings = check_manifest(m);
  for (const auto& entry : m.documents) {
    auto doc = load_entry(source, m, entry, report.findings);
    if (!doc) continue;
    auto more = check_document(m, *doc);
    if (more.empty() && doc->unit_count() != entry.unit_count) {
      more.push_back({entry.doc_id, "unit_count", "unit count differs from manifest"});
    }
    report.findings.insert(report.findings.end(), more.begin(), more.end());
  }
  return report;
}

}  // namespace rtprobe::trace
