#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "rtprobe/error.hpp"
#include "rtprobe/tensor_blob.hpp"
#include "rtprobe/trace.hpp"

namespace fs = std::filesystem;
using namespace rtprobe::trace;

namespace {

// Independent binary16 decoder: value = (-1)^s * 2^(e-15) * (1 + m/1024), subnormals 2^-14 * m/1024.
double half_bits_to_double(std::uint16_t h) {
  const int s = h >> 15, e = (h >> 10) & 0x1f, m = h & 0x3ff;
  double v;
  if (e == 0) v = std::ldexp(m / 1024.0, -14);
  else if (e == 31) v = m ? NAN : INFINITY;
  else v = std::ldexp(1.0 + m / 1024.0, e - 15);
  return s ? -v : v;
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(TensorBlob, HeaderLayoutIsLittleEndian) {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto bytes = encode_blob(t, DType::Float32);
  ASSERT_EQ(bytes.size(), 4u + 4 + 1 + 1 + 2 * 8 + 6 * 4);
  EXPECT_EQ(std::memcmp(bytes.data(), "GTRC", 4), 0);
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
  EXPECT_EQ(bytes[8], 0);
  EXPECT_EQ(bytes[9], 2);
  EXPECT_EQ(bytes[10], 2);
  EXPECT_EQ(bytes[18], 3);
  float first;
  std::memcpy(&first, bytes.data() + 26, 4);
  EXPECT_EQ(first, 1.0f);
}

TEST(TensorBlob, Float32RoundTripIsBitExact) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> g(0.0f, 100.0f);
  Tensor t = Tensor::zeros({4, 5, 3});
  for (auto& v : t.values) v = g(rng);
  DType dt{};
  const Tensor back = decode_blob(encode_blob(t, DType::Float32), &dt);
  EXPECT_EQ(dt, DType::Float32);
  ASSERT_EQ(back.dims, t.dims);
  EXPECT_EQ(std::memcmp(back.values.data(), t.values.data(), t.values.size() * 4), 0);
}

TEST(TensorBlob, Float16MatchesIndependentConversion) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-60000.0f, 60000.0f), small(-1.0f, 1.0f);
  Tensor t = Tensor::zeros({400});
  for (std::size_t i = 0; i < t.values.size(); ++i) t.values[i] = i % 2 ? u(rng) : small(rng);
  const auto bytes = encode_blob(t, DType::Float16);
  const Tensor back = decode_blob(bytes);
  const std::size_t header = 4 + 4 + 1 + 1 + 8;
  ASSERT_EQ(bytes.size(), header + 400 * 2);
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    const std::uint16_t bits = static_cast<std::uint16_t>(bytes[header + 2 * i] | (bytes[header + 2 * i + 1] << 8));
    const double independent = half_bits_to_double(bits);
    EXPECT_EQ(static_cast<double>(back.values[i]), independent);
    const double x = t.values[i];
    if (std::abs(x) >= std::ldexp(1.0, -14)) {
      EXPECT_LE(std::abs(independent - x), std::ldexp(1.0, -10) * std::abs(x)) << x;
    } else {
      EXPECT_LE(std::abs(independent - x), std::ldexp(1.0, -25));
    }
  }
}

TEST(TensorBlob, HalfConversionRoundsToNearestEven) {
  // 1 + 2^-11 lies halfway between 1 and 1 + 2^-10; ties go to the even mantissa.
  EXPECT_EQ(float_to_half(1.0f + std::ldexp(1.0f, -11)), 0x3c00);
  EXPECT_EQ(float_to_half(1.0f + 3 * std::ldexp(1.0f, -11)), 0x3c02);
  EXPECT_EQ(float_to_half(65504.0f), 0x7bff);
  EXPECT_EQ(float_to_half(1e6f), 0x7c00);
  EXPECT_EQ(half_to_float(0x0001), std::ldexp(1.0f, -24));
}

TEST(TensorBlob, RejectsBadMagic) {
  auto bytes = encode_blob(Tensor({1}, {1.0f}), DType::Float32);
  bytes[0] = 'X';
  try {
    decode_blob(bytes);
    FAIL();
  } catch (const rtprobe::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
  }
}

TEST(TensorBlob, RejectsUnsupportedVersionAndShortPayload) {
  auto bytes = encode_blob(Tensor({2}, {1.0f, 2.0f}), DType::Float32);
  auto v2 = bytes;
  v2[4] = 2;
  EXPECT_THROW(decode_blob(v2), rtprobe::FormatError);
  bytes.pop_back();
  EXPECT_THROW(decode_blob(bytes), rtprobe::FormatError);
}

TEST(Trace, WriteThenReadIsIdentical) {
  const auto dir = oracle::temp_dir("trace_rt");
  const std::vector<int> layers{1, 3};
  const auto doc = fixture::make_doc("d0", {1, 2, 3}, layers, 4, 5, 11);
  write_trace(fixture::make_manifest(layers, 3, 4, 5), {doc}, dir);
  const auto reader = read_trace(dir);
  ASSERT_EQ(reader.size(), 1u);
  EXPECT_EQ(reader.load(0), doc);
  EXPECT_EQ(reader.load("d0"), doc);
  EXPECT_EQ(reader.manifest().documents[0].unit_count, 3u);
  EXPECT_TRUE(validate_trace(dir).clean());
}

TEST(Trace, EosRowRoundTrips) {
  const auto dir = oracle::temp_dir("trace_eos");
  auto doc = fixture::make_doc("d0", {2, 1}, {1}, 2, 3, 2);
  doc.tokens.push_back("</s>");
  doc.unit_index_of_token.push_back(2);
  doc.final_surprisal.push_back(1.5f);
  doc.has_eos_row = true;
  doc.logitlens_surprisal = Tensor::zeros({4, 1});
  doc.hidden_states = Tensor::zeros({4, 1, 2});
  write_trace(fixture::make_manifest({1}, 2, 2, 3), {doc}, dir);
  const auto back = read_trace(dir).load(0);
  EXPECT_EQ(back, doc);
  EXPECT_EQ(back.unit_count(), 2u);
}

TEST(Trace, Float16HiddenStatesWithinHalfPrecision) {
  const auto dir = oracle::temp_dir("trace_f16");
  const auto doc = fixture::make_doc("d0", {2, 2}, {2}, 6, 2, 4);
  auto m = fixture::make_manifest({2}, 2, 6, 2);
  m.hidden_dtype = DType::Float16;
  write_trace(m, {doc}, dir);
  const auto back = read_trace(dir).load(0);
  EXPECT_EQ(back.final_surprisal, doc.final_surprisal);
  EXPECT_EQ(back.iv_distances, doc.iv_distances);
  for (std::size_t i = 0; i < doc.hidden_states.values.size(); ++i) {
    const double x = doc.hidden_states.values[i];
    EXPECT_LE(std::abs(back.hidden_states.values[i] - x), std::ldexp(1.0, -10) * std::abs(x) + 1e-7);
  }
}

TEST(Trace, EmptyDocumentRejected) {
  auto doc = fixture::make_doc("empty", {}, {1}, 2, 2, 1);
  try {
    write_trace(fixture::make_manifest({1}, 1, 2, 2), {doc}, oracle::temp_dir("trace_empty"));
    FAIL();
  } catch (const rtprobe::Error& e) {
    EXPECT_NE(std::string(e.what()).find("empty document"), std::string::npos);
  }
}

TEST(Trace, ShapeMismatchRejectedAtWrite) {
  auto doc = fixture::make_doc("d", {1, 1}, {1}, 3, 2, 1);
  EXPECT_THROW(write_trace(fixture::make_manifest({1}, 1, 4, 2), {doc}, oracle::temp_dir("trace_shape")),
               rtprobe::Error);
}

TEST(Trace, LayersMustBeStrictlyIncreasingWithinRange) {
  const auto doc = fixture::make_doc("d", {1}, {2, 1}, 2, 1, 1);
  EXPECT_THROW(write_trace(fixture::make_manifest({2, 1}, 2, 2, 1), {doc}, oracle::temp_dir("trace_l1")),
               rtprobe::Error);
  const auto doc2 = fixture::make_doc("d", {1}, {3}, 2, 1, 1);
  EXPECT_THROW(write_trace(fixture::make_manifest({3}, 2, 2, 1), {doc2}, oracle::temp_dir("trace_l2")),
               rtprobe::Error);
}

TEST(Trace, OutOfRangeDistanceIsInvariantViolation) {
  const auto dir = oracle::temp_dir("trace_iv");
  const auto doc = fixture::make_doc("d0", {1, 1}, {1}, 2, 2, 9);
  const auto m = write_trace(fixture::make_manifest({1}, 1, 2, 2), {doc}, dir);
  Tensor iv = doc.iv_distances;
  iv.values[1] = 2.5f;
  write_blob(dir / m.documents[0].files.at("iv_distances"), iv, DType::Float32);
  EXPECT_THROW(read_trace(dir).load(0), rtprobe::ValidationError);
  const auto report = validate_trace(dir);
  ASSERT_EQ(report.findings.size(), 1u);
  EXPECT_EQ(report.findings[0].doc_id, "d0");
  EXPECT_EQ(report.findings[0].location, "iv_distances");
}

TEST(Trace, TwoCorruptedBlobsGiveTwoFindings) {
  const auto dir = oracle::temp_dir("trace_corrupt");
  const std::vector<int> layers{1, 2};
  const auto m = write_trace(fixture::make_manifest(layers, 2, 3, 2),
                             {fixture::make_doc("a", {1, 2}, layers, 3, 2, 1),
                              fixture::make_doc("b", {2, 1}, layers, 3, 2, 2)},
                             dir);
  ASSERT_TRUE(validate_trace(dir).clean());
  auto hs = dir / m.documents[0].files.at("hidden_states");
  auto bytes = slurp(hs);
  bytes[1] = 'X';
  spit(hs, bytes);
  auto fs_path = dir / m.documents[1].files.at("final_surprisal");
  bytes = slurp(fs_path);
  bytes.resize(bytes.size() - 3);
  spit(fs_path, bytes);
  const auto report = validate_trace(dir);
  ASSERT_EQ(report.findings.size(), 2u);
  EXPECT_EQ(report.findings[0].doc_id, "a");
  EXPECT_NE(report.findings[0].message.find("bad magic"), std::string::npos);
  EXPECT_EQ(report.findings[1].doc_id, "b");
}

TEST(Trace, DecreasingUnitIndexReported) {
  const auto dir = oracle::temp_dir("trace_order");
  const auto m = write_trace(fixture::make_manifest({1}, 1, 2, 1), {fixture::make_doc("d", {2, 2}, {1}, 2, 1, 3)},
                             dir);
  const auto tok_path = dir / m.documents[0].files.at("tokens");
  nlohmann::json j;
  std::ifstream(tok_path) >> j;
  j["unit_index_of_token"] = {0, 1, 0, 1};
  std::ofstream(tok_path) << j.dump();
  const auto report = validate_trace(dir);
  ASSERT_FALSE(report.clean());
  bool found = false;
  for (const auto& f : report.findings) found |= f.message == "token/unit order violated";
  EXPECT_TRUE(found);
}

TEST(Trace, ValidatePassesIffEveryDocumentLoads) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 12; ++trial) {
    const auto dir = oracle::temp_dir("trace_iff");
    std::vector<DocumentTrace> docs;
    for (int k = 0; k < 3; ++k) docs.push_back(fixture::make_doc("d" + std::to_string(k), {1, 2}, {1}, 2, 2, rng()));
    const auto m = write_trace(fixture::make_manifest({1}, 1, 2, 2), docs, dir);
    if (trial % 2) {
      const auto& files = m.documents[trial % 3].files;
      const char* field = trial % 4 == 1 ? "final_surprisal" : "iv_distances";
      auto bytes = slurp(dir / files.at(field));
      bytes[0] = 'Q';
      spit(dir / files.at(field), bytes);
    }
    const bool clean = validate_trace(dir).clean();
    bool loads = true;
    const auto reader = read_trace(dir);
    for (std::size_t i = 0; i < reader.size(); ++i) {
      try {
        reader.load(i);
      } catch (const rtprobe::Error&) {
        loads = false;
      }
    }
    EXPECT_EQ(clean, loads);
    EXPECT_EQ(clean, trial % 2 == 0);
  }
}

TEST(Trace, LazyViewKeepsManifestOrder) {
  const auto dir = oracle::temp_dir("trace_lazy");
  std::vector<DocumentTrace> docs;
  for (const char* id : {"zeta", "alpha", "mid"}) docs.push_back(fixture::make_doc(id, {1}, {1}, 2, 1, 5));
  write_trace(fixture::make_manifest({1}, 1, 2, 1), docs, dir);
  std::vector<std::string> seen;
  const auto reader = read_trace(dir);
  for (const auto& d : reader.documents()) seen.push_back(d.doc_id);
  EXPECT_EQ(seen, (std::vector<std::string>{"zeta", "alpha", "mid"}));
}

TEST(Trace, MissingDirectoryIsIoError) {
  EXPECT_THROW(validate_trace("/nonexistent/trace/dir"), rtprobe::Error);
  EXPECT_THROW(read_trace("/nonexistent/trace/dir"), rtprobe::Error);
}

#ifndef RTPROBE_FIXTURE_DIR
#error "RTPROBE_FIXTURE_DIR must be defined"
#endif

TEST(TraceFixture, PinnedBytesAndManifest) {
  const fs::path root = RTPROBE_FIXTURE_DIR;
  const fs::path trace_dir = root / "tiny_trace";
  std::ifstream sums(root / "tiny_trace.sha256");
  std::string digest, name;
  int count = 0;
  while (sums >> digest >> name) {
    EXPECT_EQ(oracle::sha256_file(trace_dir / name), digest) << name;
    ++count;
  }
  EXPECT_GE(count, 5);

  nlohmann::json expect;
  std::ifstream(root / "tiny_trace.expected.json") >> expect;
  const auto reader = read_trace(trace_dir);
  const auto& m = reader.manifest();
  EXPECT_EQ(m.model_name, expect["model_name"].get<std::string>());
  EXPECT_EQ(m.num_layers, expect["num_layers"].get<std::uint64_t>());
  EXPECT_EQ(m.hidden_dim, expect["hidden_dim"].get<std::uint64_t>());
  EXPECT_EQ(m.iv_sample_count, expect["iv_sample_count"].get<std::uint64_t>());
  EXPECT_EQ(m.layers_exported, expect["layers_exported"].get<std::vector<int>>());
  ASSERT_EQ(m.documents.size(), expect["documents"].size());
  for (std::size_t i = 0; i < m.documents.size(); ++i) {
    EXPECT_EQ(m.documents[i].doc_id, expect["documents"][i]["doc_id"].get<std::string>());
    EXPECT_EQ(m.documents[i].token_count, expect["documents"][i]["token_count"].get<std::uint64_t>());
    EXPECT_EQ(m.documents[i].unit_count, expect["documents"][i]["unit_count"].get<std::uint64_t>());
  }
  EXPECT_TRUE(validate_trace(trace_dir).clean());
}

TEST(TraceFixture, RewriteIsByteIdentical) {
  const fs::path src = fs::path(RTPROBE_FIXTURE_DIR) / "tiny_trace";
  const auto reader = read_trace(src);
  std::vector<DocumentTrace> docs;
  for (const auto& d : reader.documents()) docs.push_back(d);
  const auto out = oracle::temp_dir("trace_rewrite");
  write_trace(reader.manifest(), docs, out);
  for (const auto& entry : fs::directory_iterator(src)) {
    EXPECT_EQ(oracle::sha256_file(entry.path()), oracle::sha256_file(out / entry.path().filename()))
        << entry.path().filename();
  }
}
