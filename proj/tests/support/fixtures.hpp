#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rtprobe/trace.hpp"

namespace fixture {

// Valid document with `tokens_per_unit[u]` tokens in unit u and random contents.
inline rtprobe::trace::DocumentTrace make_doc(const std::string& id, const std::vector<int>& tokens_per_unit,
                                              const std::vector<int>& layers, std::uint64_t d, std::uint64_t n,
                                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> surp(0.0f, 8.0f), hid(-2.0f, 2.0f), dist(0.0f, 2.0f);
  rtprobe::trace::DocumentTrace doc;
  doc.doc_id = id;
  doc.layers = layers;
  for (std::size_t u = 0; u < tokens_per_unit.size(); ++u) {
    for (int k = 0; k < tokens_per_unit[u]; ++k) {
      doc.tokens.push_back((k == 0 ? "\xe2\x96\x81" : "") + std::string("w") + std::to_string(u) + "_" +
                           std::to_string(k));
      doc.unit_index_of_token.push_back(static_cast<std::uint32_t>(u));
    }
  }
  const std::uint64_t T = doc.tokens.size(), L = layers.size(), U = tokens_per_unit.size();
  for (std::uint64_t t = 0; t < T; ++t) doc.final_surprisal.push_back(surp(rng));
  doc.logitlens_surprisal = rtprobe::trace::Tensor::zeros({T, L});
  for (auto& v : doc.logitlens_surprisal.values) v = surp(rng);
  doc.hidden_states = rtprobe::trace::Tensor::zeros({T, L, d});
  for (auto& v : doc.hidden_states.values) v = hid(rng);
  doc.iv_distances = rtprobe::trace::Tensor::zeros({U, L, n});
  for (auto& v : doc.iv_distances.values) v = dist(rng);
  return doc;
}

inline rtprobe::trace::TraceManifest make_manifest(const std::vector<int>& layers, std::uint64_t num_layers,
                                                   std::uint64_t d, std::uint64_t n) {
  rtprobe::trace::TraceManifest m;
  m.model_name = "fixture";
  m.num_layers = num_layers;
  m.hidden_dim = d;
  m.vocab_size = 64;
  m.iv_sample_count = n;
  m.layers_exported = layers;
  return m;
}

}  // namespace fixture
