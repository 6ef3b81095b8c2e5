#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtprobe/corpus.hpp"
#include "rtprobe/toy_lm.hpp"

namespace rtprobe::synth {

/// Synthetic fixture: a toy LM trace plus per-participant reading times whose
/// signal comes from one predictor family (or none).
struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t num_docs = 24;
  std::size_t units_per_doc = 30;
  std::size_t participants = 8;
  std::size_t lexicon_size = 60;
  std::string language = "en";
  ToyLmConfig model;
  std::size_t iv_samples = 20;
  std::size_t iv_max_tokens = 3;
  bool wrapup = false;  // trace EOS row and end-of-passage reading times

  // "none", "surprisal", "logitlens", "infovalue" or "representation"
  std::string generating_family = "representation";
  std::optional<int> generating_layer = 3;
  double slope = 20.0;      // ms per nat (scalar families)
  double signal_sd = 20.0;  // ms (representation family)
  double snr = 5.0;         // var(signal) / var(noise in participant means); <= 0 uses noise_sd
  double noise_sd = 10.0;   // ms per reading
  double base_ms = 220.0;
  double length_ms = 6.0;
  double subject_sd = 15.0;
  double doc_sd = 0.0;
  double wrapup_ms = 0.0;

  static SynthConfig from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;
};

struct SynthMeta {
  std::string generating_family;
  std::optional<int> generating_layer;
  double noise_sd = 0.0;      // per reading
  double signal_var = 0.0;    // over units
  std::vector<double> representation_weights;
  std::vector<double> subject_effects;
  std::vector<double> doc_effects;
};

struct SynthOutput {
  std::filesystem::path corpus;
  std::filesystem::path trace;
  std::filesystem::path frequency;
  std::filesystem::path run_config;
  std::filesystem::path meta;
  SynthMeta info;
};

/// Writes corpus.tsv, trace/, frequency.tsv, run_config.json and
/// synth_meta.json under `dir`. Deterministic in the config.
SynthOutput generate(const SynthConfig& config, const std::filesystem::path& dir);

}  // namespace rtprobe::synth
