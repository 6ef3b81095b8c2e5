#include "rtprobe/synth.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "rtprobe/alignment.hpp"
#include "rtprobe/error.hpp"
#include "rtprobe/predictors.hpp"
#include "rtprobe/report.hpp"
#include "rtprobe/trace.hpp"

namespace rtprobe::synth {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
  return std::mt19937_64(seq);
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

struct Lexicon {
  std::vector<std::vector<std::size_t>> syllables;  // per word
  std::vector<std::string> text;
  std::vector<std::vector<double>> transition;      // cumulative rows
};

Lexicon make_lexicon(const ToyLm& lm, std::size_t size, std::mt19937_64& rng) {
  const std::size_t S = lm.syllables().size();
  std::size_t capacity = 0;
  for (std::size_t len = 1, pow = S; len <= 3; ++len, pow *= S) capacity += pow;
  if (size < 2 || size > capacity) throw ConfigError("lexicon size out of range");
  Lexicon lex;
  std::set<std::string> seen;
  std::uniform_int_distribution<std::size_t> syl(0, S - 1);
  std::discrete_distribution<int> len_dist{0.0, 0.4, 0.4, 0.2};
  while (lex.text.size() < size) {
    const int len = len_dist(rng);
    std::vector<std::size_t> w;
    std::string s;
    for (int i = 0; i < len; ++i) {
      w.push_back(syl(rng));
      s += lm.syllables()[w.back()];
    }
    if (!seen.insert(s).second) continue;
    lex.syllables.push_back(std::move(w));
    lex.text.push_back(std::move(s));
  }
  std::gamma_distribution<double> gamma(0.3, 1.0);
  for (std::size_t i = 0; i < size; ++i) {
    std::vector<double> row(size);
    double acc = 0.0;
    for (auto& v : row) {
      acc += gamma(rng) + 1e-12;
      v = acc;
    }
    for (auto& v : row) v /= acc;
    lex.transition.push_back(std::move(row));
  }
  return lex;
}

std::size_t next_word(const Lexicon& lex, std::size_t prev, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto& row = lex.transition[prev];
  const auto it = std::upper_bound(row.begin(), row.end(), unif(rng));
  return std::min<std::size_t>(static_cast<std::size_t>(it - row.begin()), row.size() - 1);
}

std::size_t char_length(const std::string& w) {
  return static_cast<std::size_t>(
      std::count_if(w.begin(), w.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xc0) != 0x80; }));
}

}  // namespace

SynthConfig SynthConfig::from_json(const json& j) {
  SynthConfig c;
  try {
    read_opt(j, "seed", c.seed);
    read_opt(j, "num_docs", c.num_docs);
    read_opt(j, "units_per_doc", c.units_per_doc);
    read_opt(j, "participants", c.participants);
    read_opt(j, "lexicon_size", c.lexicon_size);
    read_opt(j, "language", c.language);
    read_opt(j, "iv_samples", c.iv_samples);
    read_opt(j, "iv_max_tokens", c.iv_max_tokens);
    read_opt(j, "wrapup", c.wrapup);
    read_opt(j, "generating_family", c.generating_family);
    if (j.contains("generating_layer"))
      c.generating_layer = j.at("generating_layer").is_null() ? std::nullopt
                                                              : std::optional<int>(j.at("generating_layer").get<int>());
    read_opt(j, "slope", c.slope);
    read_opt(j, "signal_sd", c.signal_sd);
    read_opt(j, "snr", c.snr);
    read_opt(j, "noise_sd", c.noise_sd);
    read_opt(j, "base_ms", c.base_ms);
    read_opt(j, "length_ms", c.length_ms);
    read_opt(j, "subject_sd", c.subject_sd);
    read_opt(j, "doc_sd", c.doc_sd);
    read_opt(j, "wrapup_ms", c.wrapup_ms);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      read_opt(m, "num_layers", c.model.num_layers);
      read_opt(m, "hidden_dim", c.model.hidden_dim);
      read_opt(m, "syllables", c.model.syllables);
      read_opt(m, "gain", c.model.gain);
      read_opt(m, "logit_scale", c.model.logit_scale);
      read_opt(m, "final_transform", c.model.final_transform);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad synth config: ") + e.what());
  }
  return c;
}

ordered_json SynthConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["num_docs"] = num_docs;
  j["units_per_doc"] = units_per_doc;
  j["participants"] = participants;
  j["lexicon_size"] = lexicon_size;
  j["language"] = language;
  j["model"] = {{"num_layers", model.num_layers},   {"hidden_dim", model.hidden_dim},
                {"syllables", model.syllables},     {"gain", model.gain},
                {"logit_scale", model.logit_scale}, {"final_transform", model.final_transform}};
  j["iv_samples"] = iv_samples;
  j["iv_max_tokens"] = iv_max_tokens;
  j["wrapup"] = wrapup;
  j["generating_family"] = generating_family;
  j["generating_layer"] = generating_layer ? ordered_json(*generating_layer) : ordered_json(nullptr);
  j["slope"] = slope;
  j["signal_sd"] = signal_sd;
  j["snr"] = snr;
  j["noise_sd"] = noise_sd;
  j["base_ms"] = base_ms;
  j["length_ms"] = length_ms;
  j["subject_sd"] = subject_sd;
  j["doc_sd"] = doc_sd;
  j["wrapup_ms"] = wrapup_ms;
  return j;
}

SynthOutput generate(const SynthConfig& cfg, const std::filesystem::path& dir) {
  const std::string& fam = cfg.generating_family;
  const bool layered = fam == "logitlens" || fam == "infovalue" || fam == "representation";
  if (fam != "none" && fam != "surprisal" && !layered)
    throw ConfigError("unknown generating family: " + fam);
  if (layered && (!cfg.generating_layer || *cfg.generating_layer < 1 ||
                  static_cast<std::size_t>(*cfg.generating_layer) > cfg.model.num_layers))
    throw ConfigError("generating layer out of range for family " + fam);
  if (cfg.num_docs < 2 || cfg.units_per_doc < 2 || cfg.participants < 1)
    throw ConfigError("synthetic corpus needs >= 2 documents, >= 2 units and >= 1 participant");

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("io", "cannot create directory: " + dir.string());

  const ToyLm lm(cfg.model, cfg.seed);
  auto text_rng = stream(cfg.seed, 1);
  auto iv_rng = stream(cfg.seed, 2);
  auto rt_rng = stream(cfg.seed, 3);
  const Lexicon lex = make_lexicon(lm, cfg.lexicon_size, text_rng);

  // Documents from the word bigram chain.
  std::vector<std::vector<std::size_t>> words(cfg.num_docs);
  std::uniform_int_distribution<std::size_t> first(0, lex.text.size() - 1);
  for (auto& doc : words) {
    doc.push_back(first(text_rng));
    while (doc.size() < cfg.units_per_doc) doc.push_back(next_word(lex, doc.back(), text_rng));
  }
  predictors::FrequencyTable freq;
  {
    std::size_t w = first(text_rng);
    for (int i = 0; i < 20000; ++i) {
      freq.add(lex.text[w], 1.0);
      w = next_word(lex, w, text_rng);
    }
  }

  ExportOptions eo;
  eo.iv_samples = cfg.iv_samples;
  eo.iv_max_tokens = cfg.iv_max_tokens;
  eo.append_eos = cfg.wrapup;
  std::vector<trace::DocumentTrace> docs;
  std::vector<std::string> doc_ids;
  for (std::size_t d = 0; d < cfg.num_docs; ++d) {
    char id[32];
    std::snprintf(id, sizeof id, "d%03zu", d);
    doc_ids.emplace_back(id);
    std::vector<std::vector<std::size_t>> units;
    for (auto w : words[d]) units.push_back(lm.spell(lex.syllables[w]));
    docs.push_back(export_document(lm, doc_ids.back(), units, eo, iv_rng));
  }

  // Unit-level generating predictor, from the exported (float) trace values.
  std::vector<Eigen::VectorXd> raw(cfg.num_docs);
  std::vector<double> raw_eos(cfg.num_docs, 0.0);
  Eigen::VectorXd weights;
  if (fam == "representation") {
    weights.resize(static_cast<Eigen::Index>(cfg.model.hidden_dim));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& w : weights) w = normal(rt_rng);
  }
  for (std::size_t d = 0; d < cfg.num_docs; ++d) {
    const auto& doc = docs[d];
    const auto align = corpus::alignment_from_unit_index(doc.unit_index_of_token, doc.text_token_count());
    const std::size_t eos_row = doc.token_count() - 1;
    if (fam == "none") {
      raw[d] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg.units_per_doc));
    } else if (fam == "surprisal") {
      raw[d] = predictors::unit_surprisal(doc, align);
      if (cfg.wrapup) raw_eos[d] = doc.final_surprisal[eos_row];
    } else if (fam == "logitlens") {
      raw[d] = predictors::unit_logitlens_surprisal(doc, align, *cfg.generating_layer);
      if (cfg.wrapup)
        raw_eos[d] = doc.logitlens_surprisal.values[eos_row * doc.logitlens_surprisal.dims[1] +
                                                    doc.layer_slot(*cfg.generating_layer)];
    } else if (fam == "infovalue") {
      raw[d] = predictors::information_value(doc, *cfg.generating_layer);
    } else {
      raw[d] = predictors::pool_unit_representation(doc, align, *cfg.generating_layer) * weights;
      if (cfg.wrapup) {
        const std::size_t L = doc.hidden_states.dims[1], dim = doc.hidden_states.dims[2];
        const std::size_t slot = doc.layer_slot(*cfg.generating_layer);
        double v = 0.0;
        for (std::size_t k = 0; k < dim; ++k)
          v += doc.hidden_states.values[(eos_row * L + slot) * dim + k] * weights[static_cast<Eigen::Index>(k)];
        raw_eos[d] = v;
      }
    }
  }
  double mean = 0.0, sq = 0.0, count = 0.0;
  for (const auto& r : raw) {
    mean += r.sum();
    count += static_cast<double>(r.size());
  }
  mean /= count;
  for (const auto& r : raw) sq += (r.array() - mean).square().sum();
  const double raw_var = sq / count;
  double scale = cfg.slope;
  if (fam == "representation") scale = raw_var > 0.0 ? cfg.signal_sd / std::sqrt(raw_var) : 0.0;
  if (fam == "none") scale = 0.0;

  SynthMeta meta;
  meta.generating_family = fam;
  meta.generating_layer = layered ? cfg.generating_layer : std::nullopt;
  meta.signal_var = scale * scale * raw_var;
  meta.noise_sd = cfg.noise_sd;
  if (cfg.snr > 0.0 && meta.signal_var > 0.0)
    meta.noise_sd = std::sqrt(static_cast<double>(cfg.participants) * meta.signal_var / cfg.snr);
  for (auto w : weights) meta.representation_weights.push_back(w * scale);

  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t s = 0; s < cfg.participants; ++s) meta.subject_effects.push_back(cfg.subject_sd * normal(rt_rng));
  for (std::size_t d = 0; d < cfg.num_docs; ++d) meta.doc_effects.push_back(cfg.doc_sd * normal(rt_rng));

  const auto corpus_path = dir / "corpus.tsv";
  {
    std::ofstream out(corpus_path, std::ios::trunc);
    if (!out) throw Error("io", "cannot open for writing: " + corpus_path.string());
    out << "doc_id\tparticipant_id\tunit_index\tunit_text\tffd\tgd\ttrt\tlanguage\n";
    for (std::size_t d = 0; d < cfg.num_docs; ++d) {
      for (std::size_t s = 0; s < cfg.participants; ++s) {
        char pid[32];
        std::snprintf(pid, sizeof pid, "p%02zu", s);
        const std::size_t U = cfg.units_per_doc + (cfg.wrapup ? 1 : 0);
        for (std::size_t u = 0; u < U; ++u) {
          const bool eos = u == cfg.units_per_doc;
          const std::string& text = eos ? std::string("<eos>") : lex.text[words[d][u]];
          const double signal = scale * ((eos ? raw_eos[d] : raw[d][static_cast<Eigen::Index>(u)]) - mean);
          const double rt = cfg.base_ms + (eos ? cfg.wrapup_ms : cfg.length_ms * static_cast<double>(char_length(text))) +
                            signal + meta.subject_effects[s] + meta.doc_effects[d] + meta.noise_sd * normal(rt_rng);
          if (!(rt > 0.0)) throw ConfigError("synthetic reading time is not positive; raise base_ms");
          out << doc_ids[d] << '\t' << pid << '\t' << u << '\t' << text << '\t'
              << report::format_double(0.8 * rt) << '\t' << report::format_double(rt) << '\t'
              << report::format_double(1.25 * rt) << '\t' << cfg.language << '\n';
        }
      }
    }
    if (!out) throw Error("io", "write failed: " + corpus_path.string());
  }

  trace::TraceManifest manifest;
  manifest.model_name = "toy-recurrent-lm";
  manifest.num_layers = cfg.model.num_layers;
  manifest.hidden_dim = cfg.model.hidden_dim;
  manifest.vocab_size = lm.vocab_size();
  manifest.iv_sample_count = cfg.iv_samples;
  for (std::size_t l = 1; l <= cfg.model.num_layers; ++l) manifest.layers_exported.push_back(static_cast<int>(l));
  const auto trace_dir = dir / "trace";
  trace::write_trace(manifest, docs, trace_dir);

  const auto freq_path = dir / "frequency.tsv";
  freq.save(freq_path);

  ordered_json run;
  run["corpus"] = {{"path", "corpus.tsv"}, {"schema", "native"}};
  run["trace"] = "trace";
  run["frequency"] = "frequency.tsv";
  run["tokenizer"] = "sentencepiece";
  run["languages"] = {cfg.language};
  run["measures"] = {"FFD", "GD", "TRT"};
  ordered_json families = ordered_json::array();
  const std::vector<int> all_layers = manifest.layers_exported;
  for (auto f : predictors::kAllFamilies) {
    ordered_json e{{"family", predictors::family_name(f)}};
    if (predictors::is_layerwise(f)) e["layers"] = all_layers;
    families.push_back(std::move(e));
  }
  run["families"] = families;
  run["folds"] = 10;
  run["holdout_docs"] = 5;
  run["include_eos"] = cfg.wrapup;
  run["seeds"] = {{"split", cfg.seed + 11}, {"folds", cfg.seed + 12}, {"permutation", cfg.seed + 13},
                  {"synthetic", cfg.seed}};
  run["output"] = "out";
  const auto run_path = dir / "run_config.json";
  {
    std::ofstream out(run_path, std::ios::trunc);
    out << run.dump(2) << '\n';
    if (!out) throw Error("io", "write failed: " + run_path.string());
  }

  ordered_json mj;
  mj["config"] = cfg.to_json();
  mj["generating_family"] = meta.generating_family;
  mj["generating_layer"] = meta.generating_layer ? ordered_json(*meta.generating_layer) : ordered_json(nullptr);
  mj["signal_var"] = meta.signal_var;
  mj["noise_sd"] = meta.noise_sd;
  mj["representation_weights"] = meta.representation_weights;
  mj["subject_effects"] = meta.subject_effects;
  mj["doc_effects"] = meta.doc_effects;
  mj["gd_model"] = "gd = base_ms + length_ms * chars + signal + subject + doc + noise; ffd = 0.8 gd; trt = 1.25 gd";
  const auto meta_path = dir / "synth_meta.json";
  {
    std::ofstream out(meta_path, std::ios::trunc);
    out << mj.dump(2) << '\n';
    if (!out) throw Error("io", "write failed: " + meta_path.string());
  }

  return {corpus_path, trace_dir, freq_path, run_path, meta_path, std::move(meta)};
}

}  // namespace rtprobe::synth
