#include "rtprobe/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>

#include "rtprobe/alignment.hpp"
#include "rtprobe/error.hpp"
#include "rtprobe/evaluation.hpp"
#include "rtprobe/lmm.hpp"
#include "rtprobe/parallel.hpp"

namespace rtprobe::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using predictors::Family;
using predictors::PredictorConfig;

namespace {

std::vector<FamilySpec> parse_families(const json& arr) {
  std::vector<FamilySpec> out;
  for (const auto& e : arr) {
    FamilySpec f;
    if (e.is_string()) {
      f.family = predictors::family_from_name(e.get<std::string>());
      f.all_layers = predictors::is_layerwise(f.family);
    } else {
      f.family = predictors::family_from_name(e.at("family").get<std::string>());
      if (!e.contains("layers") || (e.at("layers").is_string() && e.at("layers").get<std::string>() == "all")) {
        f.all_layers = predictors::is_layerwise(f.family);
      } else if (e.at("layers").is_object()) {
        const int lo = e.at("layers").at("from").get<int>();
        const int hi = e.at("layers").at("to").get<int>();
        if (hi < lo) throw ConfigError("empty layer range for " + predictors::family_name(f.family));
        for (int l = lo; l <= hi; ++l) f.layers.push_back(l);
      } else {
        f.layers = e.at("layers").get<std::vector<int>>();
      }
      if (!predictors::is_layerwise(f.family) && !f.layers.empty())
        throw ConfigError("family " + predictors::family_name(f.family) + " does not take layers");
    }
    out.push_back(std::move(f));
  }
  return out;
}

ordered_json families_json(const std::vector<FamilySpec>& fams) {
  ordered_json arr = ordered_json::array();
  for (const auto& f : fams) {
    ordered_json e{{"family", predictors::family_name(f.family)}};
    if (f.all_layers) e["layers"] = "all";
    else if (predictors::is_layerwise(f.family)) e["layers"] = f.layers;
    arr.push_back(std::move(e));
  }
  return arr;
}

struct DocData {
  trace::DocumentTrace trace;
  corpus::AlignmentMap align;
  const corpus::UnitTable* table = nullptr;
  predictors::BaselineBlock baseline;
};

struct LanguageSplit {
  std::string language;
  std::vector<std::string> tuning;
  std::vector<std::string> experiment;
};

struct Prepared {
  corpus::Corpus corpus;
  trace::TraceManifest manifest;
  std::map<std::string, DocData> docs;
  std::vector<LanguageSplit> languages;
};

void check_alignment(const DocData& d, const corpus::TokenizerMarkerRules& rules) {
  const auto texts = corpus::detokenize(d.align, d.trace.tokens, rules);
  if (texts.size() != d.table->size())
    throw AlignmentError("document " + d.trace.doc_id + ": trace has " + std::to_string(texts.size()) +
                         " units, corpus has " + std::to_string(d.table->size()));
  for (std::size_t u = 0; u < texts.size(); ++u) {
    std::string want;
    for (char c : d.table->units[u])
      if (!std::isspace(static_cast<unsigned char>(c))) want += c;
    if (texts[u] != want)
      throw AlignmentError("document " + d.trace.doc_id + " unit " + std::to_string(u) + ": trace text '" +
                           texts[u] + "' does not match the unit text '" + d.table->units[u] + "'");
  }
}

Prepared prepare(const RunConfig& cfg) {
  Prepared p;
  const auto schema = corpus::ColumnSchema::preset(cfg.schema);
  p.corpus = corpus::aggregate(corpus::parse_corpus(cfg.resolve(cfg.corpus), schema));
  const auto reader = trace::read_trace(cfg.resolve(cfg.trace));
  p.manifest = reader.manifest();
  predictors::FrequencyTable freq;
  if (cfg.frequency) freq = predictors::FrequencyTable::load(cfg.resolve(*cfg.frequency));
  const auto rules = corpus::TokenizerMarkerRules::preset(cfg.tokenizer);

  std::map<std::string, std::vector<std::string>> by_language;
  for (const auto& [id, table] : p.corpus) {
    if (!cfg.languages.empty() &&
        std::find(cfg.languages.begin(), cfg.languages.end(), table.language) == cfg.languages.end())
      continue;
    by_language[table.language].push_back(id);
  }
  for (const auto& lang : cfg.languages)
    if (!by_language.count(lang)) throw CorpusError("no documents for language " + lang);
  if (by_language.empty()) throw CorpusError("corpus has no documents");

  for (auto& [lang, ids] : by_language) {
    for (const auto& id : ids) {
      if (!reader.find(id)) throw ValidationError("document " + id + " missing from trace");
      DocData d;
      d.trace = reader.load(id);
      d.align = corpus::alignment_from_unit_index(d.trace.unit_index_of_token, d.trace.text_token_count());
      d.table = &p.corpus.at(id);
      check_alignment(d, rules);
      d.baseline = predictors::default_baseline(*d.table, freq);
      p.docs.emplace(id, std::move(d));
    }
    auto split = corpus::holdout_split(ids, cfg.holdout_docs, cfg.seeds.split);
    if (split.experiment.size() < cfg.folds)
      throw ValidationError("language " + lang + ": " + std::to_string(split.experiment.size()) +
                            " experiment documents, fewer than " + std::to_string(cfg.folds) + " folds");
    p.languages.push_back({lang, std::move(split.tuning), std::move(split.experiment)});
  }
  return p;
}

evaluation::Dataset dataset(const Prepared& p, const std::vector<std::string>& ids, const PredictorConfig& config,
                            corpus::Measure measure, const predictors::DesignOptions& options) {
  std::vector<predictors::DesignMatrix> parts;
  parts.reserve(ids.size());
  for (const auto& id : ids) {
    const auto& d = p.docs.at(id);
    parts.push_back(predictors::build_design_matrix(config, d.trace, d.align, *d.table, measure, d.baseline, options));
  }
  return evaluation::Dataset::from_design(predictors::stack(parts));
}

struct Task {
  std::size_t language = 0;
  corpus::Measure measure = corpus::Measure::FFD;
  PredictorConfig config;
};

std::vector<Task> tasks_for(const Prepared& p, const RunConfig& cfg, const std::vector<PredictorConfig>& configs) {
  std::vector<Task> tasks;
  for (std::size_t l = 0; l < p.languages.size(); ++l)
    for (auto m : cfg.measures)
      for (const auto& c : configs) tasks.push_back({l, m, c});
  return tasks;
}

report::EvalReport assemble(const Prepared& p, const std::vector<Task>& tasks,
                            std::vector<evaluation::CvResult>& results) {
  report::EvalReport rep;
  std::size_t i = 0;
  while (i < tasks.size()) {
    std::size_t j = i;
    while (j < tasks.size() && tasks[j].language == tasks[i].language && tasks[j].measure == tasks[i].measure) ++j;
    std::vector<evaluation::CvResult> group(results.begin() + static_cast<std::ptrdiff_t>(i),
                                            results.begin() + static_cast<std::ptrdiff_t>(j));
    evaluation::mark_significance(group);
    auto rows = report::build_rows(p.languages[tasks[i].language].language, group);
    rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
    i = j;
  }
  report::summarize_all(rep);
  return rep;
}

std::vector<int> exported_layers(const Prepared& p) { return p.manifest.layers_exported; }

std::size_t workers(const RunConfig& cfg) { return cfg.workers ? std::max<std::size_t>(1, *cfg.workers) : worker_count(); }

void require_baseline(const std::vector<PredictorConfig>& configs) {
  if (std::none_of(configs.begin(), configs.end(), [](const auto& c) { return c.family == Family::Baseline; }))
    throw ConfigError("the baseline family is required");
}

}  // namespace

fs::path RunConfig::resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  RunConfig c;
  c.base_dir = base_dir;
  try {
    const auto& cj = j.at("corpus");
    if (cj.is_string()) {
      c.corpus = cj.get<std::string>();
    } else {
      c.corpus = cj.at("path").get<std::string>();
      if (cj.contains("schema")) c.schema = cj.at("schema").get<std::string>();
    }
    c.trace = j.at("trace").get<std::string>();
    if (j.contains("frequency") && !j.at("frequency").is_null()) c.frequency = j.at("frequency").get<std::string>();
    if (j.contains("tokenizer")) c.tokenizer = j.at("tokenizer").get<std::string>();
    if (j.contains("languages")) c.languages = j.at("languages").get<std::vector<std::string>>();
    if (j.contains("measures")) {
      c.measures.clear();
      for (const auto& m : j.at("measures")) c.measures.push_back(corpus::measure_from_name(m.get<std::string>()));
    }
    if (j.contains("families")) c.families = parse_families(j.at("families"));
    if (j.contains("folds")) c.folds = j.at("folds").get<std::size_t>();
    if (j.contains("holdout_docs")) c.holdout_docs = j.at("holdout_docs").get<std::size_t>();
    if (j.contains("lambda_grid")) {
      const auto& g = j.at("lambda_grid");
      if (g.contains("min")) c.lambda_min = g.at("min").get<double>();
      if (g.contains("max")) c.lambda_max = g.at("max").get<double>();
      if (g.contains("points")) c.lambda_points = g.at("points").get<int>();
    }
    if (j.contains("penalties")) {
      c.penalties.clear();
      for (const auto& p : j.at("penalties")) c.penalties.push_back(regression::penalty_from_name(p.get<std::string>()));
    }
    if (j.contains("include_eos")) c.include_eos = j.at("include_eos").get<bool>();
    if (!j.contains("seeds")) throw ConfigError("seeds must be given explicitly (split, folds, permutation)");
    const auto& s = j.at("seeds");
    for (const char* key : {"split", "folds", "permutation"})
      if (!s.contains(key)) throw ConfigError(std::string("missing seed: ") + key);
    c.seeds.split = s.at("split").get<std::uint64_t>();
    c.seeds.folds = s.at("folds").get<std::uint64_t>();
    c.seeds.permutation = s.at("permutation").get<std::uint64_t>();
    if (s.contains("synthetic")) c.seeds.synthetic = s.at("synthetic").get<std::uint64_t>();
    if (j.contains("output")) c.output = j.at("output").get<std::string>();
    if (j.contains("lmm")) {
      const auto& l = j.at("lmm");
      if (l.contains("components")) c.lmm_components = l.at("components").get<std::size_t>();
      if (l.contains("families")) c.lmm_families = parse_families(l.at("families"));
    }
    if (j.contains("workers") && !j.at("workers").is_null()) c.workers = j.at("workers").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad run config: ") + e.what());
  }
  if (c.folds < 2) throw ConfigError("folds must be >= 2");
  if (c.measures.empty()) throw ConfigError("no measures selected");
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open config: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["corpus"] = {{"path", corpus.string()}, {"schema", schema}};
  j["trace"] = trace.string();
  j["frequency"] = frequency ? ordered_json(frequency->string()) : ordered_json(nullptr);
  j["tokenizer"] = tokenizer;
  j["languages"] = languages;
  j["measures"] = ordered_json::array();
  for (auto m : measures) j["measures"].push_back(corpus::measure_name(m));
  j["families"] = families_json(families);
  j["folds"] = folds;
  j["holdout_docs"] = holdout_docs;
  j["lambda_grid"] = {{"min", lambda_min}, {"max", lambda_max}, {"points", lambda_points}};
  j["penalties"] = ordered_json::array();
  for (auto p : penalties) j["penalties"].push_back(regression::penalty_name(p));
  j["include_eos"] = include_eos;
  j["seeds"] = {{"split", seeds.split}, {"folds", seeds.folds}, {"permutation", seeds.permutation},
                {"synthetic", seeds.synthetic}};
  j["output"] = output.string();
  j["lmm"] = {{"components", lmm_components}, {"families", families_json(lmm_families)}};
  j["workers"] = workers ? ordered_json(*workers) : ordered_json(nullptr);
  return j;
}

std::vector<PredictorConfig> expand_configs(const std::vector<FamilySpec>& families,
                                            const std::vector<int>& exported) {
  std::vector<FamilySpec> fams = families;
  if (fams.empty())
    for (auto f : predictors::kAllFamilies) fams.push_back({f, {}, predictors::is_layerwise(f)});
  std::vector<PredictorConfig> out;
  for (const auto& f : fams) {
    if (!predictors::is_layerwise(f.family)) {
      out.push_back(PredictorConfig::make(f.family));
      continue;
    }
    std::vector<int> layers = f.all_layers ? exported : f.layers;
    std::sort(layers.begin(), layers.end());
    layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
    for (int l : layers) {
      if (std::find(exported.begin(), exported.end(), l) == exported.end())
        throw ConfigError("layer " + std::to_string(l) + " was not exported");
      out.push_back(PredictorConfig::make(f.family, l));
    }
  }
  std::vector<PredictorConfig> unique;
  for (const auto& c : out)
    if (std::find(unique.begin(), unique.end(), c) == unique.end()) unique.push_back(c);
  return unique;
}

trace::ValidationReport cmd_validate(const RunConfig& cfg) {
  trace::ValidationReport rep;
  auto add = [&](std::string doc, std::string where, std::string msg) {
    rep.findings.push_back({std::move(doc), std::move(where), std::move(msg)});
  };
  const fs::path corpus_path = cfg.resolve(cfg.corpus);
  const fs::path trace_path = cfg.resolve(cfg.trace);
  bool trace_ok = false;
  if (!fs::is_directory(trace_path)) {
    add("", trace_path.string(), "trace directory not found: " + trace_path.string());
  } else {
    auto t = trace::validate_trace(trace_path);
    trace_ok = t.clean();
    rep.findings.insert(rep.findings.end(), t.findings.begin(), t.findings.end());
  }
  if (cfg.frequency && !fs::exists(cfg.resolve(*cfg.frequency)))
    add("", cfg.resolve(*cfg.frequency).string(), "frequency table not found: " + cfg.resolve(*cfg.frequency).string());

  corpus::Corpus corpus;
  bool corpus_ok = false;
  if (!fs::is_regular_file(corpus_path)) {
    add("", corpus_path.string(), "corpus file not found: " + corpus_path.string());
  } else {
    try {
      const auto schema = corpus::ColumnSchema::preset(cfg.schema);
      const auto missing = corpus::missing_columns(corpus_path, schema);
      if (!missing.empty()) {
        std::string cols;
        for (const auto& m : missing) cols += (cols.empty() ? "" : ", ") + m;
        add("", corpus_path.string(), "unknown column(s) for schema " + cfg.schema + ": " + cols);
      } else {
        corpus = corpus::aggregate(corpus::parse_corpus(corpus_path, schema));
        corpus_ok = true;
      }
    } catch (const Error& e) {
      add("", corpus_path.string(), e.what());
    }
  }
  if (trace_ok && corpus_ok) {
    try {
      const auto reader = trace::read_trace(trace_path);
      const auto rules = corpus::TokenizerMarkerRules::preset(cfg.tokenizer);
      for (const auto& [id, table] : corpus) {
        if (!cfg.languages.empty() &&
            std::find(cfg.languages.begin(), cfg.languages.end(), table.language) == cfg.languages.end())
          continue;
        if (!reader.find(id)) {
          add(id, "trace", "document missing from trace");
          continue;
        }
        DocData d;
        d.trace = reader.load(id);
        d.table = &table;
        try {
          d.align = corpus::alignment_from_unit_index(d.trace.unit_index_of_token, d.trace.text_token_count());
          check_alignment(d, rules);
        } catch (const Error& e) {
          add(id, "alignment", e.what());
        }
      }
      expand_configs(cfg.families, reader.manifest().layers_exported);
    } catch (const Error& e) {
      add("", "config", e.what());
    }
  }
  return rep;
}

report::EvalReport cmd_run(const RunConfig& cfg) {
  const Prepared p = prepare(cfg);
  const auto configs = expand_configs(cfg.families, exported_layers(p));
  require_baseline(configs);
  const auto tasks = tasks_for(p, cfg, configs);

  evaluation::TuneOptions tune_opts;
  tune_opts.penalties = cfg.penalties;
  tune_opts.grid = evaluation::lambda_grid(cfg.lambda_min, cfg.lambda_max, cfg.lambda_points);
  predictors::DesignOptions opts;
  opts.include_eos = cfg.include_eos;

  std::vector<evaluation::FoldAssignment> folds;
  for (const auto& l : p.languages) folds.push_back(evaluation::assign_folds(l.experiment.size(), cfg.folds, cfg.seeds.folds));

  std::vector<evaluation::CvResult> results(tasks.size());
  parallel_for(tasks.size(), workers(cfg), [&](std::size_t i) {
    const auto& t = tasks[i];
    const auto& lang = p.languages[t.language];
    const auto exp = dataset(p, lang.experiment, t.config, t.measure, opts);
    const auto tun = dataset(p, lang.tuning, t.config, t.measure, opts);
    const auto choice = evaluation::tune(exp, tun, tune_opts, t.config, t.measure);
    auto cv = evaluation::crossvalidate(exp, choice, folds[t.language]);
    const auto perm = evaluation::permutation_control(exp, choice, folds[t.language], cfg.seeds.permutation);
    cv.permuted_fold_mses = perm.fold_mses;
    cv.summarize();
    results[i] = std::move(cv);
  });

  auto rep = assemble(p, tasks, results);
  report::write_report(cfg.output_dir(), rep);
  return rep;
}

report::EvalReport cmd_lmm(const RunConfig& cfg) {
  const Prepared p = prepare(cfg);
  std::vector<FamilySpec> fams = cfg.lmm_families;
  if (fams.empty())
    fams = {{Family::Baseline, {}, false}, {Family::Surprisal, {}, false}, {Family::Representation, {}, true}};
  const auto configs = expand_configs(fams, exported_layers(p));
  require_baseline(configs);
  const auto tasks = tasks_for(p, cfg, configs);
  predictors::DesignOptions opts;
  opts.include_eos = cfg.include_eos;
  opts.per_participant = true;

  std::vector<evaluation::FoldAssignment> folds;
  for (const auto& l : p.languages) folds.push_back(evaluation::assign_folds(l.experiment.size(), cfg.folds, cfg.seeds.folds));
  const auto trainer = mixedmodel::lmm_trainer(cfg.lmm_components);

  std::vector<evaluation::CvResult> results(tasks.size());
  parallel_for(tasks.size(), workers(cfg), [&](std::size_t i) {
    const auto& t = tasks[i];
    const auto exp = dataset(p, p.languages[t.language].experiment, t.config, t.measure, opts);
    auto r = evaluation::evaluate(exp, trainer, folds[t.language], cfg.seeds.permutation);
    r.config = t.config;
    r.measure = t.measure;
    results[i] = std::move(r);
  });

  auto rep = assemble(p, tasks, results);
  report::write_report(cfg.output_dir() / "lmm", rep);
  return rep;
}

report::EvalReport cmd_report(const fs::path& report_json, const fs::path& out_dir) {
  std::ifstream in(report_json);
  if (!in) throw Error("io", "cannot open report: " + report_json.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("report " + report_json.string() + " is not valid JSON: " + e.what());
  }
  auto rep = report::from_json(j);
  report::write_report(out_dir, rep);
  return rep;
}

}  // namespace rtprobe::pipeline
