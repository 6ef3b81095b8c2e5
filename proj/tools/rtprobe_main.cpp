#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rtprobe/error.hpp"
#include "rtprobe/pipeline.hpp"
#include "rtprobe/synth.hpp"

namespace {

namespace fs = std::filesystem;
using rtprobe::pipeline::RunConfig;

constexpr int kOk = 0;
constexpr int kInternal = 1;
constexpr int kInvalid = 2;

struct Overrides {
  std::string output;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> folds;
  std::vector<std::string> measures;
  std::vector<std::string> languages;
  std::optional<std::uint64_t> seed_split, seed_folds, seed_permutation;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--output", o.output, "Output directory (overrides config)");
  cmd->add_option("--workers", o.workers, "Worker threads (overrides RTPROBE_WORKERS)");
  cmd->add_option("--folds", o.folds, "Cross-validation folds");
  cmd->add_option("--measures", o.measures, "Subset of FFD, GD, TRT")->delimiter(',');
  cmd->add_option("--languages", o.languages, "Languages to evaluate")->delimiter(',');
  cmd->add_option("--seed-split", o.seed_split, "Tuning holdout seed");
  cmd->add_option("--seed-folds", o.seed_folds, "Fold assignment seed");
  cmd->add_option("--seed-permutation", o.seed_permutation, "Permutation control seed");
}

RunConfig load_config(const std::string& path, const Overrides& o) {
  RunConfig c = RunConfig::load(path);
  if (!o.output.empty()) c.output = fs::absolute(o.output);
  if (o.workers) c.workers = *o.workers;
  if (o.folds) c.folds = *o.folds;
  if (!o.measures.empty()) {
    c.measures.clear();
    for (const auto& m : o.measures) c.measures.push_back(rtprobe::corpus::measure_from_name(m));
  }
  if (!o.languages.empty()) c.languages = o.languages;
  if (o.seed_split) c.seeds.split = *o.seed_split;
  if (o.seed_folds) c.seeds.folds = *o.seed_folds;
  if (o.seed_permutation) c.seeds.permutation = *o.seed_permutation;
  return c;
}

int emit_error(const std::string& command, const std::string& kind, const std::string& message, int code) {
  nlohmann::ordered_json j;
  j["error"] = {{"command", command}, {"kind", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << j.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reading-time prediction from language-model predictors"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;

  auto* validate = app.add_subcommand("validate", "Check trace, corpus and alignment");
  validate->add_option("--config,-c", config_path, "Run config (JSON)")->required();
  bool json_findings = false;
  validate->add_flag("--json", json_findings, "Print findings as JSON");

  auto* run = app.add_subcommand("run", "Tune, cross-validate and write the report");
  run->add_option("--config,-c", config_path, "Run config (JSON)")->required();
  add_overrides(run, overrides);

  auto* lmm = app.add_subcommand("lmm", "Mixed-effects evaluation on per-participant rows");
  lmm->add_option("--config,-c", config_path, "Run config (JSON)")->required();
  std::optional<std::size_t> components;
  lmm->add_option("--components", components, "PCA components for representations");
  add_overrides(lmm, overrides);

  auto* report = app.add_subcommand("report", "Re-render summary tables from report.json");
  std::string report_input, report_out;
  report->add_option("--input,-i", report_input, "report.json")->required();
  report->add_option("--output,-o", report_out, "Output directory (default: input directory)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus and trace");
  std::string synth_config, synth_out;
  std::optional<std::uint64_t> synth_seed;
  std::optional<std::string> synth_family;
  std::optional<int> synth_layer;
  std::optional<double> synth_snr, synth_noise;
  synth->add_option("--config,-c", synth_config, "Synthetic fixture config (JSON)");
  synth->add_option("--out,-o", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Seed");
  synth->add_option("--family", synth_family, "Generating family: none, surprisal, logitlens, infovalue, representation");
  synth->add_option("--layer", synth_layer, "Generating layer");
  synth->add_option("--snr", synth_snr, "Signal-to-noise ratio of participant means");
  synth->add_option("--noise-sd", synth_noise, "Per-reading noise sd in ms (used when snr <= 0)");

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (*validate) {
      const auto cfg = RunConfig::load(config_path);
      const auto rep = rtprobe::pipeline::cmd_validate(cfg);
      if (json_findings) {
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const auto& f : rep.findings)
          j.push_back({{"doc_id", f.doc_id}, {"location", f.location}, {"message", f.message}});
        std::cout << j.dump(2) << '\n';
      } else {
        for (const auto& f : rep.findings)
          std::cout << (f.doc_id.empty() ? "-" : f.doc_id) << '\t' << f.location << '\t' << f.message << '\n';
        std::cout << (rep.clean() ? "clean" : std::to_string(rep.findings.size()) + " finding(s)") << '\n';
      }
      return rep.clean() ? kOk : kInvalid;
    }
    if (*run) {
      const auto cfg = load_config(config_path, overrides);
      const auto rep = rtprobe::pipeline::cmd_run(cfg);
      std::cout << "wrote " << rep.rows.size() << " rows to " << cfg.output_dir().string() << '\n';
      return kOk;
    }
    if (*lmm) {
      auto cfg = load_config(config_path, overrides);
      if (components) cfg.lmm_components = *components;
      const auto rep = rtprobe::pipeline::cmd_lmm(cfg);
      std::cout << "wrote " << rep.rows.size() << " rows to " << (cfg.output_dir() / "lmm").string() << '\n';
      return kOk;
    }
    if (*report) {
      const fs::path out = report_out.empty() ? fs::path(report_input).parent_path() : fs::path(report_out);
      const auto rep = rtprobe::pipeline::cmd_report(report_input, out.empty() ? fs::path(".") : out);
      std::cout << rtprobe::report::render_latex_table(rep.summary);
      return kOk;
    }
    if (*synth) {
      nlohmann::json j = nlohmann::json::object();
      if (!synth_config.empty()) {
        std::ifstream in(synth_config);
        if (!in) throw rtprobe::Error("io", "cannot open synth config: " + synth_config);
        try {
          in >> j;
        } catch (const nlohmann::json::exception& e) {
          throw rtprobe::ConfigError(std::string("synth config is not valid JSON: ") + e.what());
        }
      }
      auto cfg = rtprobe::synth::SynthConfig::from_json(j);
      if (synth_seed) cfg.seed = *synth_seed;
      if (synth_family) cfg.generating_family = *synth_family;
      if (synth_layer) cfg.generating_layer = *synth_layer;
      if (synth_snr) cfg.snr = *synth_snr;
      if (synth_noise) cfg.noise_sd = *synth_noise;
      const auto out = rtprobe::synth::generate(cfg, synth_out);
      std::cout << "wrote " << out.run_config.string() << '\n';
      return kOk;
    }
  } catch (const rtprobe::Error& e) {
    return emit_error(command, e.kind(), e.what(), kInvalid);
  } catch (const std::exception& e) {
    return emit_error(command, "internal", e.what(), kInternal);
  }
  return kInternal;
}
