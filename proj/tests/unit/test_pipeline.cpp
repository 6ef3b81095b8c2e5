#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "golden.hpp"
#include "oracles.hpp"
#include "rtprobe/error.hpp"
#include "rtprobe/pipeline.hpp"
#include "rtprobe/predictors.hpp"
#include "rtprobe/synth.hpp"
#include "rtprobe/toy_lm.hpp"

namespace fs = std::filesystem;
using namespace rtprobe;
using predictors::Family;

namespace {

synth::SynthConfig small_config(std::uint64_t seed) {
  synth::SynthConfig c;
  c.seed = seed;
  c.num_docs = 16;
  c.units_per_doc = 20;
  c.participants = 4;
  c.model.num_layers = 4;
  c.model.hidden_dim = 6;
  c.iv_samples = 6;
  return c;
}

pipeline::RunConfig load_run(const synth::SynthOutput& out) {
  auto cfg = pipeline::RunConfig::load(out.run_config);
  cfg.workers = 1;
  return cfg;
}

std::string slurp(const fs::path& p) { return golden::read_file(p.string()); }

}  // namespace

TEST(ToyLm, ExportMatchesManualScoring) {
  synth::ToyLmConfig cfg;
  cfg.num_layers = 3;
  synth::ToyLm lm(cfg, 4);
  const std::vector<std::vector<std::size_t>> units{lm.spell({0, 1}), lm.spell({2})};
  std::mt19937_64 rng(1);
  synth::ExportOptions opt;
  opt.iv_samples = 3;
  opt.append_eos = true;
  const auto d = synth::export_document(lm, "x", units, opt, rng);
  ASSERT_TRUE(d.has_eos_row);
  auto s = lm.begin();
  std::size_t t = 0;
  for (const auto& u : units)
    for (auto tok : u) {
      EXPECT_NEAR(d.final_surprisal[t], -lm.final_logprobs(s)[static_cast<Eigen::Index>(tok)], 1e-5);
      s = lm.step(s, tok);
      ++t;
    }
  EXPECT_NEAR(d.final_surprisal[t], -lm.final_logprobs(s)[static_cast<Eigen::Index>(lm.eos_id())], 1e-5);
  for (float v : d.iv_distances.values) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 2.0f);
  }
}

TEST(ToyLm, LayerNormTransformBreaksLensEquality) {
  synth::ToyLmConfig cfg;
  cfg.num_layers = 2;
  cfg.final_transform = "layernorm";
  synth::ToyLm lm(cfg, 5);
  const auto s = lm.step(lm.begin(), lm.spell({3})[0]);
  EXPECT_GT((lm.final_logprobs(s) - lm.lens_logprobs(s, 2)).cwiseAbs().maxCoeff(), 1e-6);
  cfg.final_transform = "identity";
  synth::ToyLm id(cfg, 5);
  const auto s2 = id.step(id.begin(), id.spell({3})[0]);
  EXPECT_LT((id.final_logprobs(s2) - id.lens_logprobs(s2, 2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ToyLm, EnumerationProbabilitiesSumToOne) {
  synth::ToyLmConfig cfg;
  cfg.syllables = 5;
  synth::ToyLm lm(cfg, 6);
  const auto all = synth::enumerate_continuations(lm, lm.step(lm.begin(), lm.spell({1})[0]), 3);
  double total = 0.0;
  for (const auto& c : all) total += c.probability;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Synth, FixtureIsSelfDescribingAndValid) {
  const auto dir = oracle::temp_dir("synth_meta");
  const auto out = synth::generate(small_config(3), dir);
  nlohmann::json meta;
  std::ifstream(out.meta) >> meta;
  EXPECT_EQ(meta["generating_family"], "representation");
  EXPECT_EQ(meta["generating_layer"], 3);
  EXPECT_TRUE(trace::validate_trace(out.trace).clean());
  EXPECT_TRUE(pipeline::cmd_validate(load_run(out)).clean());
}

TEST(Synth, DeterministicInConfig) {
  const auto a = synth::generate(small_config(4), oracle::temp_dir("synth_a"));
  const auto b = synth::generate(small_config(4), oracle::temp_dir("synth_b"));
  EXPECT_EQ(oracle::sha256_file(a.corpus), oracle::sha256_file(b.corpus));
  for (const auto& e : fs::directory_iterator(a.trace))
    EXPECT_EQ(oracle::sha256_file(e.path()), oracle::sha256_file(b.trace / e.path().filename()));
}

TEST(Pipeline, ZeroNoiseSurprisalFitsExactly) {
  auto c = small_config(5);
  c.generating_family = "surprisal";
  c.generating_layer.reset();
  c.snr = 0.0;
  c.noise_sd = 0.0;
  const auto out = synth::generate(c, oracle::temp_dir("synth_zero"));
  auto cfg = load_run(out);
  cfg.measures = {corpus::Measure::GD};
  cfg.families = {{Family::Baseline, {}, false}, {Family::Surprisal, {}, false}};
  const auto rep = pipeline::cmd_run(cfg);
  ASSERT_EQ(rep.rows.size(), 2u);
  const auto& s = rep.rows[1];
  ASSERT_EQ(s.config.family, Family::Surprisal);
  for (double m : s.fold_mses) EXPECT_LT(m, 1e-6);
  EXPECT_LT(s.delta_mean, 0.0);
}

TEST(Pipeline, RowCountAndDeterminism) {
  const auto out = synth::generate(small_config(6), oracle::temp_dir("synth_det"));
  auto cfg = load_run(out);
  cfg.measures = {corpus::Measure::FFD, corpus::Measure::TRT};
  const auto d1 = oracle::temp_dir("run1"), d2 = oracle::temp_dir("run2");
  cfg.output = d1;
  const auto rep = pipeline::cmd_run(cfg);
  // baseline + surprisal + 6 layer-wise families x 4 layers, per measure
  EXPECT_EQ(rep.rows.size(), 2u * (2 + 6 * 4));
  cfg.output = d2;
  cfg.workers = 3;
  pipeline::cmd_run(cfg);
  for (const char* f : {"report.tsv", "report.json", "summary.tex", "summary.txt", "plot_data.json"})
    EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  EXPECT_EQ(rep.summary.size(), 2u);
  EXPECT_EQ(rep.combined.size(), 2u);
}

TEST(Pipeline, ReportCommandReRenders) {
  const auto out = synth::generate(small_config(7), oracle::temp_dir("synth_rep"));
  auto cfg = load_run(out);
  cfg.measures = {corpus::Measure::GD};
  cfg.output = oracle::temp_dir("run_rep");
  pipeline::cmd_run(cfg);
  const auto dir = oracle::temp_dir("rerender");
  pipeline::cmd_report(cfg.output / "report.json", dir);
  EXPECT_EQ(slurp(dir / "summary.tex"), slurp(cfg.output / "summary.tex"));
  EXPECT_EQ(slurp(dir / "report.tsv"), slurp(cfg.output / "report.tsv"));
}

TEST(Pipeline, ValidateFindings) {
  const auto out = synth::generate(small_config(8), oracle::temp_dir("synth_val"));
  auto cfg = load_run(out);
  cfg.trace = "/nonexistent/trace";
  auto rep = pipeline::cmd_validate(cfg);
  ASSERT_FALSE(rep.clean());
  EXPECT_NE(rep.findings[0].message.find("/nonexistent/trace"), std::string::npos);

  cfg = load_run(out);
  cfg.schema = "provo";
  rep = pipeline::cmd_validate(cfg);
  ASSERT_FALSE(rep.clean());
  EXPECT_NE(rep.findings[0].message.find("unknown column"), std::string::npos);
  EXPECT_NE(rep.findings[0].message.find("Text_ID"), std::string::npos);
}

TEST(Pipeline, ConfigRequiresExplicitSeeds) {
  nlohmann::json j = {{"corpus", "c.tsv"}, {"trace", "t"}};
  EXPECT_THROW(pipeline::RunConfig::from_json(j, "."), ConfigError);
  j["seeds"] = {{"split", 1}, {"folds", 2}, {"permutation", 3}};
  const auto c = pipeline::RunConfig::from_json(j, "/base");
  EXPECT_EQ(c.seeds.folds, 2u);
  EXPECT_EQ(c.resolve("c.tsv"), fs::path("/base/c.tsv"));
  const auto again = pipeline::RunConfig::from_json(nlohmann::json::parse(c.to_json().dump()), "/base");
  EXPECT_EQ(again.to_json().dump(), c.to_json().dump());
}

TEST(Pipeline, ExpandConfigsOrder) {
  const auto cfgs = pipeline::expand_configs(
      {{Family::Baseline, {}, false}, {Family::Representation, {}, true}, {Family::LogitLens, {2}, false}}, {1, 2, 3});
  ASSERT_EQ(cfgs.size(), 5u);
  EXPECT_EQ(cfgs[0].family, Family::Baseline);
  EXPECT_EQ(cfgs[3].layer, 3);
  EXPECT_EQ(cfgs[4].family, Family::LogitLens);
}

TEST(Pipeline, MixedModelRun) {
  auto c = small_config(9);
  c.participants = 5;
  const auto out = synth::generate(c, oracle::temp_dir("synth_lmm"));
  auto cfg = load_run(out);
  cfg.measures = {corpus::Measure::GD};
  cfg.lmm_components = 3;
  cfg.lmm_families = {{Family::Baseline, {}, false}, {Family::Representation, {3}, false}};
  cfg.output = oracle::temp_dir("run_lmm");
  const auto rep = pipeline::cmd_lmm(cfg);
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_LT(rep.rows[1].delta_mean, 0.0);
  EXPECT_TRUE(fs::exists(cfg.output / "lmm" / "report.json"));
}

TEST(Pipeline, WrapUpTermEvaluatedWhenEnabled) {
  auto c = small_config(10);
  c.wrapup = true;
  c.wrapup_ms = 150.0;
  const auto out = synth::generate(c, oracle::temp_dir("synth_wrap"));
  auto cfg = load_run(out);
  cfg.measures = {corpus::Measure::GD};
  cfg.families = {{Family::Baseline, {}, false}, {Family::Surprisal, {}, false}};
  cfg.include_eos = false;
  cfg.output = oracle::temp_dir("run_wrap_off");
  const auto off = pipeline::cmd_run(cfg);
  cfg.include_eos = true;
  cfg.output = oracle::temp_dir("run_wrap_on");
  const auto on = pipeline::cmd_run(cfg);
  EXPECT_NE(off.rows[0].mean_mse, on.rows[0].mean_mse);
}
