#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "rtprobe/alignment.hpp"
#include "rtprobe/corpus.hpp"
#include "rtprobe/error.hpp"
#include "rtprobe/predictors.hpp"
#include "rtprobe/toy_lm.hpp"

using namespace rtprobe;
using namespace rtprobe::predictors;
using trace::DocumentTrace;
using trace::Tensor;

namespace {

DocumentTrace doc_with(std::vector<std::uint32_t> unit_of_token, std::vector<float> surprisal) {
  DocumentTrace d;
  d.doc_id = "d";
  d.layers = {1};
  for (std::size_t i = 0; i < unit_of_token.size(); ++i) d.tokens.push_back("t" + std::to_string(i));
  d.unit_index_of_token = std::move(unit_of_token);
  d.final_surprisal = std::move(surprisal);
  return d;
}

corpus::AlignmentMap align_of(const DocumentTrace& d) {
  return corpus::alignment_from_unit_index(d.unit_index_of_token, d.token_count());
}

corpus::UnitTable table_of(std::vector<std::string> words) {
  corpus::UnitTable t;
  t.doc_id = "d";
  t.units = std::move(words);
  for (std::size_t u = 0; u < t.units.size(); ++u) {
    t.aggregated.push_back({100.0 + u, 110.0 + u, u == 1 ? std::nullopt : std::optional<double>(150.0 + u)});
  }
  return t;
}

// Two-token vocabulary, all-zero states, lens and head = log_softmax(I h + 0).
class ZeroModel final : public synth::CausalModel {
 public:
  std::size_t vocab_size() const override { return 2; }
  std::size_t num_layers() const override { return 1; }
  std::size_t hidden_dim() const override { return 2; }
  const std::string& token(std::size_t id) const override { return names_.at(id); }
  std::size_t eos_id() const override { return 1; }
  bool starts_unit(std::size_t id) const override { return id == 0; }
  synth::LayerStack begin() const override { return {{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)}}; }
  synth::LayerStack step(const synth::LayerStack&, std::size_t) const override { return begin(); }
  Eigen::VectorXd final_logprobs(const synth::LayerStack& s) const override { return synth::log_softmax(s.h[1]); }
  Eigen::VectorXd lens_logprobs(const synth::LayerStack& s, int layer) const override {
    return synth::log_softmax(Eigen::MatrixXd::Identity(2, 2) * s.h[static_cast<std::size_t>(layer)]);
  }

 private:
  std::vector<std::string> names_{"\xe2\x96\x81x", "</s>"};
};

}  // namespace

TEST(Predictors, ConfigLayerPresence) {
  EXPECT_THROW(PredictorConfig::make(Family::Representation), rtprobe::Error);
  EXPECT_THROW(PredictorConfig::make(Family::Surprisal, 3), rtprobe::Error);
  EXPECT_NO_THROW(PredictorConfig::make(Family::ReprSurprisal, 2));
  for (auto f : kAllFamilies) EXPECT_EQ(family_from_name(family_name(f)), f);
  EXPECT_EQ(scalar_component(Family::ReprInfoValue), Family::InfoValue);
  EXPECT_FALSE(scalar_component(Family::Representation).has_value());
}

TEST(Predictors, UnitSurprisalSumsSpans) {
  const auto d = doc_with({0, 0, 1}, {1.2f, 0.8f, 3.5f});
  const auto s = unit_surprisal(d, align_of(d));
  EXPECT_NEAR(s[0], 2.0, 1e-6);
  EXPECT_NEAR(s[1], 3.5, 1e-6);
}

TEST(Predictors, UnitSurprisalMatchesProbabilityTable) {
  oracle::DyadicToy toy;
  std::mt19937_64 rng(1);
  synth::ExportOptions opt;
  opt.iv_samples = 2;
  const std::vector<std::vector<std::size_t>> units{{0, 1, 1}, {0}, {0, 1}};
  const auto d = synth::export_document(toy, "toy", units, opt, rng);
  const auto s = unit_surprisal(d, align_of(d));
  const auto& P = oracle::DyadicToy::kProb;
  EXPECT_NEAR(s[0], -std::log(P[3][0] * P[0][1] * P[1][1]), 1e-6);
  EXPECT_NEAR(s[1], -std::log(P[1][0]), 1e-6);
  EXPECT_NEAR(s[2], -std::log(P[0][0] * P[0][1]), 1e-6);
}

TEST(Predictors, LogitLensSums) {
  auto d = doc_with({0, 0}, {1.0f, 1.0f});
  d.logitlens_surprisal = Tensor({2, 1}, {0.5f, 0.5f});
  EXPECT_NEAR(unit_logitlens_surprisal(d, align_of(d), 1)[0], 1.0, 1e-7);
  EXPECT_THROW(unit_logitlens_surprisal(d, align_of(d), 2), rtprobe::Error);
}

TEST(Predictors, UniformLensGivesLnTwo) {
  ZeroModel m;
  std::mt19937_64 rng(2);
  synth::ExportOptions opt;
  opt.iv_samples = 1;
  const auto d = synth::export_document(m, "z", {{0}, {0}}, opt, rng);
  for (float v : d.logitlens_surprisal.values) EXPECT_NEAR(v, 0.693147, 1e-6);
}

TEST(Predictors, FinalLayerLensEqualsSurprisalUnderIdentityTransform) {
  synth::ToyLmConfig cfg;
  cfg.num_layers = 4;
  synth::ToyLm lm(cfg, 9);
  std::mt19937_64 rng(3);
  synth::ExportOptions opt;
  opt.iv_samples = 2;
  const auto d = synth::export_document(lm, "t", {lm.spell({1, 2}), lm.spell({3}), lm.spell({0, 4, 5})}, opt, rng);
  const auto a = align_of(d);
  const auto s = unit_surprisal(d, a);
  const auto ll = unit_logitlens_surprisal(d, a, 4);
  for (Eigen::Index u = 0; u < s.size(); ++u) EXPECT_NEAR(ll[u], s[u], 1e-5);
}

TEST(Predictors, PoolingMeans) {
  auto d = doc_with({0, 0, 1, 2, 2, 2}, std::vector<float>(6, 1.0f));
  d.hidden_states = Tensor({6, 1, 2}, {0, 2, 2, 0, 5, 7, 1, 1, 2, 2, 3, 3});
  const auto p = pool_unit_representation(d, align_of(d), 1);
  EXPECT_EQ(p.row(0), Eigen::RowVector2d(1, 1));
  EXPECT_EQ(p.row(1), Eigen::RowVector2d(5, 7));
  EXPECT_EQ(p.row(2), Eigen::RowVector2d(2, 2));
}

TEST(Predictors, PoolingCommutesWithLinearMaps) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  auto d = fixture::make_doc("d", {1, 3, 2, 4}, {2}, 3, 1, 5);
  Eigen::Matrix3d A;
  for (int i = 0; i < 9; ++i) A(i / 3, i % 3) = g(rng);
  auto mapped = d;
  const std::size_t T = d.token_count();
  // Map in double, then round once: keep inputs exactly representable.
  for (std::size_t t = 0; t < T; ++t) {
    Eigen::Vector3d h;
    for (int k = 0; k < 3; ++k) h[k] = d.hidden_states.values[t * 3 + k];
    const Eigen::Vector3d ah = A * h;
    for (int k = 0; k < 3; ++k) mapped.hidden_states.values[t * 3 + k] = static_cast<float>(ah[k]);
  }
  const auto a = align_of(d);
  const Eigen::MatrixXd lhs = pool_unit_representation(mapped, a, 2);
  const Eigen::MatrixXd rhs = pool_unit_representation(d, a, 2) * A.transpose();
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Predictors, InformationValueMeanAndPermutationInvariance) {
  auto d = doc_with({0, 1}, {1.0f, 1.0f});
  d.iv_distances = Tensor({2, 1, 2}, {0.0f, 0.0f, 0.2f, 0.4f});
  auto iv = information_value(d, 1);
  EXPECT_EQ(iv[0], 0.0);
  EXPECT_NEAR(iv[1], 0.3, 1e-7);
  std::mt19937_64 rng(1);
  auto big = fixture::make_doc("d", {1, 1, 1}, {1}, 2, 16, 4);
  const auto ref = information_value(big, 1);
  for (int k = 0; k < 3; ++k) {
    for (std::size_t u = 0; u < 3; ++u)
      std::shuffle(big.iv_distances.values.begin() + static_cast<long>(u * 16),
                   big.iv_distances.values.begin() + static_cast<long>(u * 16 + 16), rng);
    EXPECT_LT((information_value(big, 1) - ref).cwiseAbs().maxCoeff(), 1e-12);
  }
  d.iv_distances = Tensor({2, 1, 0}, {});
  EXPECT_THROW(information_value(d, 1), rtprobe::Error);
}

TEST(Predictors, SurprisalAdditivityUnderSplits) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<float> u(0.0f, 5.0f);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<float> s(6);
    for (auto& v : s) v = u(rng);
    const auto whole = doc_with({0, 0, 0, 0, 0, 0}, s);
    const std::uint32_t cut = 1 + static_cast<std::uint32_t>(rng() % 5);
    std::vector<std::uint32_t> idx(6);
    for (std::uint32_t i = 0; i < 6; ++i) idx[i] = i < cut ? 0 : 1;
    const auto split = doc_with(idx, s);
    const double total = unit_surprisal(whole, align_of(whole))[0];
    const auto parts = unit_surprisal(split, align_of(split));
    EXPECT_NEAR(parts[0] + parts[1], total, 1e-9 * total);
  }
}

TEST(Predictors, BaselineFeatures) {
  FrequencyTable f;
  f.add("cat", 100);
  corpus::UnitTable t = table_of({"cat", "x", "y", "z", "w", "v", "u", "s", "r", "qqq"});
  const auto b = baseline_features(t, f);
  EXPECT_EQ(b.row(0), Eigen::RowVector3d(3, std::log(101.0), 0.0));
  EXPECT_EQ(b(1, 1), 0.0);
  EXPECT_EQ(b(9, 2), 1.0);
}

TEST(Predictors, DesignMatrixShapes) {
  const std::vector<int> layers{1, 2};
  const auto d = fixture::make_doc("d", {1, 2, 1, 1}, layers, 5, 3, 7);
  const auto a = align_of(d);
  const auto t = table_of({"a", "bb", "c", "dd"});
  const auto base = default_baseline(t, FrequencyTable{});
  auto dm = build_design_matrix(PredictorConfig::make(Family::Baseline), d, a, t, corpus::Measure::FFD, base);
  EXPECT_EQ(dm.cols(), 4);
  EXPECT_EQ(dm.rows(), 4);
  EXPECT_TRUE((dm.X.col(0).array() == 1.0).all());
  dm = build_design_matrix(PredictorConfig::make(Family::Representation, 2), d, a, t, corpus::Measure::GD, base);
  EXPECT_EQ(dm.cols(), 1 + 3 + 5);
  EXPECT_EQ(dm.repr_end - dm.repr_begin, 5u);
  const auto combined =
      build_design_matrix(PredictorConfig::make(Family::ReprSurprisal, 2), d, a, t, corpus::Measure::GD, base);
  EXPECT_EQ(combined.cols(), dm.cols() + 1);
  const auto trt = build_design_matrix(PredictorConfig::make(Family::InfoValue, 1), d, a, t, corpus::Measure::TRT, base);
  EXPECT_EQ(trt.rows(), 3);
  EXPECT_EQ(trt.unit_of_row, (std::vector<std::size_t>{0, 2, 3}));
}

TEST(Predictors, EveryFamilyFiniteWithExpectedRows) {
  const std::vector<int> layers{1, 2, 3};
  const auto d = fixture::make_doc("d", {2, 1, 3, 1, 1}, layers, 4, 6, 12);
  const auto a = align_of(d);
  const auto t = table_of({"a", "b", "c", "d", "e"});
  const auto base = default_baseline(t, FrequencyTable{});
  for (auto f : kAllFamilies) {
    for (int l : layers) {
      if (!is_layerwise(f) && l > 1) continue;
      const auto cfg = PredictorConfig::make(f, is_layerwise(f) ? std::optional<int>(l) : std::nullopt);
      for (auto m : corpus::kAllMeasures) {
        const auto dm = build_design_matrix(cfg, d, a, t, m, base);
        EXPECT_TRUE(dm.X.allFinite());
        EXPECT_EQ(dm.rows(), m == corpus::Measure::TRT ? 4 : 5);
        EXPECT_EQ(static_cast<std::size_t>(dm.cols()), dm.feature_names.size());
      }
    }
  }
}

TEST(Predictors, WrapUpRowAppendedWhenBothSidesHaveIt) {
  auto d = fixture::make_doc("d", {1, 1}, {1}, 2, 2, 3);
  d.tokens.push_back("</s>");
  d.unit_index_of_token.push_back(2);
  d.final_surprisal.push_back(2.5f);
  d.has_eos_row = true;
  d.logitlens_surprisal = Tensor({3, 1}, {1, 1, 1});
  d.hidden_states = Tensor({3, 1, 2}, {0, 0, 0, 0, 4, 5});
  auto t = table_of({"a", "b"});
  t.eos_aggregated = corpus::Measures{300.0, 300.0, 300.0};
  const auto a = corpus::alignment_from_unit_index({0, 1}, 2);
  const auto base = default_baseline(t, FrequencyTable{});
  DesignOptions opt;
  opt.include_eos = true;
  const auto dm = build_design_matrix(PredictorConfig::make(Family::ReprSurprisal, 1), d, a, t,
                                      corpus::Measure::FFD, base, opt);
  ASSERT_EQ(dm.rows(), 3);
  EXPECT_EQ(dm.y[2], 300.0);
  EXPECT_EQ(dm.unit_of_row[2], 2u);
  EXPECT_EQ(dm.X(2, static_cast<Eigen::Index>(dm.repr_begin)), 4.0);
  EXPECT_NEAR(dm.X(2, dm.cols() - 1), 2.5, 1e-7);
  const auto without = build_design_matrix(PredictorConfig::make(Family::Surprisal), d, a, t, corpus::Measure::FFD, base);
  EXPECT_EQ(without.rows(), 2);
}

TEST(Predictors, FrequencyTableRoundTrip) {
  FrequencyTable f;
  f.add("the", 1000);
  f.add("zebra", 2.5);
  const auto p = oracle::temp_dir("freq") / "f.tsv";
  f.save(p);
  const auto g = FrequencyTable::load(p);
  EXPECT_EQ(g.count("the"), 1000.0);
  EXPECT_EQ(g.count("zebra"), 2.5);
  EXPECT_EQ(g.count("unknown"), 0.0);
}
