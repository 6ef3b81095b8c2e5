#include "rtprobe/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "rtprobe/error.hpp"
#include "rtprobe/stats.hpp"

namespace rtprobe::evaluation {

namespace {

Dataset take_rows(const Dataset& d, const std::vector<Eigen::Index>& rows) {
  Dataset out;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), d.X.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  out.doc_ids = d.doc_ids;
  out.subject_ids = d.subject_ids;
  out.repr_begin = d.repr_begin;
  out.repr_end = d.repr_end;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    out.X.row(static_cast<Eigen::Index>(i)) = d.X.row(r);
    out.y[static_cast<Eigen::Index>(i)] = d.y[r];
    out.doc_of_row.push_back(d.doc_of_row[static_cast<std::size_t>(r)]);
    if (!d.subject_of_row.empty()) out.subject_of_row.push_back(d.subject_of_row[static_cast<std::size_t>(r)]);
  }
  return out;
}

std::vector<Eigen::Index> rows_in_fold(const Dataset& d, const FoldAssignment& folds, std::size_t k,
                                       bool inside) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < d.rows(); ++r) {
    const bool in = folds.fold_of_doc[d.doc_of_row[static_cast<std::size_t>(r)]] == k;
    if (in == inside) rows.push_back(r);
  }
  return rows;
}

void check_folds(const Dataset& d, const FoldAssignment& folds) {
  if (folds.fold_of_doc.size() != d.num_docs())
    throw ValidationError("fold assignment covers " + std::to_string(folds.fold_of_doc.size()) +
                          " documents, dataset has " + std::to_string(d.num_docs()));
}

double fold_mse(const Dataset& test, const Predictor& predict) {
  const Eigen::VectorXd yhat = predict(test);
  const double m = regression::mse(test.y, yhat);
  if (!std::isfinite(m)) throw ValidationError("non-finite fold MSE");
  return m;
}

std::mt19937_64 fold_rng(std::uint64_t seed, std::size_t fold) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fold), 0x70e3u};
  return std::mt19937_64(seq);
}

}  // namespace

Dataset Dataset::from_design(const predictors::DesignMatrix& design) {
  Dataset d;
  d.X = design.X;
  d.y = design.y;
  d.doc_of_row = design.doc_of_row;
  d.doc_ids = design.doc_ids;
  d.repr_begin = design.repr_begin;
  d.repr_end = design.repr_end;
  if (!design.subject_of_row.empty()) {
    std::map<std::string, std::size_t> index;
    for (const auto& s : design.subject_of_row) index.emplace(s, 0);
    std::size_t i = 0;
    for (auto& [name, slot] : index) {
      slot = i++;
      d.subject_ids.push_back(name);
    }
    for (const auto& s : design.subject_of_row) d.subject_of_row.push_back(index.at(s));
  }
  return d;
}

Dataset Dataset::select_docs(const std::vector<bool>& keep_doc) const {
  if (keep_doc.size() != doc_ids.size()) throw DimensionError("document mask size mismatch");
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < X.rows(); ++r)
    if (keep_doc[doc_of_row[static_cast<std::size_t>(r)]]) rows.push_back(r);
  return take_rows(*this, rows);
}

Dataset Dataset::select_doc_ids(const std::vector<std::string>& ids) const {
  std::unordered_set<std::string> wanted(ids.begin(), ids.end());
  std::vector<bool> keep(doc_ids.size(), false);
  for (std::size_t i = 0; i < doc_ids.size(); ++i) keep[i] = wanted.count(doc_ids[i]) > 0;
  return select_docs(keep);
}

std::vector<double> lambda_grid(double lo, double hi, int points) {
  if (!(lo > 0.0) || !(hi >= lo) || points < 1) throw ConfigError("invalid lambda grid");
  if (points == 1) return {lo};
  std::vector<double> grid(static_cast<std::size_t>(points));
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (int i = 0; i < points; ++i)
    grid[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * i / (points - 1));
  grid.front() = lo;
  grid.back() = hi;
  return grid;
}

regression::FitSpec TuningChoice::spec() const {
  switch (chosen_penalty) {
    case regression::Penalty::Ridge:
      return regression::FitSpec::ridge(chosen_lambda);
    case regression::Penalty::Lasso:
      return regression::FitSpec::lasso(chosen_lambda);
    case regression::Penalty::None:
      break;
  }
  return regression::FitSpec::ols();
}

TuningChoice tune(const Dataset& train, const Dataset& test, const TuneOptions& options,
                  predictors::PredictorConfig config, corpus::Measure measure) {
  if (train.rows() == 0 || test.rows() == 0) throw ValidationError("degenerate tuning split");
  if (options.penalties.empty()) throw ConfigError("no penalties to tune over");

  std::vector<Candidate> candidates;
  auto rank = [](regression::Penalty p) {
    return p == regression::Penalty::None ? 0 : p == regression::Penalty::Ridge ? 1 : 2;
  };
  std::vector<regression::Penalty> penalties = options.penalties;
  std::sort(penalties.begin(), penalties.end(), [&](auto a, auto b) { return rank(a) < rank(b); });
  penalties.erase(std::unique(penalties.begin(), penalties.end()), penalties.end());
  std::vector<double> grid = options.grid;
  std::sort(grid.begin(), grid.end());
  for (auto p : penalties) {
    if (p == regression::Penalty::None) {
      candidates.push_back({p, 0.0});
    } else {
      for (double l : grid) candidates.push_back({p, l});
    }
  }

  TuningChoice choice;
  choice.config = config;
  choice.measure = measure;
  std::size_t best = 0;
  // differences below rounding noise of the response scale count as ties
  const double tie_tol = 1e-12 * test.y.squaredNorm() / static_cast<double>(test.rows());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    TuningChoice probe;
    probe.chosen_penalty = candidates[i].penalty;
    probe.chosen_lambda = candidates[i].lambda;
    const auto result = regression::fit(train.X, train.y, probe.spec());
    candidates[i].mse = regression::mse(test.y, regression::predict(result, test.X));
    if (!std::isfinite(candidates[i].mse)) throw ValidationError("non-finite tuning MSE");
    if (candidates[i].mse < candidates[best].mse - tie_tol) best = i;
  }
  choice.chosen_penalty = candidates[best].penalty;
  choice.chosen_lambda = candidates[best].lambda;
  choice.tuning_mse = candidates[best].mse;
  choice.evaluated = std::move(candidates);
  return choice;
}

FoldAssignment assign_folds(std::size_t num_docs, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("need at least 2 folds");
  if (num_docs < k)
    throw ValidationError("fewer documents (" + std::to_string(num_docs) + ") than folds (" +
                          std::to_string(k) + ")");
  std::vector<std::size_t> order(num_docs);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  FoldAssignment out;
  out.k = k;
  out.fold_of_doc.assign(num_docs, 0);
  for (std::size_t i = 0; i < num_docs; ++i) out.fold_of_doc[order[i]] = i % k;
  return out;
}

Trainer regression_trainer(const regression::FitSpec& spec) {
  return [spec](const Dataset& train) -> Predictor {
    auto result = std::make_shared<regression::FitResult>(regression::fit(train.X, train.y, spec));
    return [result](const Dataset& test) { return regression::predict(*result, test.X); };
  };
}

void CvResult::summarize() {
  mean_mse = stats::mean(fold_mses);
  std_mse = stats::sample_sd(fold_mses);
  if (!permuted_fold_mses.empty()) {
    permuted_mean_mse = stats::mean(permuted_fold_mses);
    permuted_std_mse = stats::sample_sd(permuted_fold_mses);
  }
}

std::vector<double> fold_mses(const Dataset& data, const Trainer& trainer, const FoldAssignment& folds) {
  check_folds(data, folds);
  std::vector<double> out(folds.k);
  for (std::size_t k = 0; k < folds.k; ++k) {
    const auto test_rows = rows_in_fold(data, folds, k, true);
    if (test_rows.empty()) throw ValidationError("fold " + std::to_string(k) + " has no rows");
    const Dataset train = take_rows(data, rows_in_fold(data, folds, k, false));
    const Dataset test = take_rows(data, test_rows);
    out[k] = fold_mse(test, trainer(train));
  }
  return out;
}

std::vector<double> permuted_fold_mses(const Dataset& data, const Trainer& trainer,
                                       const FoldAssignment& folds, std::uint64_t seed) {
  check_folds(data, folds);
  std::vector<double> out(folds.k);
  for (std::size_t k = 0; k < folds.k; ++k) {
    const auto test_rows = rows_in_fold(data, folds, k, true);
    if (test_rows.empty()) throw ValidationError("fold " + std::to_string(k) + " has no rows");
    Dataset train = take_rows(data, rows_in_fold(data, folds, k, false));
    const Dataset test = take_rows(data, test_rows);
    auto rng = fold_rng(seed, k);
    std::shuffle(train.y.begin(), train.y.end(), rng);
    out[k] = fold_mse(test, trainer(train));
  }
  return out;
}

CvResult crossvalidate(const Dataset& data, const TuningChoice& choice, const FoldAssignment& folds) {
  CvResult r;
  r.config = choice.config;
  r.measure = choice.measure;
  r.tuning = choice;
  r.fold_mses = fold_mses(data, regression_trainer(choice.spec()), folds);
  r.summarize();
  return r;
}

CvResult permutation_control(const Dataset& data, const TuningChoice& choice,
                             const FoldAssignment& folds, std::uint64_t seed) {
  CvResult r;
  r.config = choice.config;
  r.measure = choice.measure;
  r.tuning = choice;
  r.fold_mses = permuted_fold_mses(data, regression_trainer(choice.spec()), folds, seed);
  r.summarize();
  return r;
}

CvResult evaluate(const Dataset& data, const Trainer& trainer, const FoldAssignment& folds,
                  std::uint64_t permutation_seed) {
  CvResult r;
  r.fold_mses = fold_mses(data, trainer, folds);
  r.permuted_fold_mses = permuted_fold_mses(data, trainer, folds, permutation_seed);
  r.summarize();
  return r;
}

DeltaMse delta_mse(const CvResult& target, const CvResult& baseline) {
  if (target.fold_mses.size() != baseline.fold_mses.size() || target.measure != baseline.measure)
    throw ValidationError("fold mismatch between target and baseline");
  DeltaMse d;
  d.per_fold.resize(target.fold_mses.size());
  for (std::size_t i = 0; i < d.per_fold.size(); ++i)
    d.per_fold[i] = target.fold_mses[i] - baseline.fold_mses[i];
  d.mean = stats::mean(d.per_fold);
  d.std = stats::sample_sd(d.per_fold);
  return d;
}

void mark_significance(std::vector<CvResult>& results, double alpha) {
  using predictors::Family;
  const CvResult* baseline = nullptr;
  for (const auto& r : results)
    if (r.config.family == Family::Baseline) baseline = &r;
  if (baseline == nullptr) throw ValidationError("missing partner result: baseline");

  auto find = [&](Family f, std::optional<int> layer) -> const CvResult* {
    if (!predictors::is_layerwise(f)) layer.reset();
    for (const auto& r : results)
      if (r.config.family == f && r.config.layer == layer) return &r;
    return nullptr;
  };
  auto p_less = [](const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ValidationError("fold mismatch in significance test");
    return stats::paired_t_test_less(a, b);
  };

  std::vector<Significance> flags(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    auto& s = flags[i];
    if (r.permuted_fold_mses.empty())
      throw ValidationError("missing partner result: permuted control for " + r.config.label());
    s.p_permuted = p_less(r.fold_mses, r.permuted_fold_mses);
    s.vs_permuted = s.p_permuted < alpha;
    if (r.config.family != Family::Baseline) {
      s.p_baseline = p_less(r.fold_mses, baseline->fold_mses);
      s.vs_baseline = s.p_baseline < alpha;
    }
    if (const auto scalar = predictors::scalar_component(r.config.family)) {
      const CvResult* repr = find(Family::Representation, r.config.layer);
      const CvResult* sc = find(*scalar, r.config.layer);
      if (repr == nullptr)
        throw ValidationError("missing partner result: representation for " + r.config.label());
      if (sc == nullptr)
        throw ValidationError("missing partner result: " + predictors::family_name(*scalar) +
                              " for " + r.config.label());
      s.p_representation = p_less(r.fold_mses, repr->fold_mses);
      s.vs_representation = s.p_representation < alpha;
      s.p_scalar = p_less(r.fold_mses, sc->fold_mses);
      s.vs_scalar = s.p_scalar < alpha;
    }
  }
  for (std::size_t i = 0; i < results.size(); ++i) results[i].significance = flags[i];
}

}  // namespace rtprobe::evaluation
