#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rtprobe/corpus.hpp"
#include "rtprobe/predictors.hpp"
#include "rtprobe/regression.hpp"

namespace rtprobe::evaluation {

inline constexpr double kAlpha = 0.001;
inline constexpr std::size_t kDefaultFolds = 10;

/// Rows of one configuration with their document (and optionally subject) labels.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::size_t> doc_of_row;
  std::vector<std::string> doc_ids;
  std::vector<std::size_t> subject_of_row;  // empty unless per-participant
  std::vector<std::string> subject_ids;
  std::size_t repr_begin = 0;
  std::size_t repr_end = 0;

  static Dataset from_design(const predictors::DesignMatrix& design);
  Eigen::Index rows() const { return X.rows(); }
  std::size_t num_docs() const { return doc_ids.size(); }
  /// Rows whose document flag is set; document/subject label spaces are kept.
  Dataset select_docs(const std::vector<bool>& keep_doc) const;
  Dataset select_doc_ids(const std::vector<std::string>& ids) const;
};

std::vector<double> lambda_grid(double lo = 0.001, double hi = 10.0, int points = 20);

struct Candidate {
  regression::Penalty penalty = regression::Penalty::None;
  double lambda = 0.0;
  double mse = std::numeric_limits<double>::quiet_NaN();
};

struct TuningChoice {
  predictors::PredictorConfig config;
  corpus::Measure measure = corpus::Measure::FFD;
  regression::Penalty chosen_penalty = regression::Penalty::None;
  double chosen_lambda = 0.0;
  double tuning_mse = 0.0;
  std::vector<Candidate> evaluated;

  regression::FitSpec spec() const;
};

struct TuneOptions {
  std::vector<regression::Penalty> penalties{regression::Penalty::None, regression::Penalty::Ridge,
                                             regression::Penalty::Lasso};
  std::vector<double> grid = lambda_grid();
};

/// Fits every candidate on `train`, scores test MSE, returns the argmin.
/// Ties prefer none > ridge > lasso, then the smaller lambda.
TuningChoice tune(const Dataset& train, const Dataset& test, const TuneOptions& options = {},
                  predictors::PredictorConfig config = {},
                  corpus::Measure measure = corpus::Measure::FFD);

/// Document -> fold map; depends only on (doc count, K, seed).
struct FoldAssignment {
  std::size_t k = 0;
  std::vector<std::size_t> fold_of_doc;
};

FoldAssignment assign_folds(std::size_t num_docs, std::size_t k, std::uint64_t seed);

using Predictor = std::function<Eigen::VectorXd(const Dataset& test)>;
using Trainer = std::function<Predictor(const Dataset& train)>;

Trainer regression_trainer(const regression::FitSpec& spec);

struct Significance {
  bool vs_permuted = false;
  bool vs_baseline = false;
  bool vs_representation = false;  // combined settings only
  bool vs_scalar = false;          // combined settings only
  double p_permuted = std::numeric_limits<double>::quiet_NaN();
  double p_baseline = std::numeric_limits<double>::quiet_NaN();
  double p_representation = std::numeric_limits<double>::quiet_NaN();
  double p_scalar = std::numeric_limits<double>::quiet_NaN();
};

struct CvResult {
  predictors::PredictorConfig config;
  corpus::Measure measure = corpus::Measure::FFD;
  std::vector<double> fold_mses;
  double mean_mse = 0.0;
  double std_mse = 0.0;
  std::vector<double> permuted_fold_mses;
  double permuted_mean_mse = 0.0;
  double permuted_std_mse = 0.0;
  std::optional<TuningChoice> tuning;
  Significance significance;

  void summarize();
};

/// Held-out MSE per fold; training on the other K-1 folds.
std::vector<double> fold_mses(const Dataset& data, const Trainer& trainer, const FoldAssignment& folds);

/// Same folds, but the training responses of each fold are permuted uniformly
/// at random (one permutation per fold, seeded by (seed, fold)). Held-out
/// responses are untouched.
std::vector<double> permuted_fold_mses(const Dataset& data, const Trainer& trainer,
                                       const FoldAssignment& folds, std::uint64_t seed);

CvResult crossvalidate(const Dataset& data, const TuningChoice& choice, const FoldAssignment& folds);
CvResult permutation_control(const Dataset& data, const TuningChoice& choice,
                             const FoldAssignment& folds, std::uint64_t seed);

/// Runs both and stores the permuted MSEs alongside the target ones.
CvResult evaluate(const Dataset& data, const Trainer& trainer, const FoldAssignment& folds,
                  std::uint64_t permutation_seed);

struct DeltaMse {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> per_fold;
};

/// Per-fold target - baseline; negative means the target predicts better.
DeltaMse delta_mse(const CvResult& target, const CvResult& baseline);

/// Sets significance flags on every result of one (language, measure) at
/// alpha = 0.001: vs its permuted control, vs baseline, and for combined
/// settings vs the representation and scalar partners at the same layer.
void mark_significance(std::vector<CvResult>& results, double alpha = kAlpha);

}  // namespace rtprobe::evaluation
