#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rtprobe/evaluation.hpp"
#include "rtprobe/pca.hpp"

namespace rtprobe::mixedmodel {

/// y = X beta + b_subject + u_item + e, crossed random intercepts, fit by ML.
struct LmmSpec {
  Eigen::MatrixXd X;  // fixed effects, intercept column included by the caller
  Eigen::VectorXd y;
  std::vector<std::size_t> subject;  // level per row
  std::vector<std::size_t> item;     // level per row
  double tol = 1e-10;
  int max_evals = 4000;
};

struct LmmFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd beta_se;
  double var_subject = 0.0;
  double var_item = 0.0;
  double var_resid = 0.0;
  double log_likelihood = 0.0;
  bool converged = false;
  bool at_boundary = false;       // a variance component estimated as exactly 0
  bool non_identifiable = false;  // a grouping factor has one level per row
  int evaluations = 0;
  std::size_t num_subjects = 0;
  std::size_t num_items = 0;
};

LmmFit lmm_fit(const LmmSpec& spec);

/// Marginal ML log-likelihood at the given parameters (beta and variances fixed).
double lmm_log_likelihood(const LmmSpec& spec, const Eigen::VectorXd& beta, double var_subject,
                          double var_item, double var_resid);

/// X * beta; random effects are left out.
Eigen::VectorXd lmm_predict_fixed(const LmmFit& fit, const Eigen::MatrixXd& X);

/// Maps labels to dense level indices in first-seen order.
std::vector<std::size_t> factorize(const std::vector<std::string>& labels);

/// Cross-validation trainer: PCA (fit on the training fold) reduces the
/// representation block to `components` columns, then an LMM is fit with
/// subjects and documents as crossed random intercepts.
evaluation::Trainer lmm_trainer(std::size_t components = kDefaultComponents);

}  // namespace rtprobe::mixedmodel
