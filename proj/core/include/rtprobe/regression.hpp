#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace rtprobe::regression {

enum class Penalty { None, Ridge, Lasso };

std::string penalty_name(Penalty p);
Penalty penalty_from_name(std::string_view name);

/// Fit configuration. Column 0 of X is taken to be the intercept when
/// `has_intercept` is set; it is exempt from the penalty unless
/// `penalize_intercept` is set.
///
/// Objectives (summed squared loss, penalty on the fitting coordinates):
///   none : ||y - X b||^2
///   ridge: ||y - X b||^2 + lambda * ||b_pen||_2^2
///   lasso: ||y - X b||^2 + lambda * ||b_pen||_1
/// With `standardize`, non-intercept columns are z-scored using the training
/// mean and population sd before fitting; the returned beta is mapped back.
struct FitSpec {
  Penalty penalty = Penalty::None;
  double lambda = 0.0;
  bool standardize = false;
  bool has_intercept = true;
  bool penalize_intercept = false;
  int max_iter = 100000;
  double tol = 1e-7;

  static FitSpec ols();
  static FitSpec ridge(double lambda, bool standardize = true);
  static FitSpec lasso(double lambda, bool standardize = true);
  /// Throws unless lambda == 0 exactly when penalty == None, and lambda >= 0.
  void validate() const;
};

struct FitResult {
  Eigen::VectorXd beta;  // original coordinates; beta[0] is the intercept
  Penalty penalty = Penalty::None;
  double lambda = 0.0;
  bool converged = true;
  int iterations = 0;
  double objective = 0.0;               // at the solution, fitting coordinates
  std::vector<double> objective_path;   // per coordinate-descent sweep (lasso)
  int rank = 0;                         // numerical rank of X (OLS)
};

FitResult fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const FitSpec& spec);

Eigen::VectorXd predict(const FitResult& result, const Eigen::MatrixXd& X);

double mse(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);

/// Penalized objective of `beta` on (X, y) in the given coordinates.
double objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                 const FitSpec& spec);

/// Classical OLS standard errors: sqrt(diag(s^2 (X'X)^-1)), s^2 = RSS / (n - p).
Eigen::VectorXd ols_standard_errors(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& beta);

/// Column statistics used for standardization.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // 1 for the intercept and for constant columns
  static Standardizer from(const Eigen::MatrixXd& X, bool has_intercept);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
  /// Maps coefficients fitted on apply(X) back to original coordinates.
  Eigen::VectorXd unscale(const Eigen::VectorXd& beta_std, bool has_intercept) const;
};

double soft_threshold(double z, double gamma);

}  // namespace rtprobe::regression
