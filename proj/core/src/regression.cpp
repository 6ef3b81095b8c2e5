#include "rtprobe/regression.hpp"

#include <algorithm>
#include <cmath>

#include "rtprobe/error.hpp"

namespace rtprobe::regression {

std::string penalty_name(Penalty p) {
  switch (p) {
    case Penalty::None: return "none";
    case Penalty::Ridge: return "ridge";
    case Penalty::Lasso: return "lasso";
  }
  return "?";
}

Penalty penalty_from_name(std::string_view name) {
  if (name == "none") return Penalty::None;
  if (name == "ridge") return Penalty::Ridge;
  if (name == "lasso") return Penalty::Lasso;
  throw ConfigError("unknown penalty: " + std::string(name));
}

FitSpec FitSpec::ols() { return FitSpec{}; }

FitSpec FitSpec::ridge(double lambda, bool standardize) {
  FitSpec s;
  s.penalty = Penalty::Ridge;
  s.lambda = lambda;
  s.standardize = standardize;
  s.validate();
  return s;
}

FitSpec FitSpec::lasso(double lambda, bool standardize) {
  FitSpec s;
  s.penalty = Penalty::Lasso;
  s.lambda = lambda;
  s.standardize = standardize;
  s.validate();
  return s;
}

void FitSpec::validate() const {
  if (!std::isfinite(lambda) || lambda < 0.0) throw ConfigError("lambda must be finite and >= 0");
  if ((penalty == Penalty::None) != (lambda == 0.0)) {
    throw ConfigError("lambda must be 0 exactly when penalty is none");
  }
  if (max_iter < 1) throw ConfigError("max_iter must be positive");
  if (!(tol > 0.0)) throw ConfigError("tol must be positive");
}

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

Standardizer Standardizer::from(const Eigen::MatrixXd& X, bool has_intercept) {
  Standardizer s;
  const auto n = static_cast<double>(X.rows());
  s.mean = Eigen::VectorXd::Zero(X.cols());
  s.scale = Eigen::VectorXd::Ones(X.cols());
  for (Eigen::Index j = has_intercept ? 1 : 0; j < X.cols(); ++j) {
    const double m = X.col(j).mean();
    const double sd = std::sqrt((X.col(j).array() - m).square().sum() / n);
    // centering is only sound when an intercept absorbs the shift
    if (has_intercept) s.mean[j] = m;
    if (sd > 1e-12 * std::max(1.0, std::abs(m))) s.scale[j] = sd;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd out = X;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (mean[j] != 0.0 || scale[j] != 1.0) out.col(j) = (X.col(j).array() - mean[j]) / scale[j];
  }
  return out;
}

Eigen::VectorXd Standardizer::unscale(const Eigen::VectorXd& beta_std, bool has_intercept) const {
  Eigen::VectorXd b = beta_std.array() / scale.array();
  if (has_intercept) b[0] = beta_std[0] - (b.tail(b.size() - 1).array() * mean.tail(mean.size() - 1).array()).sum();
  return b;
}

double objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                 const FitSpec& spec) {
  const double rss = (y - X * beta).squaredNorm();
  const Eigen::Index first = (spec.has_intercept && !spec.penalize_intercept) ? 1 : 0;
  const auto pen = beta.tail(beta.size() - first);
  switch (spec.penalty) {
    case Penalty::None: return rss;
    case Penalty::Ridge: return rss + spec.lambda * pen.squaredNorm();
    case Penalty::Lasso: return rss + spec.lambda * pen.lpNorm<1>();
  }
  return rss;
}

namespace {

// Minimizes ||y - Z b||^2 + lambda ||b||^2 with every coefficient penalized.
Eigen::VectorXd ridge_solve(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, double lambda) {
  const Eigen::Index n = Z.rows(), p = Z.cols();
  if (p == 0) return Eigen::VectorXd(0);
  if (p <= n) {
    Eigen::MatrixXd G = Z.transpose() * Z;
    G.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(G);
    if (llt.info() == Eigen::Success) return llt.solve(Z.transpose() * y);
    return G.completeOrthogonalDecomposition().solve(Z.transpose() * y);
  }
  // dual form: b = Z' (Z Z' + lambda I)^-1 y
  Eigen::MatrixXd K = Z * Z.transpose();
  K.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  Eigen::VectorXd alpha = llt.info() == Eigen::Success
                              ? Eigen::VectorXd(llt.solve(y))
                              : Eigen::VectorXd(K.completeOrthogonalDecomposition().solve(y));
  return Z.transpose() * alpha;
}

struct CdOutcome {
  Eigen::VectorXd beta;
  bool converged = false;
  int sweeps = 0;
  std::vector<double> path;
};

// Cyclic coordinate descent for ||y - Z b||^2 + lambda * sum_j w_j |b_j|.
CdOutcome lasso_cd(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, double lambda,
                   const Eigen::VectorXd& weights, int max_iter, double tol) {
  const Eigen::Index p = Z.cols();
  CdOutcome out;
  out.beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd r = y;
  const Eigen::VectorXd norms = Z.colwise().squaredNorm().transpose();
  std::vector<Eigen::Index> active;

  auto update = [&](Eigen::Index j) {
    if (norms[j] <= 0.0) return 0.0;
    const double old = out.beta[j];
    const double rho = Z.col(j).dot(r) + norms[j] * old;
    const double next = soft_threshold(rho, 0.5 * lambda * weights[j]) / norms[j];
    const double delta = next - old;
    if (delta != 0.0) {
      r.noalias() -= delta * Z.col(j);
      out.beta[j] = next;
    }
    return std::abs(delta);
  };
  auto record = [&] {
    out.path.push_back(r.squaredNorm() + lambda * (weights.array() * out.beta.array().abs()).sum());
  };

  while (out.sweeps < max_iter) {
    // full sweep over every coordinate
    double max_delta = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) max_delta = std::max(max_delta, update(j));
    ++out.sweeps;
    record();
    if (max_delta < tol) {
      out.converged = true;
      break;
    }
    // then iterate the active set to convergence
    active.clear();
    for (Eigen::Index j = 0; j < p; ++j) {
      if (out.beta[j] != 0.0) active.push_back(j);
    }
    while (out.sweeps < max_iter) {
      double d = 0.0;
      for (auto j : active) d = std::max(d, update(j));
      ++out.sweeps;
      record();
      if (d < tol) break;
    }
  }
  return out;
}

}  // namespace

FitResult fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const FitSpec& spec) {
  spec.validate();
  if (X.rows() < 1 || X.cols() < 1) throw DimensionError("fit needs n >= 1 and D >= 1");
  if (X.rows() != y.size()) throw DimensionError("X rows and y length differ");
  if (!X.allFinite() || !y.allFinite()) throw ValidationError("non-finite input to fit");

  const bool intercept = spec.has_intercept;
  Standardizer S;
  const bool do_std = spec.standardize;
  if (do_std) S = Standardizer::from(X, intercept);
  const Eigen::MatrixXd Xf = do_std ? S.apply(X) : X;
  const Eigen::Index D = X.cols();

  FitResult res;
  res.penalty = spec.penalty;
  res.lambda = spec.lambda;
  Eigen::VectorXd bf(D);

  const bool center = intercept && !spec.penalize_intercept && spec.penalty != Penalty::None;
  if (spec.penalty == Penalty::None) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Xf);
    bf = cod.solve(y);
    res.rank = static_cast<int>(cod.rank());
  } else if (center) {
    // unpenalized intercept: solve on centered data, recover intercept after
    const Eigen::MatrixXd rest = Xf.rightCols(D - 1);
    const Eigen::RowVectorXd xbar = rest.colwise().mean();
    const double ybar = y.mean();
    const Eigen::MatrixXd Z = rest.rowwise() - xbar;
    const Eigen::VectorXd yc = y.array() - ybar;
    Eigen::VectorXd b;
    if (spec.penalty == Penalty::Ridge) {
      b = ridge_solve(Z, yc, spec.lambda);
    } else {
      auto cd = lasso_cd(Z, yc, spec.lambda, Eigen::VectorXd::Ones(D - 1), spec.max_iter, spec.tol);
      b = std::move(cd.beta);
      res.converged = cd.converged;
      res.iterations = cd.sweeps;
      res.objective_path = std::move(cd.path);
    }
    bf[0] = ybar - xbar.dot(b);
    bf.tail(D - 1) = b;
  } else {
    if (spec.penalty == Penalty::Ridge) {
      bf = ridge_solve(Xf, y, spec.lambda);
    } else {
      auto cd = lasso_cd(Xf, y, spec.lambda, Eigen::VectorXd::Ones(D), spec.max_iter, spec.tol);
      bf = std::move(cd.beta);
      res.converged = cd.converged;
      res.iterations = cd.sweeps;
      res.objective_path = std::move(cd.path);
    }
  }

  res.objective = objective(Xf, y, bf, spec);
  res.beta = do_std ? S.unscale(bf, intercept) : bf;
  if (!res.beta.allFinite()) throw ValidationError("fit produced non-finite coefficients");
  return res;
}

Eigen::VectorXd predict(const FitResult& result, const Eigen::MatrixXd& X) {
  if (X.cols() != result.beta.size()) {
    throw DimensionError("predict: X has " + std::to_string(X.cols()) + " columns, beta has " +
                         std::to_string(result.beta.size()));
  }
  return X * result.beta;
}

double mse(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  if (y.size() != yhat.size()) throw DimensionError("mse: length mismatch");
  if (y.size() < 1) throw DimensionError("mse: empty input");
  return (y - yhat).squaredNorm() / static_cast<double>(y.size());
}

Eigen::VectorXd ols_standard_errors(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& beta) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (n <= p) throw DimensionError("standard errors need n > p");
  const double s2 = (y - X * beta).squaredNorm() / static_cast<double>(n - p);
  const Eigen::MatrixXd cov = (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(p, p)) * s2;
  return cov.diagonal().array().sqrt();
}

}  // namespace rtprobe::regression
