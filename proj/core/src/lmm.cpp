#include "rtprobe/lmm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <unordered_map>

#include "rtprobe/error.hpp"

namespace rtprobe::mixedmodel {

namespace {

std::vector<std::size_t> densify(const std::vector<std::size_t>& levels, std::size_t& count) {
  std::unordered_map<std::size_t, std::size_t> map;
  std::vector<std::size_t> out;
  out.reserve(levels.size());
  for (auto l : levels) out.push_back(map.try_emplace(l, map.size()).first->second);
  count = map.size();
  return out;
}

// Cross products that do not depend on the variance ratios.
struct Moments {
  std::size_t n = 0, p = 0, ns = 0, ni = 0;
  std::vector<std::size_t> s, i;
  Eigen::MatrixXd ZtZ, ZtX, XtX;
  Eigen::VectorXd Zty, Xty;
};

Moments moments(const LmmSpec& spec) {
  Moments m;
  m.n = static_cast<std::size_t>(spec.X.rows());
  m.p = static_cast<std::size_t>(spec.X.cols());
  m.s = densify(spec.subject, m.ns);
  m.i = densify(spec.item, m.ni);
  const auto q = static_cast<Eigen::Index>(m.ns + m.ni);
  m.ZtZ = Eigen::MatrixXd::Zero(q, q);
  m.ZtX = Eigen::MatrixXd::Zero(q, spec.X.cols());
  m.Zty = Eigen::VectorXd::Zero(q);
  for (std::size_t r = 0; r < m.n; ++r) {
    const auto a = static_cast<Eigen::Index>(m.s[r]);
    const auto b = static_cast<Eigen::Index>(m.ns + m.i[r]);
    const auto row = static_cast<Eigen::Index>(r);
    m.ZtZ(a, a) += 1.0;
    m.ZtZ(b, b) += 1.0;
    m.ZtZ(a, b) += 1.0;
    m.ZtZ(b, a) += 1.0;
    m.ZtX.row(a) += spec.X.row(row);
    m.ZtX.row(b) += spec.X.row(row);
    m.Zty[a] += spec.y[row];
    m.Zty[b] += spec.y[row];
  }
  m.XtX = spec.X.transpose() * spec.X;
  m.Xty = spec.X.transpose() * spec.y;
  return m;
}

struct Profile {
  double deviance = std::numeric_limits<double>::infinity();
  Eigen::VectorXd beta;
  Eigen::MatrixXd beta_cov_unit;  // multiply by sigma^2
  double sigma2 = 0.0;
  double theta_s = 0.0, theta_i = 0.0;
};

Profile profile(const LmmSpec& spec, const Moments& m, double ts, double ti) {
  const auto q = static_cast<Eigen::Index>(m.ns + m.ni);
  Eigen::VectorXd lam(q);
  lam.head(static_cast<Eigen::Index>(m.ns)).setConstant(ts);
  lam.tail(static_cast<Eigen::Index>(m.ni)).setConstant(ti);

  Eigen::MatrixXd A = lam.asDiagonal() * m.ZtZ * lam.asDiagonal();
  A.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  const Eigen::MatrixXd B = lam.asDiagonal() * m.ZtX;
  const Eigen::VectorXd c = lam.asDiagonal() * m.Zty;
  const Eigen::MatrixXd AiB = llt.solve(B);
  const Eigen::VectorXd Aic = llt.solve(c);
  const Eigen::MatrixXd S = m.XtX - B.transpose() * AiB;
  Eigen::LDLT<Eigen::MatrixXd> sl(S);
  if (sl.info() != Eigen::Success || !sl.isPositive()) throw DimensionError("singular design");

  Profile out;
  out.theta_s = ts;
  out.theta_i = ti;
  out.beta = sl.solve(m.Xty - B.transpose() * Aic);
  const Eigen::VectorXd u = Aic - AiB * out.beta;

  double r2 = u.squaredNorm();
  const Eigen::VectorXd fitted = spec.X * out.beta;
  for (std::size_t r = 0; r < m.n; ++r) {
    const double e = spec.y[static_cast<Eigen::Index>(r)] - fitted[static_cast<Eigen::Index>(r)] -
                     ts * u[static_cast<Eigen::Index>(m.s[r])] -
                     ti * u[static_cast<Eigen::Index>(m.ns + m.i[r])];
    r2 += e * e;
  }
  const double n = static_cast<double>(m.n);
  double logdet = 0.0;
  const Eigen::MatrixXd L = llt.matrixL();
  for (Eigen::Index k = 0; k < q; ++k) logdet += 2.0 * std::log(L(k, k));
  out.sigma2 = r2 / n;
  if (!(r2 > 0.0)) {
    out.deviance = -std::numeric_limits<double>::infinity();
  } else {
    out.deviance = logdet + n * (1.0 + std::log(2.0 * std::numbers::pi * r2 / n));
  }
  out.beta_cov_unit = sl.solve(Eigen::MatrixXd::Identity(S.rows(), S.cols()));
  return out;
}

struct Minimum {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  bool converged = false;
  int evals = 0;
};

Minimum nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x0,
                    double step, double ftol, int max_evals) {
  const Eigen::Index d = x0.size();
  std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(d + 1), x0);
  std::vector<double> val(static_cast<std::size_t>(d + 1));
  Minimum out;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++out.evals;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  for (Eigen::Index k = 0; k < d; ++k) pts[static_cast<std::size_t>(k + 1)][k] += step;
  for (std::size_t k = 0; k < pts.size(); ++k) val[k] = eval(pts[k]);

  std::vector<std::size_t> order(pts.size());
  while (out.evals < max_evals) {
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return val[a] < val[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    double size = 0.0;
    for (const auto& p : pts) size = std::max(size, (p - pts[best]).cwiseAbs().maxCoeff());
    if (std::abs(val[worst] - val[best]) <= ftol * (1.0 + std::abs(val[best])) && size <= 1e-6) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (std::size_t k = 0; k < pts.size(); ++k)
      if (k != worst) centroid += pts[k];
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd xr = centroid + (centroid - pts[worst]);
    const double fr = eval(xr);
    if (fr < val[best]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        val[worst] = fe;
      } else {
        pts[worst] = xr;
        val[worst] = fr;
      }
      continue;
    }
    if (fr < val[second]) {
      pts[worst] = xr;
      val[worst] = fr;
      continue;
    }
    const bool outside = fr < val[worst];
    const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                       : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : val[worst])) {
      pts[worst] = xc;
      val[worst] = fc;
      continue;
    }
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (k == best) continue;
      pts[k] = pts[best] + 0.5 * (pts[k] - pts[best]);
      val[k] = eval(pts[k]);
    }
  }
  const auto it = std::min_element(val.begin(), val.end());
  out.x = pts[static_cast<std::size_t>(it - val.begin())];
  out.f = *it;
  return out;
}

}  // namespace

std::vector<std::size_t> factorize(const std::vector<std::string>& labels) {
  std::unordered_map<std::string, std::size_t> map;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(map.try_emplace(l, map.size()).first->second);
  return out;
}

LmmFit lmm_fit(const LmmSpec& spec) {
  const auto n = static_cast<std::size_t>(spec.X.rows());
  if (static_cast<std::size_t>(spec.y.size()) != n || spec.subject.size() != n || spec.item.size() != n)
    throw DimensionError("LMM inputs disagree on row count");
  if (!spec.X.allFinite() || !spec.y.allFinite()) throw ValidationError("non-finite LMM input");
  const Moments m = moments(spec);
  if (m.ns < 2 || m.ni < 2) throw ValidationError("LMM needs at least 2 subjects and 2 items");
  if (n <= m.p) throw DimensionError("singular design: more columns than rows");
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(spec.X);
  if (static_cast<std::size_t>(cod.rank()) < m.p) throw DimensionError("singular design");

  struct Run {
    Profile prof;
    bool converged = true;
  };
  int evals = 0;
  auto dev2 = [&](const Eigen::VectorXd& x) {
    return profile(spec, m, std::exp(x[0]), std::exp(x[1])).deviance;
  };
  std::vector<Run> runs;
  {
    const auto r = nelder_mead(dev2, Eigen::VectorXd::Zero(2), 1.0, spec.tol, spec.max_evals);
    evals += r.evals;
    runs.push_back({profile(spec, m, std::exp(r.x[0]), std::exp(r.x[1])), r.converged});
  }
  {
    auto f = [&](const Eigen::VectorXd& x) { return profile(spec, m, 0.0, std::exp(x[0])).deviance; };
    const auto r = nelder_mead(f, Eigen::VectorXd::Zero(1), 1.0, spec.tol, spec.max_evals);
    evals += r.evals;
    runs.push_back({profile(spec, m, 0.0, std::exp(r.x[0])), r.converged});
  }
  {
    auto f = [&](const Eigen::VectorXd& x) { return profile(spec, m, std::exp(x[0]), 0.0).deviance; };
    const auto r = nelder_mead(f, Eigen::VectorXd::Zero(1), 1.0, spec.tol, spec.max_evals);
    evals += r.evals;
    runs.push_back({profile(spec, m, std::exp(r.x[0]), 0.0), r.converged});
  }
  runs.push_back({profile(spec, m, 0.0, 0.0), true});

  std::size_t best = 0;
  for (std::size_t k = 1; k < runs.size(); ++k)
    if (runs[k].prof.deviance < runs[best].prof.deviance) best = k;
  const Profile& p = runs[best].prof;

  LmmFit fit;
  fit.beta = p.beta;
  fit.var_resid = p.sigma2;
  fit.var_subject = p.theta_s * p.theta_s * p.sigma2;
  fit.var_item = p.theta_i * p.theta_i * p.sigma2;
  fit.beta_se = (p.sigma2 * p.beta_cov_unit.diagonal().array()).sqrt();
  fit.log_likelihood = -0.5 * p.deviance;
  fit.converged = runs[best].converged && std::isfinite(fit.log_likelihood);
  fit.at_boundary = p.theta_s == 0.0 || p.theta_i == 0.0;
  fit.non_identifiable = m.ns == n || m.ni == n;
  fit.evaluations = evals;
  fit.num_subjects = m.ns;
  fit.num_items = m.ni;
  return fit;
}

double lmm_log_likelihood(const LmmSpec& spec, const Eigen::VectorXd& beta, double var_subject,
                          double var_item, double var_resid) {
  if (!(var_resid > 0.0) || var_subject < 0.0 || var_item < 0.0)
    throw ValidationError("variance components out of range");
  if (beta.size() != spec.X.cols()) throw DimensionError("beta length mismatch");
  const Moments m = moments(spec);
  const auto q = static_cast<Eigen::Index>(m.ns + m.ni);
  Eigen::VectorXd lam(q);
  lam.head(static_cast<Eigen::Index>(m.ns)).setConstant(std::sqrt(var_subject / var_resid));
  lam.tail(static_cast<Eigen::Index>(m.ni)).setConstant(std::sqrt(var_item / var_resid));
  Eigen::MatrixXd A = lam.asDiagonal() * m.ZtZ * lam.asDiagonal();
  A.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(A);

  const Eigen::VectorXd r = spec.y - spec.X * beta;
  Eigen::VectorXd Ztr = Eigen::VectorXd::Zero(q);
  for (std::size_t k = 0; k < m.n; ++k) {
    Ztr[static_cast<Eigen::Index>(m.s[k])] += r[static_cast<Eigen::Index>(k)];
    Ztr[static_cast<Eigen::Index>(m.ns + m.i[k])] += r[static_cast<Eigen::Index>(k)];
  }
  const Eigen::VectorXd w = lam.asDiagonal() * Ztr;
  const double quad = (r.squaredNorm() - w.dot(llt.solve(w))) / var_resid;
  double logdet = 0.0;
  const Eigen::MatrixXd L = llt.matrixL();
  for (Eigen::Index k = 0; k < q; ++k) logdet += 2.0 * std::log(L(k, k));
  const double n = static_cast<double>(m.n);
  return -0.5 * (n * std::log(2.0 * std::numbers::pi * var_resid) + logdet + quad);
}

Eigen::VectorXd lmm_predict_fixed(const LmmFit& fit, const Eigen::MatrixXd& X) {
  if (X.cols() != fit.beta.size())
    throw DimensionError("LMM prediction expects " + std::to_string(fit.beta.size()) + " columns, got " +
                         std::to_string(X.cols()));
  return X * fit.beta;
}

namespace {

struct Reducer {
  std::size_t begin = 0, end = 0;
  std::shared_ptr<PcaModel> pca;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
    if (!pca) return X;
    const Eigen::Index keep = X.cols() - static_cast<Eigen::Index>(end - begin);
    Eigen::MatrixXd out(X.rows(), keep + static_cast<Eigen::Index>(pca->k));
    const auto b = static_cast<Eigen::Index>(begin);
    const auto e = static_cast<Eigen::Index>(end);
    out.leftCols(b) = X.leftCols(b);
    out.middleCols(b, X.cols() - e) = X.rightCols(X.cols() - e);
    out.rightCols(static_cast<Eigen::Index>(pca->k)) = pca_project(*pca, X.middleCols(b, e - b));
    return out;
  }
};

}  // namespace

evaluation::Trainer lmm_trainer(std::size_t components) {
  return [components](const evaluation::Dataset& train) -> evaluation::Predictor {
    if (train.subject_of_row.empty()) throw ValidationError("LMM needs per-participant rows");
    Reducer red;
    red.begin = train.repr_begin;
    red.end = train.repr_end;
    if (red.end > red.begin) {
      const auto width = red.end - red.begin;
      const std::size_t k = std::min({components, width, static_cast<std::size_t>(train.rows())});
      red.pca = std::make_shared<PcaModel>(pca_fit(
          train.X.middleCols(static_cast<Eigen::Index>(red.begin), static_cast<Eigen::Index>(width)), k));
    }
    LmmSpec spec;
    spec.X = red.apply(train.X);
    spec.y = train.y;
    spec.subject = train.subject_of_row;
    spec.item = train.doc_of_row;
    auto fit = std::make_shared<LmmFit>(lmm_fit(spec));
    return [red, fit](const evaluation::Dataset& test) { return lmm_predict_fixed(*fit, red.apply(test.X)); };
  };
}

}  // namespace rtprobe::mixedmodel
