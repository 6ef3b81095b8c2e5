#include "rtprobe/pca.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rtprobe/error.hpp"

namespace rtprobe::mixedmodel {

PcaModel pca_fit(const Eigen::MatrixXd& X, std::size_t k) {
  const auto n = static_cast<std::size_t>(X.rows());
  const auto d = static_cast<std::size_t>(X.cols());
  if (n < 2) throw ValidationError("PCA needs at least 2 rows");
  if (k < 1 || k > std::min(n, d))
    throw ValidationError("PCA component count " + std::to_string(k) + " out of range [1, " +
                          std::to_string(std::min(n, d)) + "]");

  PcaModel m;
  m.k = k;
  m.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd centered = X.rowwise() - m.mean.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  m.all_variances = s.array().square() / static_cast<double>(n - 1);
  m.explained_variance = m.all_variances.head(static_cast<Eigen::Index>(k));
  m.components = svd.matrixV().leftCols(static_cast<Eigen::Index>(k));
  for (Eigen::Index c = 0; c < m.components.cols(); ++c) {
    Eigen::Index arg = 0;
    m.components.col(c).cwiseAbs().maxCoeff(&arg);
    if (m.components(arg, c) < 0.0) m.components.col(c) *= -1.0;
  }
  return m;
}

Eigen::MatrixXd pca_project(const PcaModel& model, const Eigen::MatrixXd& X) {
  if (static_cast<std::size_t>(X.cols()) != model.dim())
    throw DimensionError("PCA projection expects " + std::to_string(model.dim()) + " columns, got " +
                         std::to_string(X.cols()));
  return (X.rowwise() - model.mean.transpose()) * model.components;
}

std::size_t scree_elbow(const Eigen::VectorXd& v) {
  const Eigen::Index m = v.size();
  if (m <= 2) return static_cast<std::size_t>(std::max<Eigen::Index>(m, 1));
  const double x0 = 0.0, y0 = v[0], x1 = static_cast<double>(m - 1), y1 = v[m - 1];
  const double len = std::hypot(x1 - x0, y1 - y0);
  Eigen::Index best = 0;
  double best_dist = -1.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double dist = std::abs((y1 - y0) * static_cast<double>(i) - (x1 - x0) * v[i] + x1 * y0 - y1 * x0) / len;
    if (dist > best_dist) {
      best_dist = dist;
      best = i;
    }
  }
  return static_cast<std::size_t>(best + 1);
}

}  // namespace rtprobe::mixedmodel
