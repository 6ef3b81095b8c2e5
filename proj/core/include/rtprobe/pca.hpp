#pragma once

#include <cstddef>

#include <Eigen/Dense>

namespace rtprobe::mixedmodel {

inline constexpr std::size_t kDefaultComponents = 25;

struct PcaModel {
  Eigen::VectorXd mean;                // [d]
  Eigen::MatrixXd components;          // [d x K], orthonormal columns
  Eigen::VectorXd explained_variance;  // [K], sample variance, non-increasing
  Eigen::VectorXd all_variances;       // every retained singular direction, for scree output
  std::size_t k = 0;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

/// Top-K principal directions of the column-centered data. Each component's
/// largest-magnitude loading is made positive.
PcaModel pca_fit(const Eigen::MatrixXd& X, std::size_t k = kDefaultComponents);

/// (X - mean) * components.
Eigen::MatrixXd pca_project(const PcaModel& model, const Eigen::MatrixXd& X);

/// Elbow of a non-increasing variance curve: the index (1-based count of
/// components) farthest from the chord between first and last points.
std::size_t scree_elbow(const Eigen::VectorXd& variances);

}  // namespace rtprobe::mixedmodel
