#include "fedsynth/blobs.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fedsynth {

Matrix make_blob_means(std::size_t num_classes, std::size_t dim, Rng& rng) {
  if (num_classes == 0 || dim == 0) throw std::invalid_argument("blobs: classes and dim must be positive");
  constexpr double radius = 2.0;
  Matrix means(static_cast<Eigen::Index>(num_classes), static_cast<Eigen::Index>(dim));
  if (dim == 2) {
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t k = 0; k < num_classes; ++k) {
      const double a = phase + 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(num_classes);
      means(static_cast<Eigen::Index>(k), 0) = radius * std::cos(a);
      means(static_cast<Eigen::Index>(k), 1) = radius * std::sin(a);
    }
    return means;
  }
  for (Eigen::Index k = 0; k < means.rows(); ++k) {
    for (Eigen::Index j = 0; j < means.cols(); ++j) means(k, j) = rng.normal();
    means.row(k) *= radius / means.row(k).norm();
  }
  return means;
}

Dataset sample_blobs(const Matrix& means, std::size_t points_per_class, double spread, Rng& rng) {
  if (points_per_class == 0) throw std::invalid_argument("blobs: points_per_class must be positive");
  if (!(spread >= 0.0)) throw std::invalid_argument("blobs: spread must be nonnegative");
  const auto classes = static_cast<std::size_t>(means.rows());
  Dataset raw;
  raw.num_classes = classes;
  raw.X.resize(static_cast<Eigen::Index>(classes * points_per_class), means.cols());
  for (std::size_t k = 0; k < classes; ++k)
    for (std::size_t i = 0; i < points_per_class; ++i) {
      const auto row = static_cast<Eigen::Index>(k * points_per_class + i);
      for (Eigen::Index j = 0; j < means.cols(); ++j)
        raw.X(row, j) = means(static_cast<Eigen::Index>(k), j) + spread * rng.normal();
      raw.labels.push_back(static_cast<int>(k));
    }
  const auto perm = rng.permutation(raw.size());
  return raw.subset(perm);
}

Dataset make_blobs(std::size_t num_classes, std::size_t points_per_class, std::size_t dim, double spread, Rng& rng) {
  const Matrix means = make_blob_means(num_classes, dim, rng);
  return sample_blobs(means, points_per_class, spread, rng);
}

}  // namespace fedsynth
