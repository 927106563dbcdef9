#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>

#include "urbancd/core/spatial_index.hpp"

namespace urbancd {

// Flips an undirected normal so its largest-magnitude component is positive
// (first index wins on exact ties).
inline Vec3 canonicalize_normal(const Vec3& n) {
  Eigen::Index arg = 0;
  n.cwiseAbs().maxCoeff(&arg);
  return n[arg] < 0 ? Vec3(-n) : n;
}

// PCA normals from each point and its k_norm nearest neighbors. Points whose
// neighborhood is collinear (second eigenvalue <= 1e-9 of the largest) get
// the zero vector, which downstream code treats as "no normal".
inline PointCloud estimate_normals(const PointCloud& cloud, int k_norm = 16) {
  if (k_norm < 3) throw ConfigError("estimate_normals: k_norm must be >= 3");
  if (cloud.size() < static_cast<std::size_t>(k_norm) + 1)
    throw InvalidParamsError("estimate_normals: need at least k_norm + 1 points");

  const SpatialIndex index(cloud, Metric::xyz);
  PointCloud out = cloud;
  auto& normals = out.normals.emplace(cloud.size(), Vec3::Zero());

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nbrs = index.knn(cloud.points[i], static_cast<std::size_t>(k_norm) + 1);
    Vec3 mean = Vec3::Zero();
    for (const auto& nb : nbrs) mean += cloud.points[nb.index];
    mean /= static_cast<double>(nbrs.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& nb : nbrs) {
      const Vec3 d = cloud.points[nb.index] - mean;
      cov.noalias() += d * d.transpose();
    }
    cov /= static_cast<double>(nbrs.size());

    solver.compute(cov);
    const auto& ev = solver.eigenvalues();  // ascending
    if (!(ev[2] > 0.0) || ev[1] <= 1e-9 * ev[2]) continue;
    normals[i] = canonicalize_normal(solver.eigenvectors().col(0).normalized());
  }
  return out;
}

}  // namespace urbancd
