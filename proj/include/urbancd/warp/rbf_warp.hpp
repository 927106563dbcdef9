#pragma once

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <vector>

#include "urbancd/core/point_cloud.hpp"

namespace urbancd {

// Gaussian RBF displacement field with K anchors. The kernel distance is
// measured in the xy plane only; displacements are full 3D.
//
// Flat layout used by optimizers and files (6K scalars):
//   [c_1x, c_1y, ..., c_Kx, c_Ky, sigma_1..sigma_K, w_1x, w_1y, w_1z, ...]
struct WarpParams {
  Eigen::MatrixX2d centers;
  Eigen::VectorXd sigmas;
  Eigen::MatrixX3d weights;

  Eigen::Index anchor_count() const noexcept { return centers.rows(); }
  Eigen::Index scalar_count() const noexcept { return 6 * centers.rows(); }

  Eigen::VectorXd flatten() const {
    const auto K = anchor_count();
    Eigen::VectorXd v(6 * K);
    for (Eigen::Index k = 0; k < K; ++k) {
      v[2 * k] = centers(k, 0);
      v[2 * k + 1] = centers(k, 1);
      v[2 * K + k] = sigmas[k];
      for (int c = 0; c < 3; ++c) v[3 * K + 3 * k + c] = weights(k, c);
    }
    return v;
  }

  static WarpParams unflatten(const Eigen::VectorXd& v) {
    if (v.size() % 6 != 0) throw ShapeMismatchError("warp params: flat size must be a multiple of 6");
    const auto K = v.size() / 6;
    WarpParams p;
    p.centers.resize(K, 2);
    p.sigmas.resize(K);
    p.weights.resize(K, 3);
    for (Eigen::Index k = 0; k < K; ++k) {
      p.centers(k, 0) = v[2 * k];
      p.centers(k, 1) = v[2 * k + 1];
      p.sigmas[k] = v[2 * K + k];
      for (int c = 0; c < 3; ++c) p.weights(k, c) = v[3 * K + 3 * k + c];
    }
    return p;
  }
};

inline void validate(const WarpParams& p) {
  const auto K = p.anchor_count();
  if (p.sigmas.size() != K || p.weights.rows() != K)
    throw ShapeMismatchError("warp params: centers/sigmas/weights disagree on K");
  for (Eigen::Index k = 0; k < K; ++k)
    if (!(p.sigmas[k] > 0.0)) throw InvalidParamsError("warp params: sigma must be > 0");
}

// Uniform side x side grid over an xy box, corners included.
struct AnchorGrid {
  std::vector<Vec2> centers;
  int side = 0;
  Vec2 spacing = Vec2::Zero();

  // Bandwidth that makes neighboring Gaussians overlap at about e^-1.
  double default_sigma() const {
    const double s = spacing.maxCoeff();
    return s > 0.0 ? s : 1.0;
  }
};

inline AnchorGrid make_anchor_grid(const Aabb2& box, int K) {
  if (K < 1) throw ConfigError("anchor grid: K must be positive");
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(K))));
  if (side * side != K) throw ConfigError("anchor grid: K=" + std::to_string(K) + " is not a perfect square");
  AnchorGrid grid;
  grid.side = side;
  if (side == 1) {
    grid.centers.push_back(0.5 * (box.min + box.max));
    grid.spacing = box.max - box.min;
    return grid;
  }
  grid.spacing = (box.max - box.min) / static_cast<double>(side - 1);
  // Row-major with x varying slowest: (x0,y0), (x0,y1), ...
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j)
      grid.centers.emplace_back(box.min.x() + i * grid.spacing.x(), box.min.y() + j * grid.spacing.y());
  return grid;
}

inline AnchorGrid make_anchor_grid(const PointCloud& ref, const PointCloud& src, int K) {
  if (ref.empty() || src.empty()) throw EmptyCloudError("make_anchor_grid");
  const PointCloud* clouds[] = {&ref, &src};
  return make_anchor_grid(xy_bounds(clouds), K);
}

// Zero-displacement parameters anchored on `grid`.
inline WarpParams identity_warp(const AnchorGrid& grid, double sigma) {
  const auto K = static_cast<Eigen::Index>(grid.centers.size());
  WarpParams p;
  p.centers.resize(K, 2);
  for (Eigen::Index k = 0; k < K; ++k) p.centers.row(k) = grid.centers[k].transpose();
  p.sigmas = Eigen::VectorXd::Constant(K, sigma);
  p.weights = Eigen::MatrixX3d::Zero(K, 3);
  return p;
}

inline Eigen::VectorXd kernel_row(const Vec3& x, const WarpParams& p) {
  const auto K = p.anchor_count();
  Eigen::VectorXd phi(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const double dx = x.x() - p.centers(k, 0);
    const double dy = x.y() - p.centers(k, 1);
    const double s = p.sigmas[k];
    phi[k] = std::exp(-(dx * dx + dy * dy) / (s * s));
  }
  return phi;
}

// phi . W, accumulated in anchor order.
inline Vec3 displacement(const Eigen::Ref<const Eigen::VectorXd>& phi, const WarpParams& p) {
  Vec3 d = Vec3::Zero();
  for (Eigen::Index k = 0; k < phi.size(); ++k) d += phi[k] * p.weights.row(k).transpose();
  return d;
}

inline Vec3 warp_point(const Vec3& x, const WarpParams& p) {
  return x + displacement(kernel_row(x, p), p);
}

inline PointCloud warp_cloud(const PointCloud& cloud, const WarpParams& p) {
  PointCloud out = cloud;
  for (auto& x : out.points) x = warp_point(x, p);
  out.normals.reset();  // stale after a non-rigid warp
  return out;
}

}  // namespace urbancd
