#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "urbancd/core/point_cloud.hpp"
#include "urbancd/core/random.hpp"
#include "urbancd/warp/rbf_warp.hpp"

namespace urbancd::testing {

inline PointCloud random_cloud(Rng& rng, std::size_t n, double extent = 50.0, double z_extent = 10.0) {
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = Vec3(rng.uniform(0, extent), rng.uniform(0, extent), rng.uniform(0, z_extent));
  return PointCloud::from_points(std::move(pts));
}

// Cloud on a coarse lattice so exact distance ties are common.
inline PointCloud lattice_cloud(Rng& rng, std::size_t n, int side = 12) {
  std::vector<Vec3> pts(n);
  for (auto& p : pts)
    p = Vec3(static_cast<double>(rng.below(side)), static_cast<double>(rng.below(side)),
             static_cast<double>(rng.below(side)));
  return PointCloud::from_points(std::move(pts));
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("urbancd_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Small registration instance for gradient checks: a source cloud, a
// reference made by warping it and adding noise, and a random nearby warp.
struct GradientInstance {
  PointCloud ref, src;
  WarpParams params;
};

inline GradientInstance gradient_instance(Rng& rng) {
  const std::size_t n_src = 20 + rng.below(181);
  const std::size_t n_ref = 20 + rng.below(181);
  const int K = rng.below(2) == 0 ? 1 : 4;
  const double extent = 20.0;

  GradientInstance g;
  g.src = random_cloud(rng, n_src, extent, 5.0);
  const auto grid = make_anchor_grid(Aabb2{Vec2(0, 0), Vec2(extent, extent)}, K);
  WarpParams truth = identity_warp(grid, rng.uniform(6, 12));
  for (int k = 0; k < K; ++k) truth.weights.row(k) << rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 0.5);
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i < n_ref; ++i) {
    const Vec3& x = g.src.points[rng.below(n_src)];
    pts.push_back(warp_point(x, truth) + Vec3(rng.normal(0, 0.3), rng.normal(0, 0.3), rng.normal(0, 0.3)));
  }
  g.ref = PointCloud::from_points(std::move(pts));

  g.params = identity_warp(grid, 1.0);
  for (int k = 0; k < K; ++k) {
    g.params.centers.row(k) += Vec2(rng.normal(0, 2), rng.normal(0, 2)).transpose();
    g.params.sigmas[k] = rng.uniform(4, 12);
    g.params.weights.row(k) << rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 0.5);
  }
  return g;
}

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr
};

inline CommandResult run_command(const std::string& cmd) {
  CommandResult r;
  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace urbancd::testing
