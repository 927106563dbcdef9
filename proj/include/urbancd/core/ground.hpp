#pragma once

#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "urbancd/core/point_cloud.hpp"

namespace urbancd {

struct GroundSplit {
  PointCloud kept;
  PointCloud ground;
};

// Lowest-z band ground classifier on a square xy grid.
//
// A cell's ground level is the minimum z over the occupied cells within
// `window` cells of it (window = 0 is the plain per-cell minimum). Points at
// most `h_ground` above their cell's ground level are ground. The window lets
// roofs of buildings wider than one cell see the street level next to them.
inline GroundSplit remove_ground(const PointCloud& cloud, double cell = 4.0, double h_ground = 0.5,
                                 int window = 2) {
  if (!(cell > 0.0)) throw ConfigError("remove_ground: cell must be positive");
  if (h_ground < 0.0) throw ConfigError("remove_ground: h_ground must be non-negative");
  if (window < 0) throw ConfigError("remove_ground: window must be non-negative");
  GroundSplit split;
  if (cloud.empty()) {
    split.kept = cloud;
    split.ground = cloud;
    return split;
  }

  double x0 = cloud.points.front().x(), y0 = cloud.points.front().y();
  for (const auto& p : cloud.points) {
    x0 = std::min(x0, p.x());
    y0 = std::min(y0, p.y());
  }
  auto key = [](std::int64_t ix, std::int64_t iy) {
    return (static_cast<std::uint64_t>(ix) << 32) ^ static_cast<std::uint64_t>(iy & 0xffffffff);
  };
  std::vector<std::int64_t> cx(cloud.size()), cy(cloud.size());
  std::unordered_map<std::uint64_t, double> cell_min;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    cx[i] = static_cast<std::int64_t>(std::floor((cloud.points[i].x() - x0) / cell));
    cy[i] = static_cast<std::int64_t>(std::floor((cloud.points[i].y() - y0) / cell));
    auto [it, inserted] = cell_min.try_emplace(key(cx[i], cy[i]), cloud.points[i].z());
    if (!inserted) it->second = std::min(it->second, cloud.points[i].z());
  }

  std::unordered_map<std::uint64_t, double> level;
  std::vector<std::size_t> kept_idx, ground_idx;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto k = key(cx[i], cy[i]);
    auto it = level.find(k);
    if (it == level.end()) {
      double lo = cell_min.at(k);
      for (int dx = -window; dx <= window; ++dx)
        for (int dy = -window; dy <= window; ++dy) {
          auto nb = cell_min.find(key(cx[i] + dx, cy[i] + dy));
          if (nb != cell_min.end()) lo = std::min(lo, nb->second);
        }
      it = level.emplace(k, lo).first;
    }
    (cloud.points[i].z() <= it->second + h_ground ? ground_idx : kept_idx).push_back(i);
  }
  split.kept = select(cloud, kept_idx);
  split.ground = select(cloud, ground_idx);
  return split;
}

}  // namespace urbancd
