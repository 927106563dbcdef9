#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "urbancd/core/error.hpp"

namespace urbancd {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using PointId = std::uint32_t;

// A point set with optional per-point attributes.
//
// Normals are undirected unit vectors. A point whose normal could not be
// estimated stores the zero vector; see `has_valid_normal`.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<PointId> ids;
  std::optional<std::vector<Vec3>> normals;
  std::optional<std::vector<std::uint16_t>> track_lengths;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }

  bool has_normals() const noexcept { return normals.has_value(); }
  bool has_track_lengths() const noexcept { return track_lengths.has_value(); }

  bool has_valid_normal(std::size_t i) const {
    return normals && (*normals)[i].squaredNorm() > 0.5;
  }

  // Cloud with ids 0..n-1 in record order.
  static PointCloud from_points(std::vector<Vec3> pts) {
    PointCloud c;
    c.ids.resize(pts.size());
    std::iota(c.ids.begin(), c.ids.end(), PointId{0});
    c.points = std::move(pts);
    return c;
  }
};

// Throws InvalidParamsError when any structural invariant is violated.
inline void validate(const PointCloud& c) {
  const auto n = c.points.size();
  if (c.ids.size() != n) throw InvalidParamsError("cloud: ids/points length mismatch");
  if (c.normals && c.normals->size() != n)
    throw InvalidParamsError("cloud: normals/points length mismatch");
  if (c.track_lengths && c.track_lengths->size() != n)
    throw InvalidParamsError("cloud: track_lengths/points length mismatch");
  if (c.normals) {
    for (const auto& nv : *c.normals) {
      const double len = nv.norm();
      if (len != 0.0 && std::abs(len - 1.0) > 1e-6)
        throw InvalidParamsError("cloud: stored normal is not unit length");
    }
  }
  std::unordered_set<PointId> seen;
  seen.reserve(n);
  for (auto id : c.ids)
    if (!seen.insert(id).second) throw InvalidParamsError("cloud: duplicate id " + std::to_string(id));
}

// Subset of `c` in the order given by `indices` (positions, not ids).
inline PointCloud select(const PointCloud& c, std::span<const std::size_t> indices) {
  PointCloud out;
  out.points.reserve(indices.size());
  out.ids.reserve(indices.size());
  if (c.normals) out.normals.emplace().reserve(indices.size());
  if (c.track_lengths) out.track_lengths.emplace().reserve(indices.size());
  for (auto i : indices) {
    out.points.push_back(c.points[i]);
    out.ids.push_back(c.ids[i]);
    if (c.normals) out.normals->push_back((*c.normals)[i]);
    if (c.track_lengths) out.track_lengths->push_back((*c.track_lengths)[i]);
  }
  return out;
}

// Reorders the cloud so ids are ascending. Downstream numerics sum in storage
// order, so canonical ordering makes results independent of input order.
inline PointCloud sorted_by_id(const PointCloud& c) {
  std::vector<std::size_t> order(c.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return c.ids[a] < c.ids[b]; });
  return select(c, order);
}

struct Aabb2 {
  Vec2 min{Vec2::Constant(std::numeric_limits<double>::infinity())};
  Vec2 max{Vec2::Constant(-std::numeric_limits<double>::infinity())};

  void extend(const Vec3& p) {
    min = min.cwiseMin(p.head<2>());
    max = max.cwiseMax(p.head<2>());
  }
};

inline Aabb2 xy_bounds(std::span<const PointCloud* const> clouds) {
  Aabb2 box;
  for (const auto* c : clouds)
    for (const auto& p : c->points) box.extend(p);
  return box;
}

}  // namespace urbancd
