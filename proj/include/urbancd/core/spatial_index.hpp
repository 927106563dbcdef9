#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <queue>
#include <vector>

#include "urbancd/core/point_cloud.hpp"

namespace urbancd {

enum class Metric : std::uint8_t { xy, xyz };

// Squared distance under `metric`. Summation order is fixed (x, y, z) so the
// result is reproducible bit-for-bit by any exhaustive scan using the same
// expression.
inline double squared_distance(const Vec3& a, const Vec3& b, Metric metric) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  double d2 = dx * dx + dy * dy;
  if (metric == Metric::xyz) {
    const double dz = a.z() - b.z();
    d2 += dz * dz;
  }
  return d2;
}

struct Neighbor {
  std::size_t index = 0;  // position in the indexed cloud
  PointId id = 0;
  double sq_distance = 0.0;
  double distance() const { return std::sqrt(sq_distance); }
};

// Strict weak ordering of neighbors: distance first, lowest id on ties.
inline bool closer(const Neighbor& a, const Neighbor& b) {
  return a.sq_distance < b.sq_distance || (a.sq_distance == b.sq_distance && a.id < b.id);
}

// Immutable k-d tree over a cloud's positions. All queries are exact and
// break distance ties by lowest id, so results match an exhaustive scan.
class SpatialIndex {
 public:
  SpatialIndex(const PointCloud& cloud, Metric metric = Metric::xyz) : metric_(metric) {
    if (cloud.empty()) throw EmptyCloudError("build_index");
    points_ = cloud.points;
    ids_ = cloud.ids;
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, order_.size());
  }

  Metric metric() const noexcept { return metric_; }
  std::size_t size() const noexcept { return points_.size(); }

  Neighbor nearest(const Vec3& q) const {
    Neighbor best{0, 0, std::numeric_limits<double>::infinity()};
    best.id = std::numeric_limits<PointId>::max();
    bool found = false;
    auto any = [](std::size_t) { return true; };
    search_nearest(0, q, best, found, any);
    return best;
  }

  // Nearest point satisfying `accept(index)` with distance <= max_distance.
  template <class Pred>
  std::optional<Neighbor> nearest_if(const Vec3& q, Pred&& accept, double max_distance) const {
    Neighbor best{0, std::numeric_limits<PointId>::max(), max_distance * max_distance};
    bool found = false;
    search_nearest(0, q, best, found, accept);
    if (!found) return std::nullopt;
    return best;
  }

  // Up to k nearest neighbors, sorted closest first.
  std::vector<Neighbor> knn(const Vec3& q, std::size_t k) const {
    std::vector<Neighbor> heap;
    if (k == 0) return heap;
    heap.reserve(k + 1);
    search_knn(0, q, k, heap);
    std::sort_heap(heap.begin(), heap.end(), closer);
    return heap;
  }

  // All neighbors with distance <= r, sorted closest first.
  std::vector<Neighbor> radius(const Vec3& q, double r) const {
    std::vector<Neighbor> out;
    search_radius(0, q, r * r, out);
    std::sort(out.begin(), out.end(), closer);
    return out;
  }

  std::size_t count_within(const Vec3& q, double r) const {
    std::vector<Neighbor> out;
    search_radius(0, q, r * r, out);
    return out.size();
  }

 private:
  static constexpr std::size_t kLeafSize = 8;

  struct Node {
    std::uint32_t begin = 0, end = 0;
    std::uint32_t left = 0, right = 0;
    int dim = -1;  // -1 marks a leaf
    double split = 0.0;
  };

  std::uint32_t build(std::size_t begin, std::size_t end) {
    const auto node_index = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(Node{static_cast<std::uint32_t>(begin), static_cast<std::uint32_t>(end)});
    if (end - begin <= kLeafSize) return node_index;

    const int dims = metric_ == Metric::xyz ? 3 : 2;
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int dim = 0;
    for (int d = 1; d < dims; ++d)
      if (hi[d] - lo[d] > hi[dim] - lo[dim]) dim = d;
    if (hi[dim] == lo[dim]) return node_index;  // all coincident under the metric

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](auto a, auto b) { return points_[a][dim] < points_[b][dim]; });
    const double split = points_[order_[mid]][dim];

    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    Node& n = nodes_[node_index];
    n.dim = dim;
    n.split = split;
    n.left = left;
    n.right = right;
    return node_index;
  }

  template <class Pred>
  void search_nearest(std::uint32_t ni, const Vec3& q, Neighbor& best, bool& found,
                      Pred& accept) const {
    const Node& n = nodes_[ni];
    if (n.dim < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const auto idx = order_[i];
        const Neighbor cand{idx, ids_[idx], squared_distance(q, points_[idx], metric_)};
        if (cand.sq_distance > best.sq_distance) continue;
        if (found ? closer(cand, best) : true) {
          if (!accept(idx)) continue;
          best = cand;
          found = true;
        }
      }
      return;
    }
    const double diff = q[n.dim] - n.split;
    const auto near = diff <= 0 ? n.left : n.right;
    const auto far = diff <= 0 ? n.right : n.left;
    search_nearest(near, q, best, found, accept);
    if (diff * diff <= best.sq_distance) search_nearest(far, q, best, found, accept);
  }

  void search_knn(std::uint32_t ni, const Vec3& q, std::size_t k, std::vector<Neighbor>& heap) const {
    const Node& n = nodes_[ni];
    if (n.dim < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const auto idx = order_[i];
        const Neighbor cand{idx, ids_[idx], squared_distance(q, points_[idx], metric_)};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end(), closer);
        } else if (closer(cand, heap.front())) {
          std::pop_heap(heap.begin(), heap.end(), closer);
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end(), closer);
        }
      }
      return;
    }
    const double diff = q[n.dim] - n.split;
    const auto near = diff <= 0 ? n.left : n.right;
    const auto far = diff <= 0 ? n.right : n.left;
    search_knn(near, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.front().sq_distance) search_knn(far, q, k, heap);
  }

  void search_radius(std::uint32_t ni, const Vec3& q, double r2, std::vector<Neighbor>& out) const {
    const Node& n = nodes_[ni];
    if (n.dim < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const auto idx = order_[i];
        const double d2 = squared_distance(q, points_[idx], metric_);
        if (d2 <= r2) out.push_back(Neighbor{idx, ids_[idx], d2});
      }
      return;
    }
    const double diff = q[n.dim] - n.split;
    const auto near = diff <= 0 ? n.left : n.right;
    const auto far = diff <= 0 ? n.right : n.left;
    search_radius(near, q, r2, out);
    if (diff * diff <= r2) search_radius(far, q, r2, out);
  }

  Metric metric_;
  std::vector<Vec3> points_;
  std::vector<PointId> ids_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace urbancd
