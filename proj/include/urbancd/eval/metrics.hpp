#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "urbancd/change/camera.hpp"
#include "urbancd/change/change_map.hpp"
#include "urbancd/core/point_cloud.hpp"

namespace urbancd {

// Exhaustive nearest neighbor, lowest id on ties. Independent reference for
// the k-d tree; deliberately spells out its own distance arithmetic.
inline std::pair<std::size_t, double> brute_force_nn(const Vec3& q, const PointCloud& cloud, bool xy_only = false) {
  if (cloud.empty()) throw EmptyCloudError("brute_force_nn");
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    const double dx = q.x() - p.x();
    const double dy = q.y() - p.y();
    double d2 = dx * dx + dy * dy;
    if (!xy_only) {
      const double dz = q.z() - p.z();
      d2 += dz * dz;
    }
    if (d2 < best_d2 || (d2 == best_d2 && cloud.ids[i] < cloud.ids[best])) {
      best = i;
      best_d2 = d2;
    }
  }
  return {best, std::sqrt(best_d2)};
}

// Confusion counts and derived rates. Undefined ratios resolve to 1: an
// empty prediction has precision 1, an empty truth has recall 1, and an
// empty union has IoU 1.
struct Score {
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 1.0, recall = 1.0, f1 = 1.0, iou = 1.0;

  static Score from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    Score s{tp, fp, fn};
    const auto ratio = [](std::size_t num, std::size_t den) {
      return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    s.precision = ratio(tp, tp + fp);
    s.recall = ratio(tp, tp + fn);
    s.f1 = ratio(2 * tp, 2 * tp + fp + fn);
    s.iou = ratio(tp, tp + fp + fn);
    return s;
  }
};

struct GroundTruth {
  std::vector<ChangeLabel> ref;  // indexed by reference id
  std::vector<ChangeLabel> src;  // indexed by source id
};

struct EvalResult {
  Score appeared;
  Score disappeared;
  Score combined;
};

// Per-point scores: appeared over source points, disappeared over reference
// points, combined over both.
inline EvalResult eval_3d(const ChangeMap& pred, const GroundTruth& truth) {
  std::vector<std::uint8_t> hit_src(truth.src.size(), 0), hit_ref(truth.ref.size(), 0);
  for (const auto& e : pred.entries) {
    auto& hits = e.origin == Origin::src ? hit_src : hit_ref;
    if (e.id >= hits.size())
      throw InvalidParamsError("eval_3d: predicted id " + std::to_string(e.id) + " is not in the truth cloud");
    if (e.label == ChangeLabel::unchanged) continue;
    const auto expected = e.origin == Origin::src ? ChangeLabel::appeared : ChangeLabel::disappeared;
    if (e.label != expected) throw InvalidParamsError("eval_3d: change label does not match its origin cloud");
    hits[e.id] = 1;
  }
  auto score = [](const std::vector<std::uint8_t>& hits, const std::vector<ChangeLabel>& labels, ChangeLabel want,
                  std::size_t& tp, std::size_t& fp, std::size_t& fn) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool t = labels[i] == want;
      if (hits[i] && t) ++tp;
      else if (hits[i]) ++fp;
      else if (t) ++fn;
    }
  };
  std::size_t a[3] = {}, d[3] = {};
  score(hit_src, truth.src, ChangeLabel::appeared, a[0], a[1], a[2]);
  score(hit_ref, truth.ref, ChangeLabel::disappeared, d[0], d[1], d[2]);
  EvalResult r;
  r.appeared = Score::from_counts(a[0], a[1], a[2]);
  r.disappeared = Score::from_counts(d[0], d[1], d[2]);
  r.combined = Score::from_counts(a[0] + d[0], a[1] + d[1], a[2] + d[2]);
  return r;
}

// Binary image, row-major, 1 = changed.
struct Mask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {}

  std::uint8_t& at(int u, int v) { return pixels[static_cast<std::size_t>(v) * width + u]; }
  std::uint8_t at(int u, int v) const { return pixels[static_cast<std::size_t>(v) * width + u]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto p : pixels) n += p != 0;
    return n;
  }
  bool operator==(const Mask&) const = default;
};

// Stamps a filled disc of radius `radius_px` (pixel centers at integer
// coordinates) around the projection of every point whose depth lies in
// (0, range_m].
inline Mask project_points(std::span<const Vec3> points, const CameraFrame& frame, int width, int height,
                           int radius_px, double range_m) {
  Mask mask(width, height);
  const double r2 = static_cast<double>(radius_px) * radius_px;
  for (const auto& p : points) {
    const auto px = frame.project(p);
    if (!px || px->depth > range_m) continue;
    const int u0 = static_cast<int>(std::floor(px->u - radius_px)), u1 = static_cast<int>(std::ceil(px->u + radius_px));
    const int v0 = static_cast<int>(std::floor(px->v - radius_px)), v1 = static_cast<int>(std::ceil(px->v + radius_px));
    for (int v = std::max(v0, 0); v <= std::min(v1, height - 1); ++v)
      for (int u = std::max(u0, 0); u <= std::min(u1, width - 1); ++u) {
        const double du = u - px->u, dv = v - px->v;
        if (du * du + dv * dv <= r2) mask.at(u, v) = 1;
      }
  }
  return mask;
}

inline Mask project_changes(const ChangeMap& changes, const CameraFrame& frame, int width, int height,
                            int radius_px = 20, double range_m = 100.0) {
  std::vector<Vec3> pts;
  for (const auto& e : changes.entries)
    if (e.label != ChangeLabel::unchanged) pts.push_back(e.position);
  return project_points(pts, frame, width, height, radius_px, range_m);
}

struct PairIou {
  double changed = 1.0;
  double unchanged = 1.0;
  double mean() const { return 0.5 * (changed + unchanged); }
};

inline PairIou pair_iou(const Mask& pred, const Mask& truth) {
  if (pred.width != truth.width || pred.height != truth.height)
    throw ShapeMismatchError("miou: mask sizes differ");
  std::size_t inter_c = 0, union_c = 0, inter_u = 0, union_u = 0;
  for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
    const bool p = pred.pixels[i] != 0, t = truth.pixels[i] != 0;
    inter_c += p && t;
    union_c += p || t;
    inter_u += !p && !t;
    union_u += !p || !t;
  }
  auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 1.0 : static_cast<double>(a) / static_cast<double>(b); };
  return {ratio(inter_c, union_c), ratio(inter_u, union_u)};
}

// Mean over image pairs of the class-averaged (changed, unchanged) IoU.
inline double miou(std::span<const Mask> pred, std::span<const Mask> truth) {
  if (pred.size() != truth.size()) throw ShapeMismatchError("miou: different numbers of masks");
  if (pred.empty()) throw ShapeMismatchError("miou: no masks");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += pair_iou(pred[i], truth[i]).mean();
  return sum / static_cast<double>(pred.size());
}

}  // namespace urbancd
