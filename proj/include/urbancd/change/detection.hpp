#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "urbancd/change/camera.hpp"
#include "urbancd/change/change_map.hpp"
#include "urbancd/core/ground.hpp"
#include "urbancd/core/normals.hpp"
#include "urbancd/core/spatial_index.hpp"

namespace urbancd {

struct ChangeDetectionConfig {
  int tau_ss = 7;           // minimum track length kept by subsampling (inclusive)
  double delta_cd = 10.0;   // response clamp, meters
  int k_mean = 7;           // neighbors in the response mean filter
  double tau_cd = 2.0;      // minimum filtered response of a change, meters
  int k_norm = 16;
  double ground_cell = 4.0;
  double h_ground = 0.5;
  int ground_window = 2;
  double normal_tol_deg = 40.0;
  double r_iso = 2.0;
  int n_iso = 5;
  double r_pop = 1.0;
};

inline PointCloud subsample_by_track(const PointCloud& cloud, int tau_ss) {
  if (!cloud.track_lengths) throw InvalidParamsError("subsample_by_track: cloud has no track lengths");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (static_cast<int>((*cloud.track_lengths)[i]) >= tau_ss) keep.push_back(i);
  return select(cloud, keep);
}

// Clamped distance from each query point to the nearest target point whose
// undirected normal is within `normal_tol_deg` of its own. Points without a
// valid normal (on either side) skip the normal test.
inline std::vector<double> change_response(const PointCloud& query, const PointCloud& target, double delta_cd,
                                           double normal_tol_deg) {
  if (target.empty()) throw EmptyCloudError("change_response target");
  if (!query.normals || !target.normals) throw InvalidParamsError("change_response: both clouds need normals");
  const SpatialIndex index(target, Metric::xyz);
  const double cos_tol = std::cos(normal_tol_deg * std::numbers::pi / 180.0);
  const auto& tn = *target.normals;

  std::vector<double> out(query.size(), delta_cd);
  for (std::size_t i = 0; i < query.size(); ++i) {
    const bool own = query.has_valid_normal(i);
    const Vec3 n = (*query.normals)[i];
    auto compatible = [&](std::size_t j) {
      return !own || !target.has_valid_normal(j) || std::abs(n.dot(tn[j])) >= cos_tol;
    };
    if (auto nb = index.nearest_if(query.points[i], compatible, delta_cd))
      out[i] = std::min(nb->distance(), delta_cd);
  }
  return out;
}

struct DirectionResponses {
  PointCloud candidates;  // subsampled query cloud
  std::vector<double> responses;
};

struct DualResponses {
  DirectionResponses appeared;     // subsampled source vs full reference
  DirectionResponses disappeared;  // subsampled reference vs full source
};

// Each direction compares the subsampled cloud of one traversal against the
// full cloud of the other. Expects ground-removed clouds with normals.
inline DualResponses dual_threshold_compare(const PointCloud& ref, const PointCloud& src_warped,
                                            const ChangeDetectionConfig& cfg) {
  DualResponses out;
  out.appeared.candidates = subsample_by_track(src_warped, cfg.tau_ss);
  out.disappeared.candidates = subsample_by_track(ref, cfg.tau_ss);
  if (out.appeared.candidates.empty()) throw EmptyCloudError("subsampled source");
  if (out.disappeared.candidates.empty()) throw EmptyCloudError("subsampled reference");
  out.appeared.responses = change_response(out.appeared.candidates, ref, cfg.delta_cd, cfg.normal_tol_deg);
  out.disappeared.responses = change_response(out.disappeared.candidates, src_warped, cfg.delta_cd, cfg.normal_tol_deg);
  return out;
}

// Mean of each response with those of its k nearest neighbors in `cloud`.
inline std::vector<double> mean_filter(const PointCloud& cloud, std::span<const double> responses, int k) {
  if (k < 0) throw ConfigError("mean_filter: k must be >= 0");
  if (responses.size() != cloud.size()) throw ShapeMismatchError("mean_filter: one response per point required");
  if (k == 0 || cloud.empty()) return {responses.begin(), responses.end()};
  const SpatialIndex index(cloud, Metric::xyz);
  std::vector<double> out(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto nbrs = index.knn(cloud.points[i], static_cast<std::size_t>(k) + 1);
    auto self = std::find_if(nbrs.begin(), nbrs.end(), [&](const auto& nb) { return nb.index == i; });
    if (self != nbrs.end())
      nbrs.erase(self);
    else if (nbrs.size() > static_cast<std::size_t>(k))
      nbrs.pop_back();
    double sum = responses[i];
    for (const auto& nb : nbrs) sum += responses[nb.index];
    out[i] = sum / static_cast<double>(nbrs.size() + 1);
  }
  return out;
}

// Positions of points with response >= tau_cd that have at least n_iso other
// points within r_iso whose responses also reach tau_cd.
inline std::vector<std::size_t> threshold_and_suppress(const PointCloud& cloud, std::span<const double> responses,
                                                       double tau_cd, double r_iso, int n_iso) {
  if (responses.size() != cloud.size()) throw ShapeMismatchError("threshold_and_suppress: one response per point");
  std::vector<std::size_t> high;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (responses[i] >= tau_cd) high.push_back(i);
  if (high.empty()) return {};
  const PointCloud strong = select(cloud, high);
  const SpatialIndex index(strong, Metric::xyz);
  std::vector<std::size_t> keep;
  for (std::size_t h = 0; h < high.size(); ++h) {
    const auto others = index.count_within(strong.points[h], r_iso) - 1;
    if (static_cast<long long>(others) >= n_iso) keep.push_back(high[h]);
  }
  return keep;
}

inline bool visible_from(const CameraTrajectory& traj, const Vec3& p) {
  return std::any_of(traj.frames.begin(), traj.frames.end(), [&](const auto& f) { return f.sees(p); });
}

// Positions of points inside at least one frustum of `traj`.
inline std::vector<std::size_t> fov_visible(const PointCloud& cloud, const CameraTrajectory& traj) {
  if (traj.empty()) throw InvalidParamsError("fov_filter: trajectory has no frames");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (visible_from(traj, cloud.points[i])) keep.push_back(i);
  return keep;
}

inline PointCloud fov_filter(const PointCloud& candidates, const CameraTrajectory& other_traj) {
  const auto keep = fov_visible(candidates, other_traj);
  return select(candidates, keep);
}

struct Repopulated {
  PointCloud cloud;                    // ascending ids
  std::vector<std::size_t> parent;     // per output point, its nearest changed point
};

// `changed` plus every point of `original_full` within r_pop of a changed
// point, matched by id.
inline Repopulated repopulate(const PointCloud& changed, const PointCloud& original_full, double r_pop) {
  Repopulated out;
  if (changed.empty()) return out;
  std::vector<std::size_t> parents;
  std::vector<PointId> seen(changed.ids);
  std::sort(seen.begin(), seen.end());
  PointCloud merged = changed;
  for (std::size_t i = 0; i < changed.size(); ++i) parents.push_back(i);
  if (r_pop > 0.0) {
    const SpatialIndex index(changed, Metric::xyz);
    std::vector<std::size_t> added;
    for (std::size_t j = 0; j < original_full.size(); ++j) {
      if (std::binary_search(seen.begin(), seen.end(), original_full.ids[j])) continue;
      auto always = [](std::size_t) { return true; };
      if (auto nb = index.nearest_if(original_full.points[j], always, r_pop)) {
        added.push_back(j);
        parents.push_back(nb->index);
      }
    }
    const PointCloud extra = select(original_full, added);
    merged.points.insert(merged.points.end(), extra.points.begin(), extra.points.end());
    merged.ids.insert(merged.ids.end(), extra.ids.begin(), extra.ids.end());
    if (merged.normals && extra.normals)
      merged.normals->insert(merged.normals->end(), extra.normals->begin(), extra.normals->end());
    else
      merged.normals.reset();
    if (merged.track_lengths && extra.track_lengths)
      merged.track_lengths->insert(merged.track_lengths->end(), extra.track_lengths->begin(), extra.track_lengths->end());
    else
      merged.track_lengths.reset();
  }
  std::vector<std::size_t> by_id(merged.size());
  for (std::size_t i = 0; i < by_id.size(); ++i) by_id[i] = i;
  std::sort(by_id.begin(), by_id.end(), [&](auto a, auto b) { return merged.ids[a] < merged.ids[b]; });
  out.cloud = select(merged, by_id);
  for (auto i : by_id) out.parent.push_back(parents[i]);
  return out;
}

namespace detail {

inline void detect_direction(const DirectionResponses& dir, const PointCloud& full_same,
                             const CameraTrajectory& other_traj, const ChangeDetectionConfig& cfg, Origin origin,
                             ChangeLabel label, ChangeMap& map) {
  const auto filtered = mean_filter(dir.candidates, dir.responses, cfg.k_mean);
  const auto strong = threshold_and_suppress(dir.candidates, filtered, cfg.tau_cd, cfg.r_iso, cfg.n_iso);
  const PointCloud strong_cloud = select(dir.candidates, strong);
  const auto visible = fov_visible(strong_cloud, other_traj);
  std::vector<std::size_t> changed_idx;
  for (auto v : visible) changed_idx.push_back(strong[v]);
  const PointCloud changed = select(dir.candidates, changed_idx);

  const auto pop = repopulate(changed, full_same, cfg.r_pop);
  for (std::size_t i = 0; i < pop.cloud.size(); ++i) {
    const Vec3& p = pop.cloud.points[i];
    // Repopulated points obey the same visibility rule as detected ones.
    if (!visible_from(other_traj, p)) continue;
    map.entries.push_back(ChangeEntry{origin, pop.cloud.ids[i], p, filtered[changed_idx[pop.parent[i]]], label});
  }
}

}  // namespace detail

// Full comparison of a reference cloud and a registered source cloud:
// ground removal, normals, dual-threshold responses, mean filter, threshold
// with isolation suppression, visibility against the other traversal's
// cameras and repopulation from the pre-subsampling cloud.
inline ChangeMap detect_changes(const PointCloud& ref, const PointCloud& src_warped, const CameraTrajectory& traj_ref,
                                const CameraTrajectory& traj_src, const ChangeDetectionConfig& cfg) {
  if (ref.empty()) throw EmptyCloudError("detect_changes reference");
  if (src_warped.empty()) throw EmptyCloudError("detect_changes source");
  if (traj_ref.empty() || traj_src.empty()) throw InvalidParamsError("detect_changes: empty trajectory");

  const auto ref_split = remove_ground(ref, cfg.ground_cell, cfg.h_ground, cfg.ground_window);
  const auto src_split = remove_ground(src_warped, cfg.ground_cell, cfg.h_ground, cfg.ground_window);
  const PointCloud ref_full = estimate_normals(ref_split.kept, cfg.k_norm);
  const PointCloud src_full = estimate_normals(src_split.kept, cfg.k_norm);

  const auto dual = dual_threshold_compare(ref_full, src_full, cfg);
  ChangeMap map;
  detail::detect_direction(dual.appeared, src_full, traj_ref, cfg, Origin::src, ChangeLabel::appeared, map);
  detail::detect_direction(dual.disappeared, ref_full, traj_src, cfg, Origin::ref, ChangeLabel::disappeared, map);
  map.canonicalize();
  return map;
}

}  // namespace urbancd
