#pragma once

#include <span>
#include <vector>

#include "urbancd/change/detection.hpp"
#include "urbancd/eval/metrics.hpp"
#include "urbancd/io/config.hpp"
#include "urbancd/optim/registration.hpp"

namespace urbancd {

// Registers src onto ref with the configured optimizer. Direct mode starts
// from the identity warp on the default anchor grid.
inline OptimizationReport register_clouds(const PointCloud& ref, const PointCloud& src, const PipelineConfig& cfg,
                                          const StopRule& stop = {}) {
  validate(cfg);
  const auto reg = cfg.registration();
  if (cfg.mode == OptimizerMode::direct) {
    const auto grid = make_anchor_grid(ref, src, cfg.K);
    return optimize_direct(ref, src, identity_warp(grid, grid.default_sigma()), cfg.steps, reg, stop);
  }
  return optimize_network<float>(ref, src, cfg.steps, cfg.seed, reg, stop);
}

// Moves camera centers with the warp; orientations are left unchanged.
inline CameraTrajectory warp_trajectory(const CameraTrajectory& traj, const WarpParams& p) {
  CameraTrajectory out = traj;
  for (auto& f : out.frames) f.center = warp_point(f.center, p);
  return out;
}

struct PipelineResult {
  OptimizationReport registration;
  PointCloud src_warped;
  CameraTrajectory src_traj_warped;
  ChangeMap changes;
};

inline PipelineResult run_pipeline(const PointCloud& ref, const PointCloud& src, const CameraTrajectory& ref_traj,
                                   const CameraTrajectory& src_traj, const PipelineConfig& cfg,
                                   const StopRule& stop = {}) {
  PipelineResult r;
  r.registration = register_clouds(ref, src, cfg, stop);
  r.src_warped = warp_cloud(src, r.registration.final_params);
  r.src_traj_warped = warp_trajectory(src_traj, r.registration.final_params);
  r.changes = detect_changes(ref, r.src_warped, ref_traj, r.src_traj_warped, cfg.detection());
  return r;
}

// Change map of the labelled ground truth, positioned by the given clouds.
inline ChangeMap truth_changes(const PointCloud& ref, std::span<const ChangeLabel> ref_labels, const PointCloud& src,
                               std::span<const ChangeLabel> src_labels) {
  ChangeMap map;
  auto add = [&](const PointCloud& c, std::span<const ChangeLabel> labels, Origin origin, ChangeLabel want) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c.ids[i] >= labels.size()) throw ShapeMismatchError("truth_changes: missing label for id");
      if (labels[c.ids[i]] == want) map.entries.push_back(ChangeEntry{origin, c.ids[i], c.points[i], 0.0, want});
    }
  };
  add(ref, ref_labels, Origin::ref, ChangeLabel::disappeared);
  add(src, src_labels, Origin::src, ChangeLabel::appeared);
  map.canonicalize();
  return map;
}

}  // namespace urbancd
