#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "urbancd/change/camera.hpp"
#include "urbancd/change/change_map.hpp"
#include "urbancd/core/random.hpp"
#include "urbancd/warp/rbf_warp.hpp"

namespace urbancd {

// Parameters of a synthetic street scene: box "buildings" on lots along both
// sides of a street running along +x, a flat ground plane, two side-looking
// camera rigs driving down the street, and a smooth RBF drift applied to the
// second traversal.
struct SceneRecipe {
  std::string name = "custom";
  double street_length = 100.0;
  double street_half_width = 6.0;
  double setback = 6.0;
  int lots_per_side = 5;
  double building_width_min = 9.0, building_width_max = 13.0;
  double building_depth_min = 8.0, building_depth_max = 14.0;
  double building_height_min = 6.0, building_height_max = 12.0;
  double surface_spacing = 1.0;
  double ground_spacing = 1.5;
  double clutter_fraction = 0.05;
  double noise_sigma = 0.05;
  int drift_side = 3;
  double drift_xy = 1.0;
  double drift_z = 0.2;
  int appeared = 2;
  int disappeared = 2;
  bool unobserved_structure = true;  // a building only the source rig ever sees
  double camera_height = 2.0;
  double frame_step = 4.0;
  double hfov_half_deg = 55.0;
  double vfov_half_deg = 50.0;
  double camera_range = 100.0;
  int image_width = 640;
  int image_height = 480;

  // Change-free drift instance used to benchmark registration.
  static SceneRecipe drift() {
    SceneRecipe r;
    r.name = "drift";
    r.appeared = 0;
    r.disappeared = 0;
    r.unobserved_structure = false;
    r.clutter_fraction = 0.02;
    return r;
  }

  // Two appeared, two disappeared and one unobserved structure.
  static SceneRecipe changes() {
    SceneRecipe r;
    r.name = "default";
    return r;
  }

  static SceneRecipe named(const std::string& name) {
    if (name == "default" || name == "changes" || name == "acceptance") return changes();
    if (name == "drift") return drift();
    throw ConfigError("unknown scene recipe '" + name + "' (expected default|drift)");
  }
};

inline void validate(const SceneRecipe& r) {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0)) throw ConfigError(std::string("recipe: ") + what + " must be positive");
  };
  positive(r.street_length, "street_length");
  positive(r.surface_spacing, "surface_spacing");
  positive(r.ground_spacing, "ground_spacing");
  positive(r.frame_step, "frame_step");
  positive(r.camera_range, "camera_range");
  positive(r.building_height_min, "building_height_min");
  if (r.lots_per_side < 1) throw ConfigError("recipe: need at least one structure");
  if (r.noise_sigma < 0.0 || r.clutter_fraction < 0.0) throw ConfigError("recipe: negative noise or clutter");
  if (r.appeared < 0 || r.disappeared < 0 || r.appeared + r.disappeared > 2 * r.lots_per_side)
    throw ConfigError("recipe: more injected changes than lots");
  if (r.building_width_max > r.street_length / r.lots_per_side - 4.0)
    throw ConfigError("recipe: buildings do not fit their lots");
  if (r.drift_side < 1) throw ConfigError("recipe: drift_side must be >= 1");
  if (r.image_width < 1 || r.image_height < 1) throw ConfigError("recipe: image size must be positive");
}

struct SceneStructure {
  Vec3 lo = Vec3::Zero(), hi = Vec3::Zero();  // axis-aligned box
  bool in_ref = true, in_src = true;
  ChangeLabel truth = ChangeLabel::unchanged;
};

struct SyntheticScene {
  SceneRecipe recipe;
  std::uint64_t seed = 0;
  PointCloud ref, src;
  std::vector<ChangeLabel> ref_labels, src_labels;  // indexed by id
  std::vector<std::int64_t> src_counterpart;         // ref id of the same surface sample, or -1
  std::vector<SceneStructure> structures;
  WarpParams drift;  // applied to world positions to produce the source
  CameraTrajectory ref_traj, src_traj;
};

namespace detail {

struct Sample {
  Vec3 p;
  int structure = -1;  // -1 for ground
  int track = 0;
};

inline void sample_box(const SceneStructure& s, int index, double spacing, Rng& rng, std::vector<Sample>& out) {
  const Vec3 size = s.hi - s.lo;
  auto face = [&](auto&& place, double len_u, double len_v) {
    const int nu = std::max(1, static_cast<int>(std::round(len_u / spacing)));
    const int nv = std::max(1, static_cast<int>(std::round(len_v / spacing)));
    const int track = static_cast<int>(rng.integer(8, 20));
    for (int i = 0; i < nu; ++i)
      for (int j = 0; j < nv; ++j) {
        const double u = (i + 0.5 + rng.uniform(-0.25, 0.25)) * len_u / nu;
        const double v = (j + 0.5 + rng.uniform(-0.25, 0.25)) * len_v / nv;
        out.push_back(Sample{place(u, v), index, track + static_cast<int>(rng.integer(-3, 3))});
      }
  };
  face([&](double u, double v) { return Vec3(s.lo.x() + u, s.lo.y(), v); }, size.x(), size.z());
  face([&](double u, double v) { return Vec3(s.lo.x() + u, s.hi.y(), v); }, size.x(), size.z());
  face([&](double u, double v) { return Vec3(s.lo.x(), s.lo.y() + u, v); }, size.y(), size.z());
  face([&](double u, double v) { return Vec3(s.hi.x(), s.lo.y() + u, v); }, size.y(), size.z());
  face([&](double u, double v) { return Vec3(s.lo.x() + u, s.lo.y() + v, s.hi.z()); }, size.x(), size.y());
}

inline bool in_footprint(const SceneStructure& s, const Vec3& p) {
  return p.x() >= s.lo.x() && p.x() <= s.hi.x() && p.y() >= s.lo.y() && p.y() <= s.hi.y();
}

inline Vec3 truncated_noise(Rng& rng, double sigma) {
  if (sigma <= 0.0) return Vec3::Zero();
  for (;;) {
    Vec3 n(rng.normal(0.0, sigma), rng.normal(0.0, sigma), rng.normal(0.0, sigma));
    if (n.norm() <= 3.0 * sigma) return n;
  }
}

inline std::uint16_t clamp_track(int t) { return static_cast<std::uint16_t>(std::clamp(t, 1, 65535)); }

inline CameraTrajectory make_rig(double x_end, const SceneRecipe& r, std::int64_t first_id) {
  CameraTrajectory traj;
  const double fx = 0.5 * r.image_width / std::tan(r.hfov_half_deg * std::numbers::pi / 180.0);
  const double fy = 0.5 * r.image_height / std::tan(r.vfov_half_deg * std::numbers::pi / 180.0);
  std::int64_t id = first_id;
  for (double x = 0.0; x <= x_end + 1e-9; x += r.frame_step)
    for (double yaw : {std::numbers::pi / 2, -std::numbers::pi / 2}) {
      CameraFrame f;
      f.frame_id = id;
      f.t = 0.25 * static_cast<double>(id - first_id);
      ++id;
      f.center = Vec3(x, 0.0, r.camera_height);
      f.orientation = yaw_quaternion(yaw);
      f.hfov_half_deg = r.hfov_half_deg;
      f.vfov_half_deg = r.vfov_half_deg;
      f.fx = fx;
      f.fy = fy;
      f.px = 0.5 * r.image_width;
      f.py = 0.5 * r.image_height;
      f.range = r.camera_range;
      traj.frames.push_back(f);
    }
  return traj;
}

}  // namespace detail

// Fixed-point inverse of a small warp: finds x with warp_point(x) = y.
inline Vec3 invert_warp_point(const Vec3& y, const WarpParams& p, int iterations = 100) {
  Vec3 x = y;
  for (int i = 0; i < iterations; ++i) x = y - displacement(kernel_row(x, p), p);
  return x;
}

// Deterministic function of (recipe, seed).
inline SyntheticScene generate_scene(const SceneRecipe& recipe, std::uint64_t seed) {
  validate(recipe);
  Rng rng(seed);
  SyntheticScene scene;
  scene.recipe = recipe;
  scene.seed = seed;

  // Lots on both sides of the street, then change assignment.
  const double lot = recipe.street_length / recipe.lots_per_side;
  const double near_y = recipe.street_half_width + recipe.setback;
  for (int side : {1, -1})
    for (int i = 0; i < recipe.lots_per_side; ++i) {
      const double w = rng.uniform(recipe.building_width_min, recipe.building_width_max);
      const double d = rng.uniform(recipe.building_depth_min, recipe.building_depth_max);
      const double h = rng.uniform(recipe.building_height_min, recipe.building_height_max);
      const double slack = std::max(0.0, 0.5 * (lot - w) - 2.0);
      const double cx = (i + 0.5) * lot + rng.uniform(-slack, slack);
      SceneStructure s;
      s.lo = Vec3(cx - 0.5 * w, side > 0 ? near_y : -(near_y + d), 0.0);
      s.hi = Vec3(cx + 0.5 * w, side > 0 ? near_y + d : -near_y, h);
      scene.structures.push_back(s);
    }
  std::vector<std::size_t> lots(scene.structures.size());
  for (std::size_t i = 0; i < lots.size(); ++i) lots[i] = i;
  for (std::size_t i = lots.size(); i > 1; --i) std::swap(lots[i - 1], lots[rng.below(i)]);
  for (int i = 0; i < recipe.appeared; ++i) {
    auto& s = scene.structures[lots[static_cast<std::size_t>(i)]];
    s.in_ref = false;
    s.truth = ChangeLabel::appeared;
  }
  for (int i = 0; i < recipe.disappeared; ++i) {
    auto& s = scene.structures[lots[static_cast<std::size_t>(recipe.appeared + i)]];
    s.in_src = false;
    s.truth = ChangeLabel::disappeared;
  }
  double x_end_src = recipe.street_length;
  if (recipe.unobserved_structure) {
    SceneStructure s;
    s.lo = Vec3(recipe.street_length + 40.0, near_y, 0.0);
    s.hi = Vec3(recipe.street_length + 52.0, near_y + 10.0, 10.0);
    s.in_ref = false;
    scene.structures.push_back(s);
    x_end_src = recipe.street_length + 60.0;
  }

  // Surface samples shared by both traversals.
  std::vector<detail::Sample> samples;
  for (std::size_t i = 0; i < scene.structures.size(); ++i)
    detail::sample_box(scene.structures[i], static_cast<int>(i), recipe.surface_spacing, rng, samples);
  const double y_ext = near_y + recipe.building_depth_max + 6.0;
  for (double x = -10.0; x <= recipe.street_length + 10.0; x += recipe.ground_spacing)
    for (double y = -y_ext; y <= y_ext; y += recipe.ground_spacing) {
      const Vec3 p(x + rng.uniform(-0.3, 0.3) * recipe.ground_spacing,
                   y + rng.uniform(-0.3, 0.3) * recipe.ground_spacing, 0.0);
      samples.push_back(detail::Sample{p, -1, static_cast<int>(rng.integer(3, 12))});
    }

  // Ground-truth drift over the scene's xy box.
  {
    Aabb2 box;
    for (const auto& s : samples) box.extend(s.p);
    const auto grid = make_anchor_grid(box, recipe.drift_side * recipe.drift_side);
    scene.drift = identity_warp(grid, grid.default_sigma());
    for (Eigen::Index k = 0; k < scene.drift.anchor_count(); ++k)
      scene.drift.weights.row(k) << rng.uniform(-recipe.drift_xy, recipe.drift_xy),
          rng.uniform(-recipe.drift_xy, recipe.drift_xy), rng.uniform(-recipe.drift_z, recipe.drift_z);
  }

  auto present = [&](const detail::Sample& s, bool ref_side) {
    if (s.structure >= 0) {
      const auto& st = scene.structures[static_cast<std::size_t>(s.structure)];
      return ref_side ? st.in_ref : st.in_src;
    }
    for (const auto& st : scene.structures)
      if ((ref_side ? st.in_ref : st.in_src) && detail::in_footprint(st, s.p)) return false;
    return true;
  };
  auto label_of = [&](int structure) {
    return structure >= 0 ? scene.structures[static_cast<std::size_t>(structure)].truth : ChangeLabel::unchanged;
  };

  auto& ref_tracks = scene.ref.track_lengths.emplace();
  auto& src_tracks = scene.src.track_lengths.emplace();
  auto push_ref = [&](const Vec3& p, int track, int structure) {
    scene.ref.ids.push_back(static_cast<PointId>(scene.ref.points.size()));
    scene.ref.points.push_back(p);
    ref_tracks.push_back(detail::clamp_track(track));
    scene.ref_labels.push_back(label_of(structure));
  };
  auto push_src = [&](const Vec3& world, int track, int structure, std::int64_t counterpart) {
    scene.src.ids.push_back(static_cast<PointId>(scene.src.points.size()));
    scene.src.points.push_back(warp_point(world, scene.drift) + detail::truncated_noise(rng, recipe.noise_sigma));
    src_tracks.push_back(detail::clamp_track(track));
    scene.src_labels.push_back(label_of(structure));
    scene.src_counterpart.push_back(counterpart);
  };

  for (const auto& s : samples) {
    std::int64_t ref_id = -1;
    if (present(s, true)) {
      ref_id = static_cast<std::int64_t>(scene.ref.points.size());
      push_ref(s.p, s.track + static_cast<int>(rng.integer(-2, 2)), s.structure);
    }
    if (present(s, false)) push_src(s.p, s.track + static_cast<int>(rng.integer(-2, 2)), s.structure, ref_id);
  }

  // Per-traversal reconstruction clutter around each visible structure.
  for (int ref_side : {1, 0}) {
    for (std::size_t i = 0; i < scene.structures.size(); ++i) {
      const auto& st = scene.structures[i];
      if (!(ref_side ? st.in_ref : st.in_src)) continue;
      const Vec3 size = st.hi - st.lo;
      const double area = 2.0 * (size.x() + size.y()) * size.z() + size.x() * size.y();
      const auto n = static_cast<int>(recipe.clutter_fraction * area / (recipe.surface_spacing * recipe.surface_spacing));
      for (int c = 0; c < n; ++c) {
        Vec3 p(rng.uniform(st.lo.x(), st.hi.x()), rng.uniform(st.lo.y(), st.hi.y()), rng.uniform(0.0, st.hi.z()));
        const int axis = static_cast<int>(rng.below(2));
        p[axis] = rng.uniform(0.0, 1.0) < 0.5 ? st.lo[axis] : st.hi[axis];
        p += Vec3(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8));
        p.z() = std::max(p.z(), 0.6);
        const int track = static_cast<int>(rng.integer(1, 5));
        if (ref_side)
          push_ref(p, track, static_cast<int>(i));
        else
          push_src(p, track, static_cast<int>(i), -1);
      }
    }
  }

  scene.ref_traj = detail::make_rig(recipe.street_length, recipe, 0);
  scene.src_traj = detail::make_rig(x_end_src, recipe, 0);
  for (auto& f : scene.src_traj.frames) f.center = warp_point(f.center, scene.drift);
  return scene;
}

}  // namespace urbancd
