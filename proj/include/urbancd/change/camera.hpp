#pragma once

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "urbancd/core/point_cloud.hpp"

namespace urbancd {

// One camera pose of a traversal.
//
// Camera frame convention: +x is the viewing axis, +y points left, +z up.
// An identity orientation therefore looks along world +x. Pixel coordinates
// have u growing to the right (-y) and v growing downward (-z).
struct CameraFrame {
  std::int64_t frame_id = 0;
  double t = 0.0;
  Vec3 center = Vec3::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();  // camera -> world
  double hfov_half_deg = 45.0;
  double vfov_half_deg = 45.0;
  double fx = 1.0, fy = 1.0, px = 0.0, py = 0.0;
  double range = 100.0;

  Vec3 to_camera(const Vec3& world) const { return orientation.conjugate() * (world - center); }

  // Inside the symmetric frustum: in front, within both half-angles, and
  // within `range` of the camera center.
  bool sees(const Vec3& world) const {
    const Vec3 c = to_camera(world);
    if (!(c.x() > 0.0)) return false;
    if (c.norm() > range) return false;
    constexpr double deg = std::numbers::pi / 180.0;
    return std::atan2(std::abs(c.y()), c.x()) <= hfov_half_deg * deg &&
           std::atan2(std::abs(c.z()), c.x()) <= vfov_half_deg * deg;
  }

  struct Pixel {
    double u, v, depth;
  };

  // Pinhole projection; nullopt for points at or behind the camera plane.
  std::optional<Pixel> project(const Vec3& world) const {
    const Vec3 c = to_camera(world);
    if (!(c.x() > 0.0)) return std::nullopt;
    return Pixel{px + fx * (-c.y() / c.x()), py + fy * (-c.z() / c.x()), c.x()};
  }
};

struct CameraTrajectory {
  std::vector<CameraFrame> frames;

  bool empty() const noexcept { return frames.empty(); }
};

inline void validate(const CameraTrajectory& traj) {
  for (std::size_t i = 0; i < traj.frames.size(); ++i) {
    const auto& f = traj.frames[i];
    if (std::abs(f.orientation.norm() - 1.0) > 1e-6)
      throw InvalidParamsError("trajectory: orientation quaternion is not unit length");
    if (!(f.hfov_half_deg > 0.0 && f.hfov_half_deg < 90.0 && f.vfov_half_deg > 0.0 && f.vfov_half_deg < 90.0))
      throw InvalidParamsError("trajectory: FOV half-angles must lie in (0, 90) degrees");
    if (!(f.range > 0.0)) throw InvalidParamsError("trajectory: max range must be positive");
    if (i > 0 && f.frame_id <= traj.frames[i - 1].frame_id)
      throw InvalidParamsError("trajectory: frame ids must be strictly increasing");
  }
}

inline Eigen::Quaterniond yaw_quaternion(double yaw_rad) {
  return Eigen::Quaterniond(Eigen::AngleAxisd(yaw_rad, Vec3::UnitZ()));
}

}  // namespace urbancd
