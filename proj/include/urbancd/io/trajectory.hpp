#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "urbancd/change/camera.hpp"
#include "urbancd/io/file.hpp"

namespace urbancd::io {

// One frame per line, 16 comma- or whitespace-separated fields:
//   frame_id t cx cy cz qw qx qy qz hfov_deg vfov_deg fx fy px py range_m
// hfov_deg and vfov_deg are half-angles. Blank lines and lines starting
// with '#' are ignored.
inline constexpr std::string_view kTrajectoryHeader =
    "# frame_id,t,cx,cy,cz,qw,qx,qy,qz,hfov_deg,vfov_deg,fx,fy,px,py,range_m";

inline constexpr double kQuaternionTolerance = 1e-3;

inline CameraTrajectory parse_trajectory(std::string_view text) {
  CameraTrajectory traj;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t line_start = pos;
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty() || line.front() == '#') continue;

    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ',' || line[i] == ' ' || line[i] == '\t')) ++i;
      const std::size_t start = i;
      while (i < line.size() && line[i] != ',' && line[i] != ' ' && line[i] != '\t') ++i;
      if (i > start) fields.push_back(line.substr(start, i - start));
    }
    if (fields.size() != 16)
      throw ParseError("trajectory: expected 16 fields, found " + std::to_string(fields.size()), line_start);

    CameraFrame f;
    if (!parse_int(fields[0], f.frame_id)) throw ParseError("trajectory: bad frame_id", line_start);
    double v[15];
    for (int k = 0; k < 15; ++k)
      if (!parse_double(fields[static_cast<std::size_t>(k) + 1], v[k]) || !std::isfinite(v[k]))
        throw ParseError("trajectory: bad number '" + std::string(fields[static_cast<std::size_t>(k) + 1]) + "'",
                         line_start);
    f.t = v[0];
    f.center = Vec3(v[1], v[2], v[3]);
    Eigen::Quaterniond q(v[4], v[5], v[6], v[7]);
    const double norm = q.norm();
    if (std::abs(norm - 1.0) > kQuaternionTolerance)
      throw InvalidParamsError("trajectory: frame " + std::to_string(f.frame_id) + " quaternion norm " +
                               format_double(norm) + " is not unit");
    q.coeffs() /= norm;
    f.orientation = q;
    f.hfov_half_deg = v[8];
    f.vfov_half_deg = v[9];
    f.fx = v[10];
    f.fy = v[11];
    f.px = v[12];
    f.py = v[13];
    f.range = v[14];
    traj.frames.push_back(f);
  }
  validate(traj);
  return traj;
}

inline std::string serialize_trajectory(const CameraTrajectory& traj) {
  validate(traj);
  std::string out(kTrajectoryHeader);
  out += '\n';
  for (const auto& f : traj.frames) {
    out += std::to_string(f.frame_id);
    const double v[] = {f.t,
                        f.center.x(),
                        f.center.y(),
                        f.center.z(),
                        f.orientation.w(),
                        f.orientation.x(),
                        f.orientation.y(),
                        f.orientation.z(),
                        f.hfov_half_deg,
                        f.vfov_half_deg,
                        f.fx,
                        f.fy,
                        f.px,
                        f.py,
                        f.range};
    for (double x : v) out += "," + format_double(x);
    out += '\n';
  }
  return out;
}

inline CameraTrajectory read_trajectory(const std::filesystem::path& path) {
  return parse_trajectory(read_file(path));
}

inline void write_trajectory(const CameraTrajectory& traj, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_trajectory(traj));
}

}  // namespace urbancd::io
