#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <type_traits>

#include "urbancd/change/detection.hpp"
#include "urbancd/io/file.hpp"
#include "urbancd/optim/registration.hpp"

namespace urbancd {

// Every tunable of the pipeline. Registration and detection defaults are the
// published parameter table; the rest are implementation choices.
struct PipelineConfig {
  // registration
  int K = 36;
  double delta_reg = 10.0;
  double lambda_reg = 0.01;
  // change detection
  int tau_ss = 7;
  double delta_cd = 10.0;
  int k_mean = 7;
  double tau_cd = 2.0;

  int k_norm = 16;
  double ground_cell = 4.0;
  double h_ground = 0.5;
  int ground_window = 2;
  double normal_tol_deg = 40.0;
  double r_iso = 2.0;
  int n_iso = 5;
  double r_pop = 1.0;

  OptimizerMode mode = OptimizerMode::network;
  std::int64_t steps = 2500;
  std::uint64_t seed = 0;
  std::int64_t n_net = 4096;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1e3;
  double output_init_scale = 0.0;

  // camera defaults for generated trajectories
  double hfov_half_deg = 55.0;
  double vfov_half_deg = 50.0;
  double camera_range_m = 100.0;
  // 2D evaluation
  double proj_range_m = 100.0;
  int proj_radius_px = 20;

  bool operator==(const PipelineConfig&) const = default;

  RegistrationConfig registration() const {
    RegistrationConfig r;
    r.K = K;
    r.delta_reg = delta_reg;
    r.lambda_reg = lambda_reg;
    r.adam = AdamConfig{lr, beta1, beta2, adam_eps};
    r.grad_clip = grad_clip;
    r.n_net = static_cast<std::size_t>(n_net);
    r.output_init_scale = output_init_scale;
    return r;
  }

  ChangeDetectionConfig detection() const {
    return ChangeDetectionConfig{tau_ss,      delta_cd,       k_mean, tau_cd, k_norm, ground_cell, h_ground,
                                 ground_window, normal_tol_deg, r_iso, n_iso,  r_pop};
  }
};

// Calls f(name, field) for every field, in file order.
template <class Config, class F>
void for_each_field(Config& c, F&& f) {
  f("K", c.K);
  f("delta_reg", c.delta_reg);
  f("lambda_reg", c.lambda_reg);
  f("tau_ss", c.tau_ss);
  f("delta_cd", c.delta_cd);
  f("k_mean", c.k_mean);
  f("tau_cd", c.tau_cd);
  f("k_norm", c.k_norm);
  f("ground_cell", c.ground_cell);
  f("h_ground", c.h_ground);
  f("ground_window", c.ground_window);
  f("normal_tol_deg", c.normal_tol_deg);
  f("r_iso", c.r_iso);
  f("n_iso", c.n_iso);
  f("r_pop", c.r_pop);
  f("mode", c.mode);
  f("steps", c.steps);
  f("seed", c.seed);
  f("n_net", c.n_net);
  f("lr", c.lr);
  f("beta1", c.beta1);
  f("beta2", c.beta2);
  f("adam_eps", c.adam_eps);
  f("grad_clip", c.grad_clip);
  f("output_init_scale", c.output_init_scale);
  f("hfov_half_deg", c.hfov_half_deg);
  f("vfov_half_deg", c.vfov_half_deg);
  f("camera_range_m", c.camera_range_m);
  f("proj_range_m", c.proj_range_m);
  f("proj_radius_px", c.proj_radius_px);
}

inline void validate(const PipelineConfig& c) {
  auto positive = [](bool ok, const char* name) {
    if (!ok) throw ConfigError(std::string("config: ") + name + " must be positive");
  };
  positive(c.K > 0, "K");
  {
    int r = 0;
    while ((r + 1) * (r + 1) <= c.K) ++r;
    if (r * r != c.K) throw ConfigError("config: K must be a perfect square, got " + std::to_string(c.K));
  }
  positive(c.delta_reg > 0, "delta_reg");
  positive(c.lambda_reg >= 0, "lambda_reg (or zero)");
  positive(c.tau_ss >= 0, "tau_ss (or zero)");
  positive(c.delta_cd > 0, "delta_cd");
  positive(c.k_mean >= 0, "k_mean (or zero)");
  positive(c.tau_cd > 0, "tau_cd");
  positive(c.k_norm >= 3, "k_norm (>= 3)");
  positive(c.ground_cell > 0, "ground_cell");
  positive(c.h_ground >= 0, "h_ground (or zero)");
  positive(c.ground_window >= 0, "ground_window (or zero)");
  positive(c.normal_tol_deg > 0 && c.normal_tol_deg <= 90, "normal_tol_deg (<= 90)");
  positive(c.r_iso > 0, "r_iso");
  positive(c.n_iso >= 0, "n_iso (or zero)");
  positive(c.r_pop >= 0, "r_pop (or zero)");
  positive(c.steps > 0, "steps");
  positive(c.n_net > 0, "n_net");
  positive(c.lr > 0, "lr");
  positive(c.beta1 >= 0 && c.beta1 < 1, "beta1 (< 1)");
  positive(c.beta2 >= 0 && c.beta2 < 1, "beta2 (< 1)");
  positive(c.adam_eps > 0, "adam_eps");
  positive(c.grad_clip > 0, "grad_clip");
  positive(c.output_init_scale >= 0, "output_init_scale (or zero)");
  positive(c.hfov_half_deg > 0 && c.hfov_half_deg < 90, "hfov_half_deg (< 90)");
  positive(c.vfov_half_deg > 0 && c.vfov_half_deg < 90, "vfov_half_deg (< 90)");
  positive(c.camera_range_m > 0, "camera_range_m");
  positive(c.proj_range_m > 0, "proj_range_m");
  positive(c.proj_radius_px >= 0, "proj_radius_px (or zero)");
}

namespace io {

inline bool parse_mode(std::string_view s, OptimizerMode& out) {
  if (s == "direct") out = OptimizerMode::direct;
  else if (s == "network") out = OptimizerMode::network;
  else return false;
  return true;
}

// Flat `key = value` lines; '#' starts a comment. Omitted keys keep their
// defaults, unknown or repeated keys are errors.
inline PipelineConfig parse_config(std::string_view text) {
  PipelineConfig cfg;
  std::map<std::string, bool, std::less<>> seen;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    ++line_no;
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (seen.contains(key)) throw ConfigError(where + "duplicate key '" + std::string(key) + "'");
    bool known = false, ok = true;
    for_each_field(cfg, [&](std::string_view name, auto& field) {
      if (name != key) return;
      known = true;
      using T = std::remove_reference_t<decltype(field)>;
      if constexpr (std::is_same_v<T, OptimizerMode>) ok = parse_mode(value, field);
      else if constexpr (std::is_floating_point_v<T>) ok = parse_double(value, field);
      else ok = parse_int(value, field);
    });
    if (!known) throw ConfigError(where + "unknown key '" + std::string(key) + "'");
    if (!ok) throw ConfigError(where + "bad value '" + std::string(value) + "' for " + std::string(key));
    seen.emplace(std::string(key), true);
  }
  validate(cfg);
  return cfg;
}

inline std::string serialize_config(const PipelineConfig& cfg) {
  std::string out;
  for_each_field(cfg, [&](std::string_view name, const auto& field) {
    using T = std::remove_cvref_t<decltype(field)>;
    out += std::string(name) + " = ";
    if constexpr (std::is_same_v<T, OptimizerMode>) out += to_string(field);
    else if constexpr (std::is_floating_point_v<T>) out += format_double(field);
    else out += std::to_string(field);
    out += '\n';
  });
  return out;
}

inline PipelineConfig read_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

inline void write_config(const PipelineConfig& cfg, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_config(cfg));
}

}  // namespace io
}  // namespace urbancd
