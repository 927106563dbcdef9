#pragma once

#include <json.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "urbancd/eval/metrics.hpp"
#include "urbancd/io/file.hpp"
#include "urbancd/optim/registration.hpp"
#include "urbancd/warp/rbf_warp.hpp"

namespace urbancd::io {

using nlohmann::json;

// {"K": K, "centers": [x1, y1, ...], "sigmas": [...], "weights": [wx1, wy1, wz1, ...]}
inline json to_json(const WarpParams& p) {
  validate(p);
  json j;
  const auto K = p.anchor_count();
  j["K"] = K;
  std::vector<double> c, s, w;
  for (Eigen::Index k = 0; k < K; ++k) {
    c.push_back(p.centers(k, 0));
    c.push_back(p.centers(k, 1));
    s.push_back(p.sigmas(k));
    for (int d = 0; d < 3; ++d) w.push_back(p.weights(k, d));
  }
  j["centers"] = c;
  j["sigmas"] = s;
  j["weights"] = w;
  return j;
}

inline WarpParams warp_from_json(const json& j) {
  try {
    const auto K = j.at("K").get<Eigen::Index>();
    const auto c = j.at("centers").get<std::vector<double>>();
    const auto s = j.at("sigmas").get<std::vector<double>>();
    const auto w = j.at("weights").get<std::vector<double>>();
    if (K < 1 || c.size() != static_cast<std::size_t>(2 * K) || s.size() != static_cast<std::size_t>(K) ||
        w.size() != static_cast<std::size_t>(3 * K))
      throw ParseError("warp params: array lengths do not match K", 0);
    WarpParams p;
    p.centers.resize(K, 2);
    p.sigmas.resize(K);
    p.weights.resize(K, 3);
    for (Eigen::Index k = 0; k < K; ++k) {
      const auto u = static_cast<std::size_t>(k);
      p.centers.row(k) << c[2 * u], c[2 * u + 1];
      p.sigmas(k) = s[u];
      p.weights.row(k) << w[3 * u], w[3 * u + 1], w[3 * u + 2];
    }
    validate(p);
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("warp params: ") + e.what(), 0);
  }
}

inline json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("json: ") + e.what(), e.byte);
  }
}

inline void write_params(const WarpParams& p, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(p).dump(2) + "\n");
}

inline WarpParams read_params(const std::filesystem::path& path) { return warp_from_json(parse_json(read_file(path))); }

// Header `step,chamfer,regularizer,total`, one row per optimizer step.
inline std::string serialize_trace(std::span<const TraceRow> trace) {
  std::string out = "step,chamfer,regularizer,total\n";
  for (const auto& r : trace)
    out += std::to_string(r.step) + "," + format_double(r.chamfer) + "," + format_double(r.regularizer) + "," +
           format_double(r.total) + "\n";
  return out;
}

inline void write_trace(std::span<const TraceRow> trace, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_trace(trace));
}

inline json to_json(const Score& s) {
  return json{{"tp", s.tp},     {"fp", s.fp},         {"fn", s.fn},   {"precision", s.precision},
              {"recall", s.recall}, {"f1", s.f1}, {"iou", s.iou}};
}

inline json to_json(const EvalResult& r, const std::string& scene) {
  return json{{"scene", scene},
              {"appeared", to_json(r.appeared)},
              {"disappeared", to_json(r.disappeared)},
              {"combined", to_json(r.combined)}};
}

// Flat form: scene,direction,precision,recall,f1,iou
inline std::string metrics_csv(const EvalResult& r, const std::string& scene) {
  std::string out = "scene,direction,precision,recall,f1,iou\n";
  auto row = [&](const char* dir, const Score& s) {
    out += scene + "," + dir + "," + format_double(s.precision) + "," + format_double(s.recall) + "," +
           format_double(s.f1) + "," + format_double(s.iou) + "\n";
  };
  row("appeared", r.appeared);
  row("disappeared", r.disappeared);
  row("combined", r.combined);
  return out;
}

inline void write_metrics(const EvalResult& r, const std::string& scene, const std::filesystem::path& json_path) {
  write_file_atomic(json_path, to_json(r, scene).dump(2) + "\n");
}

}  // namespace urbancd::io
