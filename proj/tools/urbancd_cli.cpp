#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "urbancd/eval/metrics.hpp"
#include "urbancd/eval/synthetic.hpp"
#include "urbancd/io/config.hpp"
#include "urbancd/io/pgm.hpp"
#include "urbancd/io/ply.hpp"
#include "urbancd/io/results.hpp"
#include "urbancd/io/trajectory.hpp"
#include "urbancd/pipeline.hpp"

namespace fs = std::filesystem;
using namespace urbancd;

namespace {

struct Options {
  std::string config;
  std::string mode;
  std::int64_t steps = 0;
  std::uint64_t seed = 0;

  std::string recipe = "default";
  std::string out_dir;

  std::string ref, src, ref_traj, src_traj, traj;
  std::string params;
  std::string out_params, trace, out_warped;
  std::string changes, out, csv, scene = "scene";
  std::string pred_dir, truth_dir;
  int width = 640, height = 480;
};

bool given(const CLI::App& cmd, const std::string& name) {
  const auto* opt = cmd.get_option_no_throw(name);
  return opt != nullptr && opt->count() > 0;
}

// Settings from --config, then explicit flags on top.
PipelineConfig load_config(const Options& o, const CLI::App& cmd) {
  PipelineConfig cfg = o.config.empty() ? PipelineConfig{} : io::read_config(o.config);
  if (given(cmd, "--mode") && !io::parse_mode(o.mode, cfg.mode))
    throw ConfigError("--mode must be network or direct");
  if (given(cmd, "--steps")) cfg.steps = o.steps;
  if (given(cmd, "--seed")) cfg.seed = o.seed;
  validate(cfg);
  return cfg;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir);
}

void write_report(const OptimizationReport& rep, const Options& o) {
  if (!o.out_params.empty()) io::write_params(rep.final_params, o.out_params);
  if (!o.trace.empty()) io::write_trace(rep.trace, o.trace);
}

EvalResult evaluate(const ChangeMap& changes, const std::string& ref, const std::string& src) {
  return eval_3d(changes, GroundTruth{io::read_labels(ref), io::read_labels(src)});
}

void print_scores(const EvalResult& r) {
  for (const auto& [name, s] : {std::pair{"appeared", r.appeared}, std::pair{"disappeared", r.disappeared},
                                std::pair{"combined", r.combined}})
    std::printf("%-12s precision %.4f recall %.4f f1 %.4f iou %.4f\n", name, s.precision, s.recall, s.f1, s.iou);
}

void cmd_synth(const Options& o, const CLI::App& cmd) {
  SceneRecipe recipe = SceneRecipe::named(o.recipe);
  if (!o.config.empty()) {
    const PipelineConfig cfg = load_config(o, cmd);
    recipe.hfov_half_deg = cfg.hfov_half_deg;
    recipe.vfov_half_deg = cfg.vfov_half_deg;
    recipe.camera_range = cfg.camera_range_m;
  }
  const SyntheticScene scene = generate_scene(recipe, o.seed);
  ensure_dir(o.out_dir);
  const fs::path dir(o.out_dir);
  io::write_cloud(scene.ref, scene.ref_labels, dir / "ref.ply");
  io::write_cloud(scene.src, scene.src_labels, dir / "src.ply");
  io::write_trajectory(scene.ref_traj, dir / "ref.traj");
  io::write_trajectory(scene.src_traj, dir / "src.traj");
  io::write_params(scene.drift, dir / "drift.json");
  std::printf("synth: %zu reference and %zu source points written to %s\n", scene.ref.size(), scene.src.size(),
              o.out_dir.c_str());
}

void cmd_register(const Options& o, const CLI::App& cmd) {
  const PipelineConfig cfg = load_config(o, cmd);
  const PointCloud ref = io::read_cloud(o.ref);
  const PointCloud src = io::read_cloud(o.src);
  const auto rep = register_clouds(ref, src, cfg);
  write_report(rep, o);
  if (!o.out_warped.empty()) io::write_cloud(warp_cloud(src, rep.final_params), o.out_warped);
  std::printf("register (%s): loss %.6g -> %.6g in %lld steps\n", to_string(rep.mode), rep.trace.front().total,
              rep.final_loss.total, static_cast<long long>(rep.steps));
}

void cmd_detect(const Options& o, const CLI::App& cmd) {
  const PipelineConfig cfg = load_config(o, cmd);
  const PointCloud ref = io::read_cloud(o.ref);
  PointCloud src = io::read_cloud(o.src);
  const CameraTrajectory ref_traj = io::read_trajectory(o.ref_traj);
  CameraTrajectory src_traj = io::read_trajectory(o.src_traj);
  if (!o.params.empty()) {
    const WarpParams p = io::read_params(o.params);
    src = warp_cloud(src, p);
    src_traj = warp_trajectory(src_traj, p);
  }
  const ChangeMap changes = detect_changes(ref, src, ref_traj, src_traj, cfg.detection());
  io::write_changes(changes, o.out);
  std::printf("detect: %zu appeared, %zu disappeared\n", changes.count(ChangeLabel::appeared),
              changes.count(ChangeLabel::disappeared));
}

void cmd_eval3d(const Options& o, const CLI::App&) {
  const EvalResult r = evaluate(io::read_changes(o.changes), o.ref, o.src);
  io::write_metrics(r, o.scene, o.out);
  if (!o.csv.empty()) io::write_file_atomic(o.csv, io::metrics_csv(r, o.scene));
  print_scores(r);
}

void cmd_project(const Options& o, const CLI::App& cmd) {
  const PipelineConfig cfg = load_config(o, cmd);
  ChangeMap changes;
  if (!o.changes.empty()) {
    changes = io::read_changes(o.changes);
  } else {
    if (o.ref.empty() || o.src.empty()) throw ConfigError("project needs --changes, or --ref and --src with labels");
    PointCloud src = io::read_cloud(o.src);
    if (!o.params.empty()) src = warp_cloud(src, io::read_params(o.params));
    changes = truth_changes(io::read_cloud(o.ref), io::read_labels(o.ref), src, io::read_labels(o.src));
  }
  const CameraTrajectory traj = io::read_trajectory(o.traj);
  ensure_dir(o.out_dir);
  for (const auto& f : traj.frames) {
    const Mask m = project_changes(changes, f, o.width, o.height, cfg.proj_radius_px, cfg.proj_range_m);
    io::write_mask(m, fs::path(o.out_dir) / ("frame_" + std::to_string(f.frame_id) + ".pgm"));
  }
  std::printf("project: %zu masks written to %s\n", traj.frames.size(), o.out_dir.c_str());
}

void cmd_eval2d(const Options& o, const CLI::App&) {
  std::map<std::string, fs::path> pred, truth;
  auto scan = [](const std::string& dir, std::map<std::string, fs::path>& out) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".pgm") out[e.path().filename().string()] = e.path();
  };
  scan(o.pred_dir, pred);
  scan(o.truth_dir, truth);
  if (pred.size() != truth.size()) throw ShapeMismatchError("eval2d: prediction and truth mask sets differ");
  std::vector<Mask> pm, tm;
  io::json pairs = io::json::array();
  for (const auto& [name, path] : truth) {
    const auto it = pred.find(name);
    if (it == pred.end()) throw ShapeMismatchError("eval2d: no prediction for " + name);
    pm.push_back(io::read_mask(it->second));
    tm.push_back(io::read_mask(path));
    const PairIou p = pair_iou(pm.back(), tm.back());
    pairs.push_back({{"name", name}, {"changed_iou", p.changed}, {"unchanged_iou", p.unchanged}, {"iou", p.mean()}});
  }
  const double m = miou(pm, tm);
  io::write_file_atomic(o.out, io::json{{"pairs", pairs}, {"miou", m}}.dump(2) + "\n");
  std::printf("eval2d: mIOU %.4f over %zu pairs\n", m, pm.size());
}

void cmd_pipeline(const Options& o, const CLI::App& cmd) {
  const PipelineConfig cfg = load_config(o, cmd);
  const PointCloud ref = io::read_cloud(o.ref);
  const PointCloud src = io::read_cloud(o.src);
  const CameraTrajectory ref_traj = io::read_trajectory(o.ref_traj);
  const CameraTrajectory src_traj = io::read_trajectory(o.src_traj);
  const PipelineResult r = run_pipeline(ref, src, ref_traj, src_traj, cfg);

  ensure_dir(o.out_dir);
  const fs::path dir(o.out_dir);
  io::write_params(r.registration.final_params, dir / "params.json");
  io::write_trace(r.registration.trace, dir / "trace.csv");
  io::write_changes(r.changes, dir / "changes.ply");
  io::write_config(cfg, dir / "config.txt");
  std::printf("pipeline (%s): loss %.6g -> %.6g, %zu appeared, %zu disappeared\n", to_string(r.registration.mode),
              r.registration.trace.front().total, r.registration.final_loss.total,
              r.changes.count(ChangeLabel::appeared), r.changes.count(ChangeLabel::disappeared));
  auto ref_labels = io::try_read_labels(o.ref);
  auto src_labels = io::try_read_labels(o.src);
  if (ref_labels && src_labels) {
    const EvalResult m = eval_3d(r.changes, GroundTruth{std::move(*ref_labels), std::move(*src_labels)});
    io::write_metrics(m, o.scene, dir / "metrics.json");
    io::write_file_atomic(dir / "metrics.csv", io::metrics_csv(m, o.scene));
    print_scores(m);
  }
}

int usage_error(const std::string& msg) {
  std::fprintf(stderr, "error: usage: %s\n", msg.c_str());
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drift removal and change detection for pairs of urban point clouds"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--config", o.config, "key = value configuration file")->check(CLI::ExistingFile);
  };
  auto add_run = [&](CLI::App* c) {
    c->add_option("--mode", o.mode, "optimizer: network or direct")->check(CLI::IsMember({"network", "direct"}));
    c->add_option("--steps", o.steps, "optimizer steps")->check(CLI::PositiveNumber);
    c->add_option("--seed", o.seed, "random seed");
  };
  auto existing = [](CLI::App* c, const char* name, std::string& dest, const char* help) {
    return c->add_option(name, dest, help)->check(CLI::ExistingFile);
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic scene pair");
  synth->add_option("--recipe", o.recipe, "default, acceptance, changes or drift");
  synth->add_option("--seed", o.seed, "random seed");
  synth->add_option("--out-dir", o.out_dir, "output directory")->required();
  add_common(synth);

  auto* reg = app.add_subcommand("register", "estimate the warp taking src onto ref");
  existing(reg, "--ref", o.ref, "reference cloud (.ply)")->required();
  existing(reg, "--src", o.src, "source cloud (.ply)")->required();
  reg->add_option("--out-params", o.out_params, "warp parameters (.json)");
  reg->add_option("--trace", o.trace, "per-step loss trace (.csv)");
  reg->add_option("--out-warped", o.out_warped, "warped source cloud (.ply)");
  add_common(reg);
  add_run(reg);

  auto* det = app.add_subcommand("detect", "detect appeared and disappeared points");
  existing(det, "--ref", o.ref, "reference cloud")->required();
  existing(det, "--src", o.src, "source cloud, registered unless --params is given")->required();
  existing(det, "--ref-traj", o.ref_traj, "reference trajectory")->required();
  existing(det, "--src-traj", o.src_traj, "source trajectory")->required();
  existing(det, "--params", o.params, "warp applied to the source cloud and trajectory");
  det->add_option("--out", o.out, "change file (.ply)")->required();
  add_common(det);

  auto* e3 = app.add_subcommand("eval3d", "per-point scores against labelled clouds");
  existing(e3, "--changes", o.changes, "change file")->required();
  existing(e3, "--ref", o.ref, "labelled reference cloud")->required();
  existing(e3, "--src", o.src, "labelled source cloud")->required();
  e3->add_option("--out", o.out, "metrics (.json)")->required();
  e3->add_option("--csv", o.csv, "metrics (.csv)");
  e3->add_option("--scene", o.scene, "scene name in the metrics");

  auto* proj = app.add_subcommand("project", "render change masks for every frame of a trajectory");
  existing(proj, "--changes", o.changes, "change file");
  existing(proj, "--ref", o.ref, "labelled reference cloud (truth masks)");
  existing(proj, "--src", o.src, "labelled source cloud (truth masks)");
  existing(proj, "--params", o.params, "warp applied to --src");
  existing(proj, "--traj", o.traj, "trajectory")->required();
  proj->add_option("--out-dir", o.out_dir, "mask directory")->required();
  proj->add_option("--width", o.width, "image width")->check(CLI::PositiveNumber);
  proj->add_option("--height", o.height, "image height")->check(CLI::PositiveNumber);
  add_common(proj);

  auto* e2 = app.add_subcommand("eval2d", "mIOU between predicted and truth masks");
  e2->add_option("--pred-dir", o.pred_dir, "predicted masks")->required()->check(CLI::ExistingDirectory);
  e2->add_option("--truth-dir", o.truth_dir, "truth masks")->required()->check(CLI::ExistingDirectory);
  e2->add_option("--out", o.out, "metrics (.json)")->required();

  auto* pipe = app.add_subcommand("pipeline", "register, detect and (with labels) evaluate");
  existing(pipe, "--ref", o.ref, "reference cloud")->required();
  existing(pipe, "--src", o.src, "source cloud")->required();
  existing(pipe, "--ref-traj", o.ref_traj, "reference trajectory")->required();
  existing(pipe, "--src-traj", o.src_traj, "source trajectory")->required();
  pipe->add_option("--out-dir", o.out_dir, "output directory")->required();
  pipe->add_option("--scene", o.scene, "scene name in the metrics");
  add_common(pipe);
  add_run(pipe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return usage_error(e.what());
  }

  const std::pair<CLI::App*, void (*)(const Options&, const CLI::App&)> commands[] = {
      {synth, cmd_synth}, {reg, cmd_register},  {det, cmd_detect},   {e3, cmd_eval3d},
      {proj, cmd_project}, {e2, cmd_eval2d}, {pipe, cmd_pipeline}};
  try {
    for (const auto& [sub, run] : commands)
      if (sub->parsed()) run(o, *sub);
  } catch (const ConfigError& e) {
    return usage_error(e.what());
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.kind(), e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 0;
}
