#include <gtest/gtest.h>

#include <cmath>
#include <json.hpp>

#include "support.hpp"
#include "urbancd/core/spatial_index.hpp"
#include "urbancd/eval/metrics.hpp"
#include "urbancd/eval/synthetic.hpp"
#include "urbancd/io/file.hpp"
#include "urbancd/io/pgm.hpp"
#include "urbancd/io/ply.hpp"
#include "urbancd/pipeline.hpp"

using namespace urbancd;
using urbancd::testing::random_cloud;

namespace {

const std::filesystem::path kFixtures = URBANCD_FIXTURES;

nlohmann::json load_json(const std::filesystem::path& p) { return nlohmann::json::parse(io::read_file(p)); }

CameraFrame forward_camera(int w, int h) {
  CameraFrame f;
  f.fx = f.fy = 300.0;
  f.px = 0.5 * w;
  f.py = 0.5 * h;
  f.range = 100.0;
  return f;
}

ChangeMap one_change(Vec3 p) { return ChangeMap{{ChangeEntry{Origin::src, 0, p, 5.0, ChangeLabel::appeared}}}; }

Mask stripes(int w, int h, int period) {
  Mask m(w, h);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) m.at(u, v) = (u / period) % 2 == 0 ? 1 : 0;
  return m;
}

}  // namespace

TEST(Scene, SameSeedSameScene) {
  const auto a = generate_scene(SceneRecipe::changes(), 42);
  const auto b = generate_scene(SceneRecipe::changes(), 42);
  EXPECT_EQ(a.ref.points, b.ref.points);
  EXPECT_EQ(a.src.points, b.src.points);
  EXPECT_EQ(a.ref.track_lengths, b.ref.track_lengths);
  EXPECT_EQ(a.src_labels, b.src_labels);
  EXPECT_EQ(a.drift.flatten(), b.drift.flatten());
  const auto c = generate_scene(SceneRecipe::changes(), 43);
  EXPECT_NE(a.src.points, c.src.points);
}

TEST(Scene, NoInjectedChangesMeansAllUnchanged) {
  const auto s = generate_scene(SceneRecipe::drift(), 5);
  for (auto l : s.ref_labels) EXPECT_EQ(l, ChangeLabel::unchanged);
  for (auto l : s.src_labels) EXPECT_EQ(l, ChangeLabel::unchanged);
  EXPECT_EQ(s.ref_labels.size(), s.ref.size());
  EXPECT_EQ(s.src_labels.size(), s.src.size());
}

TEST(Scene, AppearedBoxLabelsExactlyItsSamples) {
  auto r = SceneRecipe::changes();
  r.appeared = 1;
  r.disappeared = 0;
  r.clutter_fraction = 0.0;
  r.unobserved_structure = false;
  const auto s = generate_scene(r, 9);
  std::size_t expected = 0;
  for (const auto& st : s.structures) {
    if (st.truth != ChangeLabel::appeared) continue;
    const Vec3 size = st.hi - st.lo;
    auto n = [&](double len) { return static_cast<std::size_t>(std::max(1.0, std::round(len / r.surface_spacing))); };
    expected += 2 * n(size.x()) * n(size.z()) + 2 * n(size.y()) * n(size.z()) + n(size.x()) * n(size.y());
  }
  ASSERT_GT(expected, 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(s.src_labels.begin(), s.src_labels.end(), ChangeLabel::appeared)),
            expected);
  EXPECT_EQ(std::count(s.ref_labels.begin(), s.ref_labels.end(), ChangeLabel::appeared), 0);
}

TEST(Scene, SourceIsTheDriftedReferencePlusNoise) {
  const auto s = generate_scene(SceneRecipe::drift(), 6);
  std::size_t checked = 0;
  for (std::size_t j = 0; j < s.src.size(); ++j) {
    const auto ref_id = s.src_counterpart[j];
    if (ref_id < 0) continue;
    const Vec3 back = invert_warp_point(s.src.points[j], s.drift);
    EXPECT_LE((back - s.ref.points[static_cast<std::size_t>(ref_id)]).norm(), 3.0 * s.recipe.noise_sigma + 1e-3);
    ++checked;
  }
  EXPECT_GT(checked, s.src.size() / 2);
}

TEST(Scene, TrajectoriesAreValid) {
  const auto s = generate_scene(SceneRecipe::changes(), 1);
  EXPECT_NO_THROW(validate(s.ref_traj));
  EXPECT_NO_THROW(validate(s.src_traj));
  EXPECT_GT(s.src_traj.frames.size(), s.ref_traj.frames.size());
}

TEST(BruteForce, MatchesTheIndexExactly) {
  Rng rng(1);
  const auto cloud = urbancd::testing::lattice_cloud(rng, 2000, 15);
  const SpatialIndex index(cloud, Metric::xyz);
  for (int q = 0; q < 1000; ++q) {
    const Vec3 p(rng.uniform(-2, 17), rng.uniform(-2, 17), rng.uniform(-2, 17));
    const auto [i, d] = brute_force_nn(p, cloud);
    const auto nb = index.nearest(p);
    EXPECT_EQ(nb.index, i);
    EXPECT_EQ(nb.distance(), d);
  }
}

TEST(BruteForce, SinglePointAndTies) {
  EXPECT_EQ(brute_force_nn(Vec3(5, 5, 5), PointCloud::from_points({Vec3(1, 2, 3)})).first, 0u);
  auto dup = PointCloud::from_points({Vec3(1, 0, 0), Vec3(1, 0, 0), Vec3(1, 0, 0)});
  dup.ids = {9, 4, 7};
  EXPECT_EQ(brute_force_nn(Vec3::Zero(), dup).first, 1u);
  EXPECT_THROW(brute_force_nn(Vec3::Zero(), PointCloud{}), EmptyCloudError);
}

TEST(Eval3d, PerfectPrediction) {
  const auto s = generate_scene(SceneRecipe::changes(), 2);
  const auto truth = truth_changes(s.ref, s.ref_labels, s.src, s.src_labels);
  const auto r = eval_3d(truth, GroundTruth{s.ref_labels, s.src_labels});
  EXPECT_EQ(r.appeared.precision, 1.0);
  EXPECT_EQ(r.appeared.recall, 1.0);
  EXPECT_EQ(r.disappeared.precision, 1.0);
  EXPECT_EQ(r.disappeared.recall, 1.0);
  EXPECT_EQ(r.combined.iou, 1.0);
  EXPECT_GT(r.combined.tp, 0u);
}

TEST(Eval3d, EmptyPredictionHasPrecisionOneRecallZero) {
  const GroundTruth t{{ChangeLabel::disappeared}, {ChangeLabel::appeared, ChangeLabel::unchanged}};
  const auto r = eval_3d(ChangeMap{}, t);
  EXPECT_EQ(r.appeared.precision, 1.0);
  EXPECT_EQ(r.appeared.recall, 0.0);
  EXPECT_EQ(r.appeared.f1, 0.0);
  EXPECT_EQ(r.combined.fn, 2u);
}

TEST(Eval3d, HalfOfTheTruth) {
  const GroundTruth t{{}, {ChangeLabel::appeared, ChangeLabel::appeared, ChangeLabel::appeared, ChangeLabel::appeared}};
  ChangeMap pred;
  for (PointId id : {0u, 2u}) pred.entries.push_back(ChangeEntry{Origin::src, id, Vec3::Zero(), 3.0, ChangeLabel::appeared});
  const auto r = eval_3d(pred, t);
  EXPECT_EQ(r.appeared.precision, 1.0);
  EXPECT_EQ(r.appeared.recall, 0.5);
  EXPECT_EQ(r.disappeared.precision, 1.0);
  EXPECT_EQ(r.disappeared.recall, 1.0);
}

TEST(Eval3d, MismatchedInputsThrow) {
  const GroundTruth t{{ChangeLabel::unchanged}, {ChangeLabel::unchanged}};
  EXPECT_THROW(eval_3d(ChangeMap{{ChangeEntry{Origin::src, 5, Vec3::Zero(), 3.0, ChangeLabel::appeared}}}, t),
               InvalidParamsError);
  EXPECT_THROW(eval_3d(ChangeMap{{ChangeEntry{Origin::src, 0, Vec3::Zero(), 3.0, ChangeLabel::disappeared}}}, t),
               InvalidParamsError);
}

TEST(Eval3d, F1NeverExceedsPrecisionOrRecallBound) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const auto s = Score::from_counts(rng.below(50), rng.below(50), rng.below(50));
    EXPECT_LE(s.f1, std::max(s.precision, s.recall) + 1e-15);
    EXPECT_GE(s.f1, std::min(s.precision, s.recall) - 1e-15);
    EXPECT_LE(s.iou, s.f1 + 1e-15);
  }
}

TEST(Eval3d, HandCountedFixture) {
  const auto expected = load_json(kFixtures / "eval3d" / "expected.json");
  const auto pred = io::read_changes(kFixtures / "eval3d" / "changes.ply");
  const GroundTruth truth{io::read_labels(kFixtures / "eval3d" / "ref.ply"),
                          io::read_labels(kFixtures / "eval3d" / "src.ply")};
  const auto r = eval_3d(pred, truth);
  auto check = [&](const Score& s, const nlohmann::json& e) {
    EXPECT_EQ(s.tp, e["tp"].get<std::size_t>());
    EXPECT_EQ(s.fp, e["fp"].get<std::size_t>());
    EXPECT_EQ(s.fn, e["fn"].get<std::size_t>());
    EXPECT_EQ(s.precision, e["precision"].get<double>());
    EXPECT_EQ(s.recall, e["recall"].get<double>());
    EXPECT_EQ(s.f1, e["f1"].get<double>());
    EXPECT_EQ(s.iou, e["iou"].get<double>());
  };
  check(r.appeared, expected["appeared"]);
  check(r.disappeared, expected["disappeared"]);
  check(r.combined, expected["combined"]);
}

TEST(Projection, NoChangesGivesEmptyMask) {
  const auto m = project_changes(ChangeMap{}, forward_camera(64, 48), 64, 48);
  EXPECT_EQ(m.count(), 0u);
  EXPECT_EQ(m.pixels.size(), 64u * 48u);
}

TEST(Projection, AxisPointStampsDiscAtPrincipalPoint) {
  const int w = 101, h = 81;
  const auto m = project_changes(one_change(Vec3(50, 0, 0)), forward_camera(w, h), w, h, 20, 100.0);
  std::size_t expected = 0;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const double du = u - 50.5, dv = v - 40.5;
      const bool in = du * du + dv * dv <= 400.0;
      expected += in;
      EXPECT_EQ(m.at(u, v) != 0, in) << u << "," << v;
    }
  EXPECT_EQ(m.count(), expected);
}

TEST(Projection, BeyondRangeIsNotStamped) {
  const auto m = project_changes(one_change(Vec3(150, 0, 0)), forward_camera(64, 48), 64, 48, 20, 100.0);
  EXPECT_EQ(m.count(), 0u);
  const auto behind = project_changes(one_change(Vec3(-10, 0, 0)), forward_camera(64, 48), 64, 48, 20, 100.0);
  EXPECT_EQ(behind.count(), 0u);
}

TEST(Projection, LeftOfTheCameraLandsOnTheLeft) {
  const auto m = project_changes(one_change(Vec3(20, 5, 0)), forward_camera(200, 100), 200, 100, 2, 100.0);
  ASSERT_GT(m.count(), 0u);
  // u = px + fx * (-y / x) = 100 - 75
  EXPECT_NE(m.at(25, 50), 0);
  EXPECT_EQ(m.at(175, 50), 0);
}

TEST(Miou, IdenticalMasksGiveOne) {
  const std::vector<Mask> a{stripes(20, 10, 3), stripes(8, 8, 2)};
  EXPECT_EQ(miou(a, a), 1.0);
}

TEST(Miou, DisjointTenPercentMasks) {
  Mask pred(10, 10), truth(10, 10);
  for (int v = 0; v < 10; ++v) {
    pred.at(0, v) = 1;
    truth.at(9, v) = 1;
  }
  const auto r = pair_iou(pred, truth);
  EXPECT_EQ(r.changed, 0.0);
  EXPECT_EQ(r.unchanged, 0.8);
}

TEST(Miou, EmptyChangedMasksCountAsPerfect) {
  const Mask a(5, 4);
  const auto r = pair_iou(a, a);
  EXPECT_EQ(r.changed, 1.0);
  EXPECT_EQ(r.unchanged, 1.0);
}

TEST(Miou, SymmetricInPredAndTruth) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    Mask a(16, 12), b(16, 12);
    for (auto& p : a.pixels) p = rng.below(3) == 0;
    for (auto& p : b.pixels) p = rng.below(4) == 0;
    const auto ab = pair_iou(a, b), ba = pair_iou(b, a);
    EXPECT_EQ(ab.changed, ba.changed);
    EXPECT_EQ(ab.unchanged, ba.unchanged);
  }
}

TEST(Miou, ShapeErrors) {
  EXPECT_THROW(pair_iou(Mask(4, 4), Mask(4, 5)), ShapeMismatchError);
  const std::vector<Mask> one{Mask(2, 2)}, two{Mask(2, 2), Mask(2, 2)};
  EXPECT_THROW(miou(one, two), ShapeMismatchError);
  EXPECT_THROW(miou(std::vector<Mask>{}, std::vector<Mask>{}), ShapeMismatchError);
}

TEST(Miou, HandCountedFixture) {
  const auto expected = load_json(kFixtures / "masks" / "expected.json");
  std::vector<Mask> pred, truth;
  for (const auto& pair : expected["pairs"]) {
    const std::string name = "frame_" + std::to_string(pair["frame"].get<int>()) + ".pgm";
    pred.push_back(io::read_mask(kFixtures / "masks" / "pred" / name));
    truth.push_back(io::read_mask(kFixtures / "masks" / "truth" / name));
    const auto r = pair_iou(pred.back(), truth.back());
    EXPECT_EQ(r.changed, pair["changed_iou"].get<double>()) << name;
    EXPECT_EQ(r.unchanged, pair["unchanged_iou"].get<double>()) << name;
    EXPECT_EQ(r.mean(), pair["mean"].get<double>()) << name;
  }
  EXPECT_EQ(miou(pred, truth), expected["miou"].get<double>());
}
