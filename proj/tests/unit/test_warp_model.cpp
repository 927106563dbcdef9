#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "support.hpp"
#include "urbancd/warp/rbf_warp.hpp"

using namespace urbancd;
using urbancd::testing::random_cloud;

namespace {

WarpParams single_anchor(Vec2 c, double sigma, Vec3 w) {
  WarpParams p;
  p.centers.resize(1, 2);
  p.centers.row(0) = c.transpose();
  p.sigmas = Eigen::VectorXd::Constant(1, sigma);
  p.weights.resize(1, 3);
  p.weights.row(0) = w.transpose();
  return p;
}

WarpParams random_params(Rng& rng, int K) {
  WarpParams p;
  p.centers.resize(K, 2);
  p.sigmas.resize(K);
  p.weights.resize(K, 3);
  for (int k = 0; k < K; ++k) {
    p.centers.row(k) << rng.uniform(0, 50), rng.uniform(0, 50);
    p.sigmas[k] = rng.uniform(5, 20);
    p.weights.row(k) << rng.normal(), rng.normal(), rng.normal();
  }
  return p;
}

}  // namespace

TEST(Kernel, CenterGivesOneWhateverTheHeight) {
  const auto p = single_anchor(Vec2(3, 4), 2.0, Vec3::Zero());
  EXPECT_EQ(kernel_row(Vec3(3, 4, 0), p)[0], 1.0);
  EXPECT_EQ(kernel_row(Vec3(3, 4, -250), p)[0], 1.0);
}

TEST(Kernel, OneSigmaAwayGivesInverseE) {
  const auto p = single_anchor(Vec2(0, 0), 2.5, Vec3::Zero());
  EXPECT_NEAR(kernel_row(Vec3(0, 2.5, 7), p)[0], std::exp(-1.0), 1e-15);
  EXPECT_NEAR(kernel_row(Vec3(1.5, 2.0, 0), p)[0], 0.36787944117144233, 1e-15);
}

TEST(Kernel, TenSigmasAwayIsNegligible) {
  const auto p = single_anchor(Vec2(0, 0), 1.0, Vec3::Zero());
  const double phi = kernel_row(Vec3(10, 0, 0), p)[0];
  EXPECT_NEAR(phi, std::exp(-100.0), 1e-50);
  EXPECT_LT(phi, 1e-43);
}

TEST(Warp, ZeroWeightsAreIdentity) {
  Rng rng(1);
  auto p = random_params(rng, 9);
  p.weights.setZero();
  const auto cloud = random_cloud(rng, 300);
  const auto out = warp_cloud(cloud, p);
  EXPECT_EQ(out.points, cloud.points);
}

TEST(Warp, SingleAnchorAtThePoint) {
  const auto p = single_anchor(Vec2(1, 1), 3.0, Vec3(1, 2, 3));
  EXPECT_EQ(warp_point(Vec3(1, 1, 5), p), Vec3(2, 3, 8));
}

TEST(Warp, SingleAnchorOneSigmaAway) {
  const auto p = single_anchor(Vec2(0, 0), 2.0, Vec3(1, 0, 0));
  const Vec3 x(2, 0, 1);
  const Vec3 y = warp_point(x, p);
  EXPECT_NEAR(y.x(), 2.0 + std::exp(-1.0), 1e-15);
  EXPECT_EQ(y.y(), 0.0);
  EXPECT_EQ(y.z(), 1.0);
}

TEST(Warp, WideKernelsApproximateATranslation) {
  const Vec3 t(2.0, -1.0, 0.5);
  const AnchorGrid grid = make_anchor_grid(Aabb2{Vec2(0, 0), Vec2(10, 10)}, 4);
  auto p = identity_warp(grid, 1e6);
  for (int k = 0; k < 4; ++k) p.weights.row(k) = (t / 4.0).transpose();
  Rng rng(2);
  const auto cloud = random_cloud(rng, 100, 10.0);
  const auto out = warp_cloud(cloud, p);
  for (std::size_t i = 0; i < cloud.size(); ++i) EXPECT_LT((out.points[i] - cloud.points[i] - t).norm(), 1e-9);
}

TEST(Warp, SingletonCloudMatchesWarpPoint) {
  Rng rng(3);
  const auto p = random_params(rng, 4);
  const auto cloud = PointCloud::from_points({Vec3(10, 20, 3)});
  EXPECT_EQ(warp_cloud(cloud, p).points[0], warp_point(Vec3(10, 20, 3), p));
}

TEST(Warp, KeepsIdsAndTrackLengths) {
  Rng rng(4);
  auto cloud = random_cloud(rng, 20);
  cloud.ids[3] = 99;
  cloud.track_lengths = std::vector<std::uint16_t>(20, 8);
  const auto out = warp_cloud(cloud, random_params(rng, 4));
  EXPECT_EQ(out.ids, cloud.ids);
  EXPECT_EQ(out.track_lengths, cloud.track_lengths);
}

TEST(Warp, SameXyGivesSameDisplacement) {
  Rng rng(5);
  const auto p = random_params(rng, 9);
  for (int i = 0; i < 100; ++i) {
    const Vec3 a(rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(-10, 10));
    const Vec3 b(a.x(), a.y(), rng.uniform(-10, 10));
    EXPECT_EQ(displacement(kernel_row(a, p), p), displacement(kernel_row(b, p), p));
    EXPECT_LT(((warp_point(a, p) - a) - (warp_point(b, p) - b)).norm(), 1e-12);
  }
}

TEST(Warp, FarPointsBarelyMove) {
  Rng rng(6);
  const auto p = random_params(rng, 9);
  const double reach = 6.0 * p.sigmas.maxCoeff();
  const Vec3 x(50 + reach + 60, 50 + reach + 60, 0);  // beyond every center by > 6 max sigma
  EXPECT_LT((warp_point(x, p) - x).norm(), 1e-10);
}

TEST(Warp, PermutationEquivariant) {
  Rng rng(7);
  const auto p = random_params(rng, 9);
  const auto cloud = random_cloud(rng, 200);
  std::vector<std::size_t> perm(cloud.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  const auto a = warp_cloud(cloud, p);
  const auto b = warp_cloud(select(cloud, perm), p);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    EXPECT_EQ(b.points[i], a.points[perm[i]]);
    EXPECT_EQ(b.ids[i], a.ids[perm[i]]);
  }
}

TEST(AnchorGrid, InclusiveCornersForFourAnchors) {
  const auto g = make_anchor_grid(Aabb2{Vec2(0, 0), Vec2(10, 10)}, 4);
  ASSERT_EQ(g.centers.size(), 4u);
  std::vector<std::pair<double, double>> got;
  for (const auto& c : g.centers) got.emplace_back(c.x(), c.y());
  std::sort(got.begin(), got.end());
  EXPECT_EQ(got, (std::vector<std::pair<double, double>>{{0, 0}, {0, 10}, {10, 0}, {10, 10}}));
}

TEST(AnchorGrid, ThirtySixIsSixBySix) {
  const auto g = make_anchor_grid(Aabb2{Vec2(-5, 0), Vec2(45, 25)}, 36);
  EXPECT_EQ(g.side, 6);
  EXPECT_EQ(g.centers.size(), 36u);
  EXPECT_DOUBLE_EQ(g.spacing.x(), 10.0);
  EXPECT_DOUBLE_EQ(g.spacing.y(), 5.0);
  EXPECT_DOUBLE_EQ(g.default_sigma(), 10.0);
}

TEST(AnchorGrid, NonSquareKIsAConfigError) {
  EXPECT_THROW(make_anchor_grid(Aabb2{Vec2(0, 0), Vec2(1, 1)}, 5), ConfigError);
  EXPECT_THROW(make_anchor_grid(Aabb2{Vec2(0, 0), Vec2(1, 1)}, 0), ConfigError);
}

TEST(AnchorGrid, CoversTheUnionOfBothClouds) {
  const auto a = PointCloud::from_points({Vec3(0, 0, 0), Vec3(4, 2, 0)});
  const auto b = PointCloud::from_points({Vec3(-2, 6, 1)});
  const auto g = make_anchor_grid(a, b, 9);
  EXPECT_EQ(g.centers.front(), Vec2(-2, 0));
  EXPECT_EQ(g.centers.back(), Vec2(4, 6));
}

TEST(WarpParams, SixKScalarsAndFlatRoundTrip) {
  Rng rng(8);
  const auto p = random_params(rng, 4);
  EXPECT_EQ(p.scalar_count(), 24);
  const auto v = p.flatten();
  ASSERT_EQ(v.size(), 24);
  EXPECT_EQ(v[0], p.centers(0, 0));
  EXPECT_EQ(v[8], p.sigmas[0]);
  EXPECT_EQ(v[12 + 3 * 1 + 2], p.weights(1, 2));
  const auto q = WarpParams::unflatten(v);
  EXPECT_EQ(q.centers, p.centers);
  EXPECT_EQ(q.sigmas, p.sigmas);
  EXPECT_EQ(q.weights, p.weights);
  EXPECT_THROW(WarpParams::unflatten(Eigen::VectorXd::Zero(7)), ShapeMismatchError);
}

TEST(WarpParams, NonPositiveSigmaIsInvalid) {
  auto p = single_anchor(Vec2(0, 0), 0.0, Vec3::Zero());
  EXPECT_THROW(validate(p), InvalidParamsError);
  p.sigmas[0] = -1.0;
  EXPECT_THROW(validate(p), InvalidParamsError);
}
