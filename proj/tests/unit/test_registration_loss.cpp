#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "urbancd/optim/gradient_check.hpp"
#include "urbancd/registration/loss.hpp"

using namespace urbancd;
using urbancd::testing::gradient_instance;
using urbancd::testing::random_cloud;

namespace {

PointCloud one(Vec3 p) { return PointCloud::from_points({p}); }

WarpParams zero_warp(int K, double sigma) {
  return identity_warp(make_anchor_grid(Aabb2{Vec2(0, 0), Vec2(10, 10)}, K), sigma);
}

}  // namespace

TEST(Chamfer, IdenticalCloudsGiveZero) {
  Rng rng(1);
  const auto X = random_cloud(rng, 500);
  EXPECT_EQ(chamfer_sq(X, X, 10.0), 0.0);
}

TEST(Chamfer, TwoMetersApart) {
  EXPECT_EQ(chamfer_sq(one(Vec3(0, 0, 0)), one(Vec3(2, 0, 0)), 10.0), 8.0);
}

TEST(Chamfer, FarApartClampsBothTerms) {
  EXPECT_EQ(chamfer_sq(one(Vec3(0, 0, 0)), one(Vec3(100, 0, 0)), 10.0), 20.0);
}

TEST(Chamfer, EmptyCloudThrows) {
  EXPECT_THROW(chamfer_sq(PointCloud{}, one(Vec3::Zero()), 10.0), EmptyCloudError);
  EXPECT_THROW(chamfer_sq(one(Vec3::Zero()), PointCloud{}, 10.0), EmptyCloudError);
}

TEST(Chamfer, UsesTheFullThreeDimensionalDistance) {
  EXPECT_EQ(chamfer_sq(one(Vec3(0, 0, 0)), one(Vec3(0, 0, 1.5)), 10.0), 4.5);
}

TEST(Chamfer, SymmetricAndBounded) {
  Rng rng(2);
  for (int t = 0; t < 30; ++t) {
    const auto X = random_cloud(rng, 1 + rng.below(300), 30.0);
    const auto Y = random_cloud(rng, 1 + rng.below(300), 30.0);
    const double delta = rng.uniform(0.5, 20.0);
    const double a = chamfer_sq(X, Y, delta);
    EXPECT_EQ(a, chamfer_sq(Y, X, delta));
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 2.0 * delta);
  }
}

TEST(Chamfer, SinglePointsAtDistanceDGiveTwoDSquared) {
  for (double d : {0.0, 0.25, 1.0, 2.5, 3.0}) {
    EXPECT_EQ(chamfer_sq(one(Vec3(1, 2, 3)), one(Vec3(1 + d, 2, 3)), 10.0), 2.0 * d * d);
  }
}

TEST(Regularizer, ZeroWeightsGiveZero) { EXPECT_EQ(motion_regularizer(zero_warp(9, 3.0)), 0.0); }

TEST(Regularizer, HandEvaluated) {
  auto p = zero_warp(1, 2.0);
  p.weights.row(0) << 3, 4, 0;
  EXPECT_EQ(motion_regularizer(p), 1.25);
}

TEST(Regularizer, DoublingSigmaQuarters) {
  Rng rng(3);
  auto p = zero_warp(4, 1.0);
  for (int k = 0; k < 4; ++k) {
    p.sigmas[k] = rng.uniform(1, 5);
    p.weights.row(k) << rng.normal(), rng.normal(), rng.normal();
  }
  const double r = motion_regularizer(p);
  p.sigmas *= 2.0;
  EXPECT_NEAR(motion_regularizer(p), r / 4.0, 1e-15 * r);
}

TEST(Regularizer, NonPositiveSigmaThrows) {
  auto p = zero_warp(4, 1.0);
  p.sigmas[2] = 0.0;
  EXPECT_THROW(motion_regularizer(p), InvalidParamsError);
}

TEST(TotalLoss, IdentityOnIdenticalCloudsIsZero) {
  Rng rng(4);
  const auto X = random_cloud(rng, 200, 10.0);
  const auto v = total_loss(X, X, zero_warp(4, 5.0), 0.01, 10.0);
  EXPECT_EQ(v.total, 0.0);
  EXPECT_EQ(v.chamfer, 0.0);
  EXPECT_EQ(v.regularizer, 0.0);
}

TEST(TotalLoss, ComposesChamferAndRegularizer) {
  // Anchor far from both points so the warp leaves them in place.
  WarpParams p;
  p.centers.resize(1, 2);
  p.centers << 1e4, 1e4;
  p.sigmas = Eigen::VectorXd::Constant(1, 2.0);
  p.weights.resize(1, 3);
  p.weights << 3, 4, 0;
  const auto v = total_loss(one(Vec3(0, 0, 0)), one(Vec3(2, 0, 0)), p, 0.01, 10.0);
  EXPECT_EQ(v.chamfer, 8.0);
  EXPECT_EQ(v.regularizer, 1.25);
  EXPECT_NEAR(v.total, 8.0125, 1e-12 * 8.0125);
}

TEST(TotalLoss, ZeroLambdaIsPureChamfer) {
  Rng rng(5);
  const auto g = gradient_instance(rng);
  const auto v = total_loss(g.ref, g.src, g.params, 0.0, 10.0);
  EXPECT_EQ(v.total, v.chamfer);
}

TEST(TotalLoss, ChamferMatchesExplicitWarp) {
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    const auto g = gradient_instance(rng);
    const auto v = total_loss(g.ref, g.src, g.params, 0.01, 10.0);
    const double c = chamfer_sq(g.ref, warp_cloud(g.src, g.params), 10.0);
    EXPECT_NEAR(v.chamfer, c, 1e-12 * std::max(1.0, c));
    EXPECT_NEAR(v.total, v.chamfer + 0.01 * v.regularizer, 1e-12 * v.total);
    EXPECT_LE(v.chamfer, 20.0);
  }
}

TEST(TotalLoss, IndependentOfPointOrder) {
  Rng rng(7);
  const auto g = gradient_instance(rng);
  std::vector<std::size_t> perm(g.src.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = perm.size() - 1 - i;
  const RegistrationProblem a(g.ref, g.src, {}), b(g.ref, select(g.src, perm), {});
  Eigen::VectorXd ga, gb;
  EXPECT_EQ(a.evaluate_with_gradient(g.params, ga).total, b.evaluate_with_gradient(g.params, gb).total);
  EXPECT_EQ(ga, gb);
}

TEST(Gradient, MatchesFiniteDifferencesOnRandomInstances) {
  Rng rng(20240501);
  double worst = 0.0;
  std::size_t checked = 0;
  for (int t = 0; t < 50; ++t) {
    const auto g = gradient_instance(rng);
    ASSERT_LE(g.src.size(), 200u);
    ASSERT_LE(g.params.anchor_count(), 4);
    const RegistrationProblem problem(g.ref, g.src, {0.01, 10.0});
    const auto r = loss_gradient_check(problem, g.params, 1e-5, 1e-4);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
    EXPECT_LE(r.max_rel_error, 1e-4) << "instance " << t << " scalar " << r.worst;
  }
  EXPECT_GT(checked, 50u * 6u / 2u);
  RecordProperty("max_rel_error", std::to_string(worst));
}

TEST(Gradient, ChamferGradientVanishesAtTheMinimum) {
  Rng rng(8);
  const auto src = random_cloud(rng, 150, 20.0);
  WarpParams p = zero_warp(4, 8.0);
  for (int k = 0; k < 4; ++k) p.weights.row(k) << rng.normal(), rng.normal(), rng.normal();
  const auto ref = warp_cloud(src, p);
  const auto grad = loss_gradient(ref, src, p, 0.0, 10.0);
  EXPECT_LT(grad.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gradient, MirroredCloudsCancelAlongTheAxis) {
  // Clouds mirrored about x = 5, a single anchor on the mirror line.
  Rng rng(9);
  std::vector<Vec3> s, r;
  for (int i = 0; i < 60; ++i) {
    const Vec3 a(rng.uniform(0, 4), rng.uniform(0, 10), rng.uniform(0, 3));
    const Vec3 b = a + Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    s.push_back(a);
    s.emplace_back(10.0 - a.x(), a.y(), a.z());
    r.push_back(b);
    r.emplace_back(10.0 - b.x(), b.y(), b.z());
  }
  WarpParams p;
  p.centers.resize(1, 2);
  p.centers << 5.0, 5.0;
  p.sigmas = Eigen::VectorXd::Constant(1, 4.0);
  p.weights = Eigen::MatrixX3d::Zero(1, 3);
  const auto grad = loss_gradient(PointCloud::from_points(r), PointCloud::from_points(s), p, 0.01, 10.0);
  EXPECT_LT(std::abs(grad[0]), 1e-9);  // center x
  EXPECT_LT(std::abs(grad[3]), 1e-9);  // weight x
}

TEST(Gradient, SmallDescentStepDoesNotIncreaseLoss) {
  Rng rng(10);
  int descended = 0;
  for (int t = 0; t < 30; ++t) {
    const auto g = gradient_instance(rng);
    const RegistrationProblem problem(g.ref, g.src, {0.01, 10.0});
    Eigen::VectorXd grad;
    const auto base = problem.evaluate_with_gradient(g.params, grad);
    if (grad.norm() < 1e-8) continue;
    const double step = 1e-6 / grad.norm();
    const auto next = WarpParams::unflatten(g.params.flatten() - step * grad);
    const auto v = problem.evaluate(next);
    EXPECT_LE(v.total, base.total) << "instance " << t;
    ++descended;
  }
  EXPECT_GT(descended, 20);
}

TEST(Gradient, ClampedPairsContributeNothing) {
  const auto ref = one(Vec3(100, 100, 0));
  const auto src = one(Vec3(0, 0, 0));
  auto p = zero_warp(4, 5.0);
  const auto grad = loss_gradient(ref, src, p, 0.0, 10.0);
  EXPECT_EQ(grad.cwiseAbs().maxCoeff(), 0.0);
}
