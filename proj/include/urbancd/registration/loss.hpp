#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "urbancd/core/spatial_index.hpp"
#include "urbancd/warp/rbf_warp.hpp"

namespace urbancd {

// Nearest-neighbor matches of one Chamfer direction, frozen at evaluation
// time. `match[i]` is the position of point i's neighbor in the other cloud.
struct Correspondences {
  std::vector<std::uint32_t> match;
  std::vector<std::uint8_t> clamped;

  bool operator==(const Correspondences&) const = default;
};

struct LossValue {
  double total = 0.0;
  double chamfer = 0.0;
  double regularizer = 0.0;
  Correspondences ref_to_src;  // per ref point, its match in the warped source
  Correspondences src_to_ref;  // per warped source point, its match in ref
};

namespace detail {

// One direction of the clamped squared Chamfer sum, divided by |from|.
inline double chamfer_direction(const std::vector<Vec3>& from, const SpatialIndex& to_index,
                                double delta, Correspondences* corr) {
  if (corr) {
    corr->match.resize(from.size());
    corr->clamped.resize(from.size());
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    const auto nb = to_index.nearest(from[i]);
    const bool clamp = !(nb.sq_distance < delta);
    sum += clamp ? delta : nb.sq_distance;
    if (corr) {
      corr->match[i] = static_cast<std::uint32_t>(nb.index);
      corr->clamped[i] = clamp;
    }
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace detail

// Symmetric squared Chamfer distance with each squared term clamped at
// `delta` (m^2). Always in [0, 2 delta].
inline double chamfer_sq(const PointCloud& X, const PointCloud& Y, double delta) {
  if (X.empty() || Y.empty()) throw EmptyCloudError("chamfer_sq");
  const SpatialIndex ix(X), iy(Y);
  return detail::chamfer_direction(X.points, iy, delta, nullptr) +
         detail::chamfer_direction(Y.points, ix, delta, nullptr);
}

// Mean over anchors of |w_k| / sigma_k^2.
inline double motion_regularizer(const WarpParams& p) {
  const auto K = p.anchor_count();
  if (K == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    const double s = p.sigmas[k];
    if (!(s > 0.0)) throw InvalidParamsError("motion_regularizer: sigma must be > 0");
    sum += p.weights.row(k).norm() / (s * s);
  }
  return sum / static_cast<double>(K);
}

struct LossTerms {
  double lambda_reg = 0.01;
  double delta_reg = 10.0;
};

// Registration objective between a fixed reference and a source cloud warped
// by WarpParams. The reference index is built once and reused across
// evaluations. Clouds are stored in ascending-id order so that every sum is
// independent of the caller's point order.
class RegistrationProblem {
 public:
  RegistrationProblem(const PointCloud& ref, const PointCloud& src, LossTerms terms)
      : terms_(terms) {
    if (ref.empty()) throw EmptyCloudError("registration reference");
    if (src.empty()) throw EmptyCloudError("registration source");
    ref_ = sorted_by_id(ref);
    src_ = sorted_by_id(src);
    ref_index_ = std::make_unique<SpatialIndex>(ref_, Metric::xyz);
  }

  const PointCloud& ref() const noexcept { return ref_; }
  const PointCloud& src() const noexcept { return src_; }
  const LossTerms& terms() const noexcept { return terms_; }

  LossValue evaluate(const WarpParams& p) const {
    Eigen::MatrixXd phi;
    std::vector<Vec3> warped;
    return evaluate_impl(p, phi, warped);
  }

  // Gradient over the 6K flat parameters, with correspondences held fixed at
  // their values for `p`. Clamped terms contribute nothing.
  LossValue evaluate_with_gradient(const WarpParams& p, Eigen::VectorXd& grad) const {
    Eigen::MatrixXd phi;
    std::vector<Vec3> warped;
    LossValue loss = evaluate_impl(p, phi, warped);

    const auto K = p.anchor_count();
    const auto n_src = src_.size();
    const double inv_ref = 2.0 / static_cast<double>(ref_.size());
    const double inv_src = 2.0 / static_cast<double>(n_src);

    // dL/dy for each warped source point.
    std::vector<Vec3> g(n_src, Vec3::Zero());
    for (std::size_t j = 0; j < n_src; ++j)
      if (!loss.src_to_ref.clamped[j])
        g[j] += inv_src * (warped[j] - ref_.points[loss.src_to_ref.match[j]]);
    for (std::size_t i = 0; i < ref_.size(); ++i)
      if (!loss.ref_to_src.clamped[i]) {
        const auto j = loss.ref_to_src.match[i];
        g[j] += inv_ref * (warped[j] - ref_.points[i]);
      }

    Eigen::MatrixX2d d_centers = Eigen::MatrixX2d::Zero(K, 2);
    Eigen::VectorXd d_sigmas = Eigen::VectorXd::Zero(K);
    Eigen::MatrixX3d d_weights = Eigen::MatrixX3d::Zero(K, 3);
    for (std::size_t j = 0; j < n_src; ++j) {
      if (g[j].isZero(0.0)) continue;
      const Vec3& x = src_.points[j];
      for (Eigen::Index k = 0; k < K; ++k) {
        const double f = phi(k, static_cast<Eigen::Index>(j));
        d_weights.row(k) += f * g[j].transpose();
        const double df = p.weights.row(k).dot(g[j].transpose());
        const double s2 = p.sigmas[k] * p.sigmas[k];
        const double dx = x.x() - p.centers(k, 0);
        const double dy = x.y() - p.centers(k, 1);
        const double common = df * f * 2.0 / s2;
        d_centers(k, 0) += common * dx;
        d_centers(k, 1) += common * dy;
        d_sigmas[k] += common * (dx * dx + dy * dy) / p.sigmas[k];
      }
    }

    const double lam = terms_.lambda_reg / static_cast<double>(K);
    for (Eigen::Index k = 0; k < K; ++k) {
      const double s = p.sigmas[k];
      const double wn = p.weights.row(k).norm();
      if (wn > 0.0) d_weights.row(k) += lam * p.weights.row(k) / (wn * s * s);
      d_sigmas[k] += -2.0 * lam * wn / (s * s * s);
    }

    WarpParams gp;
    gp.centers = std::move(d_centers);
    gp.sigmas = std::move(d_sigmas);
    gp.weights = std::move(d_weights);
    grad = gp.flatten();
    return loss;
  }

 private:
  LossValue evaluate_impl(const WarpParams& p, Eigen::MatrixXd& phi, std::vector<Vec3>& warped) const {
    validate(p);
    const auto K = p.anchor_count();
    phi.resize(K, static_cast<Eigen::Index>(src_.size()));
    warped.resize(src_.size());
    for (std::size_t j = 0; j < src_.size(); ++j) {
      auto col = phi.col(static_cast<Eigen::Index>(j));
      col = kernel_row(src_.points[j], p);
      warped[j] = src_.points[j] + displacement(col, p);
    }
    PointCloud warped_cloud;
    warped_cloud.points = warped;
    warped_cloud.ids = src_.ids;
    const SpatialIndex warped_index(warped_cloud, Metric::xyz);

    LossValue loss;
    loss.chamfer = detail::chamfer_direction(ref_.points, warped_index, terms_.delta_reg, &loss.ref_to_src) +
                   detail::chamfer_direction(warped, *ref_index_, terms_.delta_reg, &loss.src_to_ref);
    loss.regularizer = motion_regularizer(p);
    loss.total = loss.chamfer + terms_.lambda_reg * loss.regularizer;
    return loss;
  }

  LossTerms terms_;
  PointCloud ref_, src_;
  std::unique_ptr<SpatialIndex> ref_index_;
};

inline LossValue total_loss(const PointCloud& ref, const PointCloud& src, const WarpParams& p,
                            double lambda_reg, double delta_reg) {
  return RegistrationProblem(ref, src, {lambda_reg, delta_reg}).evaluate(p);
}

inline Eigen::VectorXd loss_gradient(const PointCloud& ref, const PointCloud& src, const WarpParams& p,
                                     double lambda_reg, double delta_reg) {
  Eigen::VectorXd grad;
  RegistrationProblem(ref, src, {lambda_reg, delta_reg}).evaluate_with_gradient(p, grad);
  return grad;
}

}  // namespace urbancd
