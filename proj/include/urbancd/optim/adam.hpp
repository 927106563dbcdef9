#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>

#include "urbancd/core/error.hpp"

namespace urbancd {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias-corrected moments:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
template <class Scalar>
class AdamState {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  AdamState() = default;
  AdamState(Eigen::Index n, AdamConfig config)
      : config_(config), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

  std::int64_t step_count() const noexcept { return t_; }
  const Vector& first_moment() const noexcept { return m_; }
  const Vector& second_moment() const noexcept { return v_; }
  const AdamConfig& config() const noexcept { return config_; }

  void step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
      throw ShapeMismatchError("adam_step: parameter/gradient/state sizes differ");
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      const double m = b1 * static_cast<double>(m_[i]) + (1.0 - b1) * g;
      const double v = b2 * static_cast<double>(v_[i]) + (1.0 - b2) * g * g;
      m_[i] = static_cast<Scalar>(m);
      v_[i] = static_cast<Scalar>(v);
      const double update = config_.lr * (m / c1) / (std::sqrt(v / c2) + config_.eps);
      params[i] = static_cast<Scalar>(static_cast<double>(params[i]) - update);
    }
  }

 private:
  AdamConfig config_{};
  std::int64_t t_ = 0;
  Vector m_, v_;
};

// Rescales `grad` in place so its Euclidean norm is at most `max_norm`.
// Returns the norm before clipping.
template <class Derived>
double clip_global_norm(Eigen::MatrixBase<Derived>& grad, double max_norm) {
  const double norm = static_cast<double>(grad.norm());
  if (norm > max_norm && norm > 0.0) grad *= static_cast<typename Derived::Scalar>(max_norm / norm);
  return norm;
}

}  // namespace urbancd
