#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "urbancd/core/random.hpp"
#include "urbancd/optim/adam.hpp"
#include "urbancd/optim/point_encoder.hpp"
#include "urbancd/registration/loss.hpp"

namespace urbancd {

enum class OptimizerMode { direct, network };

inline const char* to_string(OptimizerMode m) { return m == OptimizerMode::direct ? "direct" : "network"; }

struct RegistrationConfig {
  int K = 36;
  double delta_reg = 10.0;
  double lambda_reg = 0.01;
  AdamConfig adam{};
  double grad_clip = 1e3;
  std::size_t n_net = 4096;
  NetArchitecture arch{};
  // Scale of the network's output-layer initialization. Zero starts the
  // network exactly at the identity warp, the same start as direct mode.
  double output_init_scale = 0.0;

  LossTerms loss_terms() const { return {lambda_reg, delta_reg}; }
};

struct TraceRow {
  std::int64_t step = 0;
  double chamfer = 0.0;
  double regularizer = 0.0;
  double total = 0.0;

  bool operator==(const TraceRow&) const = default;
};

struct OptimizationReport {
  OptimizerMode mode = OptimizerMode::direct;
  std::vector<TraceRow> trace;  // loss of the parameters entering each step
  WarpParams final_params;
  LossValue final_loss;  // loss of final_params
  std::int64_t steps = 0;
  double seconds = 0.0;
};

// Optional early exit: called with each trace row; returning true stops
// before that step's update, so the final parameters are the ones the row
// measured.
using StopRule = std::function<bool(const TraceRow&)>;

class DivergedError : public Error {
 public:
  DivergedError(std::int64_t step, std::vector<TraceRow> trace)
      : Error("optimization diverged: non-finite loss at step " + std::to_string(step)),
        trace_(std::move(trace)) {}
  const std::vector<TraceRow>& trace() const noexcept { return trace_; }
  const char* kind() const noexcept override { return "diverged"; }

 private:
  std::vector<TraceRow> trace_;
};

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
inline double softplus_inverse(double y) { return y + std::log(-std::expm1(-y)); }
inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Maps an unconstrained 6K vector to WarpParams (same flat layout):
//   centers = anchor + raw_c,  sigma = softplus(raw_s + sigma_shift),  W = raw_w.
// With zero raw input this yields the grid centers, bandwidth `sigma0` and
// zero displacement.
class ThetaDecoder {
 public:
  ThetaDecoder(const AnchorGrid& grid, double sigma0)
      : anchors_(identity_warp(grid, sigma0).flatten()),
        K_(static_cast<Eigen::Index>(grid.centers.size())),
        sigma_shift_(softplus_inverse(sigma0)) {}

  Eigen::Index anchor_count() const noexcept { return K_; }

  WarpParams decode(const Eigen::VectorXd& raw) const {
    Eigen::VectorXd v = raw;
    v.head(2 * K_) += anchors_.head(2 * K_);
    for (Eigen::Index k = 0; k < K_; ++k) v[2 * K_ + k] = softplus(raw[2 * K_ + k] + sigma_shift_);
    return WarpParams::unflatten(v);
  }

  Eigen::VectorXd encode(const WarpParams& p) const {
    Eigen::VectorXd v = p.flatten();
    v.head(2 * K_) -= anchors_.head(2 * K_);
    for (Eigen::Index k = 0; k < K_; ++k) v[2 * K_ + k] = softplus_inverse(p.sigmas[k]) - sigma_shift_;
    return v;
  }

  // Chain rule from dL/dtheta to dL/draw.
  Eigen::VectorXd backward(const Eigen::VectorXd& raw, const Eigen::VectorXd& d_theta) const {
    Eigen::VectorXd d = d_theta;
    for (Eigen::Index k = 0; k < K_; ++k) d[2 * K_ + k] *= sigmoid(raw[2 * K_ + k] + sigma_shift_);
    return d;
  }

 private:
  Eigen::VectorXd anchors_;
  Eigen::Index K_;
  double sigma_shift_;
};

namespace detail {

inline TraceRow record(std::int64_t step, const LossValue& loss, std::vector<TraceRow>& trace) {
  TraceRow row{step, loss.chamfer, loss.regularizer, loss.total};
  trace.push_back(row);
  if (!std::isfinite(loss.total)) throw DivergedError(step, trace);
  return row;
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

// Adam directly on the warp parameters, with sigma reparameterized through
// softplus so it stays positive. Bandwidth and centers of `init` define the
// reparameterization origin.
inline OptimizationReport optimize_direct(const PointCloud& ref, const PointCloud& src, const WarpParams& init,
                                          std::int64_t steps, const RegistrationConfig& config,
                                          const StopRule& stop = {}) {
  if (steps < 1) throw ConfigError("optimize_direct: steps must be >= 1");
  validate(init);
  const auto start = std::chrono::steady_clock::now();
  const RegistrationProblem problem(ref, src, config.loss_terms());

  AnchorGrid origin;
  for (Eigen::Index k = 0; k < init.anchor_count(); ++k) origin.centers.push_back(init.centers.row(k).transpose());
  const ThetaDecoder decoder(origin, 1.0);
  Eigen::VectorXd raw = decoder.encode(init);
  AdamState<double> adam(raw.size(), config.adam);

  OptimizationReport report;
  report.mode = OptimizerMode::direct;
  report.trace.reserve(static_cast<std::size_t>(steps));
  Eigen::VectorXd grad;
  for (std::int64_t step = 0; step < steps; ++step) {
    const WarpParams theta = decoder.decode(raw);
    const LossValue loss = problem.evaluate_with_gradient(theta, grad);
    const TraceRow row = detail::record(step, loss, report.trace);
    if (stop && stop(row)) break;
    Eigen::VectorXd d_raw = decoder.backward(raw, grad);
    clip_global_norm(d_raw, config.grad_clip);
    adam.step(raw, d_raw);
  }
  report.final_params = decoder.decode(raw);
  report.final_loss = problem.evaluate(report.final_params);
  report.steps = static_cast<std::int64_t>(report.trace.size());
  report.seconds = detail::seconds_since(start);
  return report;
}

// Network input: up to n_max points of `cloud` (seeded uniform choice,
// kept in ascending-id order), centered on the xy box center and mean
// height and scaled by the largest half-extent.
template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> network_input(const PointCloud& cloud, std::size_t n_max,
                                                                     std::uint64_t seed) {
  const PointCloud sorted = sorted_by_id(cloud);
  std::vector<std::size_t> pick(sorted.size());
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  if (pick.size() > n_max) {
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t i = 0; i < n_max; ++i) std::swap(pick[i], pick[i + rng.below(pick.size() - i)]);
    pick.resize(n_max);
    std::sort(pick.begin(), pick.end());
  }
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  double mean_z = 0.0;
  for (const auto& p : sorted.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
    mean_z += p.z();
  }
  mean_z /= static_cast<double>(sorted.size());
  const Vec3 center(0.5 * (lo.x() + hi.x()), 0.5 * (lo.y() + hi.y()), mean_z);
  double scale = 0.5 * (hi - lo).maxCoeff();
  if (!(scale > 0.0)) scale = 1.0;

  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> x(static_cast<Eigen::Index>(pick.size()), 3);
  for (std::size_t i = 0; i < pick.size(); ++i)
    for (int c = 0; c < 3; ++c)
      x(static_cast<Eigen::Index>(i), c) = static_cast<Scalar>((sorted.points[pick[i]][c] - center[c]) / scale);
  return x;
}

// Optimization-as-training: a point encoder fed the (downsampled) source
// outputs the raw warp parameters; its weights are trained with Adam on the
// full-cloud registration loss.
template <class Scalar = float>
OptimizationReport optimize_network(const PointCloud& ref, const PointCloud& src, std::int64_t steps,
                                    std::uint64_t seed, const RegistrationConfig& config, const StopRule& stop = {}) {
  using Net = PointEncoderNet<Scalar>;
  if (steps < 1) throw ConfigError("optimize_network: steps must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  const RegistrationProblem problem(ref, src, config.loss_terms());
  const AnchorGrid grid = make_anchor_grid(ref, src, config.K);
  const ThetaDecoder decoder(grid, grid.default_sigma());

  const auto input = network_input<Scalar>(src, config.n_net, seed);
  Net net(config.arch, 6 * static_cast<Eigen::Index>(config.K), seed, config.output_init_scale);
  AdamState<Scalar> adam(net.parameter_count(), config.adam);

  OptimizationReport report;
  report.mode = OptimizerMode::network;
  report.trace.reserve(static_cast<std::size_t>(steps));
  typename Net::Tape tape;
  Eigen::VectorXd grad_theta;
  for (std::int64_t step = 0; step < steps; ++step) {
    const Eigen::VectorXd raw = net.forward(input, &tape).template cast<double>();
    const LossValue loss = problem.evaluate_with_gradient(decoder.decode(raw), grad_theta);
    const TraceRow row = detail::record(step, loss, report.trace);
    if (stop && stop(row)) break;
    const typename Net::Vector d_out = decoder.backward(raw, grad_theta).template cast<Scalar>();
    typename Net::Vector grad = net.backward(input, tape, d_out);
    clip_global_norm(grad, config.grad_clip);
    adam.step(net.parameters(), grad);
  }
  report.final_params = decoder.decode(net.forward(input).template cast<double>());
  report.final_loss = problem.evaluate(report.final_params);
  report.steps = static_cast<std::int64_t>(report.trace.size());
  report.seconds = detail::seconds_since(start);
  return report;
}

}  // namespace urbancd
