#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "urbancd/core/random.hpp"
#include "urbancd/optim/point_encoder.hpp"
#include "urbancd/optim/registration.hpp"
#include "urbancd/registration/loss.hpp"

namespace urbancd {

struct GradientCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // near a clamp, correspondence or activation switch
  Eigen::Index worst = -1;
};

// |a - b| / max(|a|, |b|, floor). The floor keeps round-off on vanishing
// gradients from reading as a large relative error.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

namespace detail {

inline bool same_matches(const LossValue& a, const LossValue& b) {
  return a.ref_to_src == b.ref_to_src && a.src_to_ref == b.src_to_ref;
}

}  // namespace detail

// Central differences of total loss against the analytic gradient, on every
// scalar of `p`. A scalar is skipped when moving it by +-`exclusion` changes
// any correspondence or clamp decision.
inline GradientCheckResult loss_gradient_check(const RegistrationProblem& problem, const WarpParams& p,
                                               double h = 1e-5, double exclusion = 1e-4) {
  Eigen::VectorXd grad;
  const LossValue base = problem.evaluate_with_gradient(p, grad);
  const Eigen::VectorXd theta = p.flatten();
  GradientCheckResult r;
  auto at = [&](Eigen::Index i, double delta) {
    Eigen::VectorXd t = theta;
    t[i] += delta;
    return problem.evaluate(WarpParams::unflatten(t));
  };
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (!detail::same_matches(base, at(i, exclusion)) || !detail::same_matches(base, at(i, -exclusion))) {
      ++r.skipped;
      continue;
    }
    const double fd = (at(i, h).total - at(i, -h).total) / (2.0 * h);
    const double e = relative_error(grad[i], fd);
    if (e >= r.max_rel_error) {
      r.max_rel_error = e;
      r.worst = i;
    }
    ++r.checked;
  }
  return r;
}

// Network plus decoder plus registration loss, as one function of the
// network weights.
struct NetworkObjective {
  const RegistrationProblem& problem;
  const ThetaDecoder& decoder;
  Eigen::MatrixXd input;  // N x 3

  struct Eval {
    LossValue loss;
    PointEncoderNet<double>::Tape tape;
    Eigen::VectorXd raw;
  };

  Eval evaluate(const PointEncoderNet<double>& net) const {
    Eval e;
    e.raw = net.forward(input, &e.tape);
    e.loss = problem.evaluate(decoder.decode(e.raw));
    return e;
  }

  Eigen::VectorXd gradient(const PointEncoderNet<double>& net) const {
    PointEncoderNet<double>::Tape tape;
    const Eigen::VectorXd raw = net.forward(input, &tape);
    Eigen::VectorXd g_theta;
    problem.evaluate_with_gradient(decoder.decode(raw), g_theta);
    return net.backward(input, tape, decoder.backward(raw, g_theta));
  }
};

namespace detail {

// Everything that makes the network objective piecewise: ReLU patterns,
// pooling winners and Chamfer correspondences.
inline bool same_pieces(const NetworkObjective::Eval& a, const NetworkObjective::Eval& b) {
  if (a.tape.argmax != b.tape.argmax || !same_matches(a.loss, b.loss)) return false;
  for (std::size_t l = 0; l < a.tape.point_acts.size(); ++l)
    if (((a.tape.point_acts[l].array() > 0.0) != (b.tape.point_acts[l].array() > 0.0)).any()) return false;
  for (std::size_t l = 0; l < a.tape.head_acts.size(); ++l)
    if (((a.tape.head_acts[l].array() > 0.0) != (b.tape.head_acts[l].array() > 0.0)).any()) return false;
  return true;
}

}  // namespace detail

// Back-propagated weight gradients against central differences on `samples`
// weights, spread evenly over the layers and drawn at random within each.
inline GradientCheckResult network_gradient_check(PointEncoderNet<double>& net, const NetworkObjective& objective,
                                                  std::uint64_t seed, int samples = 200, double h = 1e-5) {
  const Eigen::VectorXd grad = objective.gradient(net);
  const auto base = objective.evaluate(net);

  std::vector<std::pair<Eigen::Index, Eigen::Index>> blocks;  // [begin, end) per layer
  for (const auto* layers : {&net.point_layers(), &net.head_layers()})
    for (const auto& L : *layers) blocks.emplace_back(L.weight_offset, L.bias_offset + L.out);

  Rng rng(seed);
  GradientCheckResult r;
  auto& w = net.parameters();
  for (int s = 0; s < samples; ++s) {
    const auto& [begin, end] = blocks[static_cast<std::size_t>(s) % blocks.size()];
    const Eigen::Index i = begin + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(end - begin)));
    const double w0 = w[i];
    w[i] = w0 + h;
    const auto plus = objective.evaluate(net);
    w[i] = w0 - h;
    const auto minus = objective.evaluate(net);
    w[i] = w0;
    if (!detail::same_pieces(base, plus) || !detail::same_pieces(base, minus)) {
      ++r.skipped;
      continue;
    }
    const double fd = (plus.loss.total - minus.loss.total) / (2.0 * h);
    const double e = relative_error(grad[i], fd);
    if (e >= r.max_rel_error) {
      r.max_rel_error = e;
      r.worst = i;
    }
    ++r.checked;
  }
  return r;
}

}  // namespace urbancd
