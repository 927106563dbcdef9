#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "urbancd/core/error.hpp"
#include "urbancd/core/random.hpp"

namespace urbancd {

// Layer widths of the permutation-invariant encoder: a shared per-point MLP
// (3 -> point_widths...), max pooling over points, then a head MLP
// (-> head_widths... -> outputs). Every hidden layer is affine + ReLU; the
// output layer is affine only.
struct NetArchitecture {
  std::vector<int> point_widths{64, 128, 1024};
  std::vector<int> head_widths{512, 256};
};

template <class Scalar>
class PointEncoderNet {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  struct Layer {
    Eigen::Index in = 0, out = 0;
    Eigen::Index weight_offset = 0, bias_offset = 0;  // into parameters()
  };

  // Forward-pass record needed by backward().
  struct Tape {
    std::vector<Matrix> point_acts;  // post-ReLU, one N x width matrix per layer
    std::vector<Eigen::Index> argmax;  // per pooled channel, the winning point row
    Vector pooled;
    std::vector<Vector> head_acts;  // post-ReLU hidden head activations
  };

  // Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the
  // output layer is additionally multiplied by `output_init_scale`.
  PointEncoderNet(const NetArchitecture& arch, Eigen::Index outputs, std::uint64_t seed,
                  double output_init_scale = 1.0)
      : outputs_(outputs) {
    if (arch.point_widths.empty()) throw ConfigError("network: need at least one per-point layer");
    if (outputs <= 0) throw ConfigError("network: output count must be positive");
    Eigen::Index offset = 0;
    auto add = [&](std::vector<Layer>& layers, Eigen::Index in, Eigen::Index out) {
      if (out <= 0) throw ConfigError("network: layer widths must be positive");
      layers.push_back(Layer{in, out, offset, offset + in * out});
      offset += in * out + out;
    };
    Eigen::Index in = 3;
    for (int w : arch.point_widths) {
      add(point_layers_, in, w);
      in = w;
    }
    for (int w : arch.head_widths) {
      add(head_layers_, in, w);
      in = w;
    }
    add(head_layers_, in, outputs);

    params_.resize(offset);
    Rng rng(seed);
    auto init = [&](const Layer& L, double scale) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(L.in));
      for (Eigen::Index i = 0; i < L.in * L.out + L.out; ++i)
        params_[L.weight_offset + i] = static_cast<Scalar>(scale * rng.uniform(-bound, bound));
    };
    for (const auto& L : point_layers_) init(L, 1.0);
    for (std::size_t l = 0; l < head_layers_.size(); ++l)
      init(head_layers_[l], l + 1 == head_layers_.size() ? output_init_scale : 1.0);
  }

  Eigen::Index output_count() const noexcept { return outputs_; }
  Eigen::Index parameter_count() const noexcept { return params_.size(); }
  Vector& parameters() noexcept { return params_; }
  const Vector& parameters() const noexcept { return params_; }
  const std::vector<Layer>& point_layers() const noexcept { return point_layers_; }
  const std::vector<Layer>& head_layers() const noexcept { return head_layers_; }

  // `points` is N x 3. The output is invariant to row permutations.
  Vector forward(const Matrix& points, Tape* tape = nullptr) const {
    if (points.cols() != 3 || points.rows() == 0)
      throw ShapeMismatchError("network: input must be a non-empty N x 3 matrix");
    Tape local;
    Tape& t = tape ? *tape : local;
    t.point_acts.clear();
    t.head_acts.clear();

    const Matrix* a = &points;
    for (const auto& L : point_layers_) {
      Matrix z = *a * weights(L).transpose();
      z.rowwise() += bias(L).transpose();
      t.point_acts.push_back(z.cwiseMax(Scalar(0)));
      a = &t.point_acts.back();
    }

    const Matrix& last = t.point_acts.back();
    t.argmax.assign(static_cast<std::size_t>(last.cols()), 0);
    t.pooled.resize(last.cols());
    for (Eigen::Index c = 0; c < last.cols(); ++c) {
      Eigen::Index best = 0;
      for (Eigen::Index r = 1; r < last.rows(); ++r)
        if (last(r, c) > last(best, c)) best = r;  // strict: lowest row wins ties
      t.argmax[static_cast<std::size_t>(c)] = best;
      t.pooled[c] = last(best, c);
    }

    Vector h = t.pooled;
    for (std::size_t l = 0; l < head_layers_.size(); ++l) {
      const auto& L = head_layers_[l];
      Vector z = weights(L) * h + bias(L);
      if (l + 1 == head_layers_.size()) return z;
      h = z.cwiseMax(Scalar(0));
      t.head_acts.push_back(h);
    }
    return h;  // unreachable: the head always has an output layer
  }

  // Gradient of a scalar loss with respect to every parameter, given the
  // loss gradient `d_out` with respect to the outputs of forward(points, &tape).
  Vector backward(const Matrix& points, const Tape& tape, const Vector& d_out) const {
    Vector grad = Vector::Zero(params_.size());

    Vector delta = d_out;
    for (std::size_t l = head_layers_.size(); l-- > 0;) {
      const auto& L = head_layers_[l];
      const Vector& input = l == 0 ? tape.pooled : tape.head_acts[l - 1];
      weight_grad(grad, L) += delta * input.transpose();
      bias_grad(grad, L) += delta;
      Vector d_in = weights(L).transpose() * delta;
      if (l > 0) d_in = d_in.cwiseProduct(relu_mask(tape.head_acts[l - 1]));
      delta = std::move(d_in);
    }

    // Max pooling routes each channel's gradient to its winning point only,
    // so the per-point layers are back-propagated over those rows alone.
    const Matrix& last = tape.point_acts.back();
    std::vector<Eigen::Index> rows(tape.argmax);
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    auto local_row = [&](Eigen::Index r) {
      return static_cast<Eigen::Index>(std::lower_bound(rows.begin(), rows.end(), r) - rows.begin());
    };

    const auto n_rows = static_cast<Eigen::Index>(rows.size());
    Matrix d = Matrix::Zero(n_rows, last.cols());
    for (Eigen::Index c = 0; c < last.cols(); ++c) {
      const auto r = tape.argmax[static_cast<std::size_t>(c)];
      if (last(r, c) > Scalar(0)) d(local_row(r), c) = delta[c];
    }

    for (std::size_t l = point_layers_.size(); l-- > 0;) {
      const auto& L = point_layers_[l];
      const Matrix& full_in = l == 0 ? points : tape.point_acts[l - 1];
      const Matrix in = full_in(rows, Eigen::all);
      weight_grad(grad, L) += d.transpose() * in;
      bias_grad(grad, L) += d.colwise().sum().transpose();
      if (l > 0) d = (d * weights(L)).cwiseProduct(relu_mask(in));
    }
    return grad;
  }

 private:
  Eigen::Map<const Matrix> weights(const Layer& L) const {
    return Eigen::Map<const Matrix>(params_.data() + L.weight_offset, L.out, L.in);
  }
  Eigen::Map<const Vector> bias(const Layer& L) const {
    return Eigen::Map<const Vector>(params_.data() + L.bias_offset, L.out);
  }
  static Eigen::Map<Matrix> weight_grad(Vector& g, const Layer& L) {
    return Eigen::Map<Matrix>(g.data() + L.weight_offset, L.out, L.in);
  }
  static Eigen::Map<Vector> bias_grad(Vector& g, const Layer& L) {
    return Eigen::Map<Vector>(g.data() + L.bias_offset, L.out);
  }
  template <class Derived>
  static auto relu_mask(const Eigen::MatrixBase<Derived>& act) {
    return (act.array() > Scalar(0)).template cast<Scalar>().matrix();
  }

  Eigen::Index outputs_;
  std::vector<Layer> point_layers_;
  std::vector<Layer> head_layers_;
  Vector params_;
};

}  // namespace urbancd
