#pragma once

// Dense multilayer perceptrons with exact reverse-mode gradients.
//
// Batches are stored column-wise: a batch of n samples of width w is a
// w x n matrix. All routines are templated on the scalar type; the
// experiments use double.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgan/random.hpp"

namespace cgan {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = Vec<double>;
using Matrix = Mat<double>;
using Index = Eigen::Index;

enum class Activation { Elu, Sigmoid, Linear };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Elu: return "elu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Linear: return "linear";
  }
  return "?";
}

// Raised when a parameter update or loss turns non-finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ELU with shape parameter 1.
template <typename Scalar>
Scalar elu(Scalar x) {
  return x >= Scalar(0) ? x : std::expm1(x);
}

template <typename Scalar>
Scalar elu_derivative(Scalar x) {
  return x >= Scalar(0) ? Scalar(1) : std::exp(x);
}

// Logistic function, clamped strictly inside (0, 1) so that log(s) and
// log(1 - s) stay finite.
template <typename Scalar>
Scalar sigmoid(Scalar x) {
  Scalar s;
  if (x >= Scalar(0)) {
    s = Scalar(1) / (Scalar(1) + std::exp(-x));
  } else {
    const Scalar e = std::exp(x);
    s = e / (Scalar(1) + e);
  }
  constexpr Scalar lo = std::numeric_limits<Scalar>::min();
  constexpr Scalar hi = Scalar(1) - std::numeric_limits<Scalar>::epsilon() / Scalar(2);
  return s < lo ? lo : (s > hi ? hi : s);
}

template <typename Scalar>
struct DenseLayer {
  Mat<Scalar> weight;  // out x in
  Vec<Scalar> bias;    // out
  Activation activation = Activation::Linear;
};

template <typename Scalar>
class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(std::vector<DenseLayer<Scalar>> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw std::invalid_argument("Mlp needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.weight.rows() <= 0 || l.weight.cols() <= 0)
        throw std::invalid_argument("Mlp layer " + std::to_string(i) + " has an empty weight");
      if (l.bias.size() != l.weight.rows())
        throw std::invalid_argument("Mlp layer " + std::to_string(i) + " bias/weight mismatch");
      if (i > 0 && l.weight.cols() != layers_[i - 1].weight.rows())
        throw std::invalid_argument("Mlp layer " + std::to_string(i) + " width mismatch");
      if (i + 1 < layers_.size() && l.activation != Activation::Elu)
        throw std::invalid_argument("Mlp hidden layers must use ELU");
    }
  }

  Index input_width() const { return layers_.front().weight.cols(); }
  Index output_width() const { return layers_.back().weight.rows(); }
  std::size_t depth() const { return layers_.size(); }
  Activation output_activation() const { return layers_.back().activation; }

  std::vector<Index> widths() const {
    std::vector<Index> w{input_width()};
    for (const auto& l : layers_) w.push_back(l.weight.rows());
    return w;
  }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  const DenseLayer<Scalar>& layer(std::size_t i) const { return layers_.at(i); }

  // Shape-preserving mutable views. Any mutable access invalidates caches
  // taken from earlier forward passes.
  Eigen::Ref<Mat<Scalar>> weight(std::size_t i) {
    ++revision_;
    return layers_.at(i).weight;
  }
  Eigen::Ref<Vec<Scalar>> bias(std::size_t i) {
    ++revision_;
    return layers_.at(i).bias;
  }

  std::uint64_t revision() const { return revision_; }

 private:
  std::vector<DenseLayer<Scalar>> layers_;
  std::uint64_t revision_ = 0;
};

template <typename Scalar>
struct ForwardCache {
  std::vector<Mat<Scalar>> inputs;  // input to each layer
  std::vector<Mat<Scalar>> pre;     // pre-activation of each layer
  std::vector<Mat<Scalar>> post;    // activation of each layer
  std::uint64_t revision = 0;
};

template <typename Scalar>
struct ForwardResult {
  Mat<Scalar> output;
  ForwardCache<Scalar> cache;
};

template <typename Scalar>
struct GradientBundle {
  std::vector<Mat<Scalar>> weight;
  std::vector<Vec<Scalar>> bias;
  Mat<Scalar> input;  // d(loss)/d(input), one column per sample
};

namespace detail {

template <typename Scalar>
void activate(Activation a, const Mat<Scalar>& pre, Mat<Scalar>& post) {
  switch (a) {
    case Activation::Elu:
      post = pre.array().max(Scalar(0)) + (pre.array().min(Scalar(0)).exp() - Scalar(1));
      break;
    case Activation::Sigmoid: post = pre.unaryExpr([](Scalar v) { return sigmoid(v); }); break;
    case Activation::Linear: post = pre; break;
  }
}

// Multiplies grad in place by the activation derivative.
template <typename Scalar>
void scale_by_derivative(Activation a, const Mat<Scalar>& post,
                         Mat<Scalar>& grad) {
  switch (a) {
    case Activation::Elu:
      // exp(x) = elu(x) + 1 on the negative branch, 1 on the positive one
      grad.array() *= post.array().min(Scalar(0)) + Scalar(1);
      break;
    case Activation::Sigmoid:
      grad.array() *= (post.array() * (Scalar(1) - post.array()));
      break;
    case Activation::Linear: break;
  }
}

inline void check_width(Index expected, Index got, const char* what) {
  if (expected != got)
    throw std::invalid_argument(std::string(what) + ": expected width " + std::to_string(expected) +
                                ", got " + std::to_string(got));
}

}  // namespace detail

// Glorot-uniform weights, zero biases. Hidden layers are ELU.
template <typename Scalar>
Mlp<Scalar> init_params(const std::vector<Index>& widths, Activation output_activation,
                        Random& rng) {
  if (widths.size() < 2) throw std::invalid_argument("init_params: need at least two widths");
  for (Index w : widths)
    if (w <= 0) throw std::invalid_argument("init_params: widths must be positive");
  std::vector<DenseLayer<Scalar>> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const Index fan_in = widths[i];
    const Index fan_out = widths[i + 1];
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer<Scalar> layer;
    layer.weight.resize(fan_out, fan_in);
    for (Index r = 0; r < fan_out; ++r)
      for (Index c = 0; c < fan_in; ++c)
        layer.weight(r, c) = static_cast<Scalar>(rng.uniform(-s, s));
    layer.bias = Vec<Scalar>::Zero(fan_out);
    layer.activation = (i + 2 == widths.size()) ? output_activation : Activation::Elu;
    layers.push_back(std::move(layer));
  }
  return Mlp<Scalar>(std::move(layers));
}

template <typename Scalar, typename Derived>
ForwardResult<Scalar> forward(const Mlp<Scalar>& net, const Eigen::MatrixBase<Derived>& input) {
  detail::check_width(net.input_width(), input.rows(), "forward");
  ForwardResult<Scalar> result;
  auto& cache = result.cache;
  cache.revision = net.revision();
  const std::size_t depth = net.depth();
  cache.inputs.resize(depth);
  cache.pre.resize(depth);
  cache.post.resize(depth);
  for (std::size_t i = 0; i < depth; ++i) {
    const auto& l = net.layer(i);
    cache.inputs[i] = (i == 0) ? Mat<Scalar>(input.derived()) : cache.post[i - 1];
    cache.pre[i].noalias() = l.weight * cache.inputs[i];
    cache.pre[i].colwise() += l.bias;
    detail::activate(l.activation, cache.pre[i], cache.post[i]);
  }
  result.output = cache.post.back();
  return result;
}

// Forward pass without retaining intermediate values.
template <typename Scalar, typename Derived>
Mat<Scalar> predict(const Mlp<Scalar>& net, const Eigen::MatrixBase<Derived>& input) {
  detail::check_width(net.input_width(), input.rows(), "predict");
  Mat<Scalar> act = input.derived();
  Mat<Scalar> pre;
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const auto& l = net.layer(i);
    pre.noalias() = l.weight * act;
    pre.colwise() += l.bias;
    detail::activate(l.activation, pre, act);
  }
  return act;
}

// Reverse pass. output_grad holds d(loss)/d(output) per sample; parameter
// gradients are summed over the batch.
template <typename Scalar, typename Derived>
GradientBundle<Scalar> backward(const Mlp<Scalar>& net, const ForwardCache<Scalar>& cache,
                                const Eigen::MatrixBase<Derived>& output_grad) {
  if (cache.revision != net.revision() || cache.pre.size() != net.depth())
    throw std::logic_error("backward: cache does not belong to the current parameters");
  const Index batch = cache.pre.back().cols();
  if (output_grad.rows() != net.output_width() || output_grad.cols() != batch)
    throw std::invalid_argument("backward: output gradient shape mismatch");

  const std::size_t depth = net.depth();
  GradientBundle<Scalar> grads;
  grads.weight.resize(depth);
  grads.bias.resize(depth);
  Mat<Scalar> delta = output_grad;
  for (std::size_t k = depth; k-- > 0;) {
    const auto& l = net.layer(k);
    detail::scale_by_derivative(l.activation, cache.post[k], delta);
    grads.weight[k].noalias() = delta * cache.inputs[k].transpose();
    grads.bias[k] = delta.rowwise().sum();
    Mat<Scalar> upstream;
    upstream.noalias() = l.weight.transpose() * delta;
    delta = std::move(upstream);
  }
  grads.input = std::move(delta);
  return grads;
}

// p <- p - lr * grad(p) for every parameter.
template <typename Scalar>
void sgd_step(Mlp<Scalar>& net, const GradientBundle<Scalar>& grads, Scalar lr) {
  if (grads.weight.size() != net.depth() || grads.bias.size() != net.depth())
    throw std::invalid_argument("sgd_step: gradient bundle depth mismatch");
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const auto& l = net.layer(i);
    if (grads.weight[i].rows() != l.weight.rows() || grads.weight[i].cols() != l.weight.cols() ||
        grads.bias[i].size() != l.bias.size())
      throw std::invalid_argument("sgd_step: gradient shape mismatch at layer " + std::to_string(i));
    if (!grads.weight[i].allFinite() || !grads.bias[i].allFinite())
      throw DivergenceError("sgd_step: non-finite gradient at layer " + std::to_string(i));
  }
  for (std::size_t i = 0; i < net.depth(); ++i) {
    net.weight(i) -= lr * grads.weight[i];
    net.bias(i) -= lr * grads.bias[i];
  }
}

// Plain-text snapshot: layer count, then (rows, cols, activation code) per
// layer, then each layer's row-major weights followed by its biases. One
// value per line, 17 significant digits.
template <typename Scalar>
void save_snapshot(const Mlp<Scalar>& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write snapshot " + path);
  out << std::setprecision(17);
  out << net.depth() << '\n';
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const auto& l = net.layer(i);
    out << l.weight.rows() << '\n' << l.weight.cols() << '\n'
        << static_cast<int>(l.activation) << '\n';
  }
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const auto& l = net.layer(i);
    for (Index r = 0; r < l.weight.rows(); ++r)
      for (Index c = 0; c < l.weight.cols(); ++c) out << l.weight(r, c) << '\n';
    for (Index r = 0; r < l.bias.size(); ++r) out << l.bias(r) << '\n';
  }
}

template <typename Scalar>
Mlp<Scalar> load_snapshot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read snapshot " + path);
  std::size_t depth = 0;
  if (!(in >> depth) || depth == 0) throw std::runtime_error("snapshot: bad layer count");
  std::vector<DenseLayer<Scalar>> layers(depth);
  for (auto& l : layers) {
    Index rows = 0, cols = 0;
    int act = 0;
    if (!(in >> rows >> cols >> act) || rows <= 0 || cols <= 0 || act < 0 || act > 2)
      throw std::runtime_error("snapshot: bad layer shape");
    l.weight.resize(rows, cols);
    l.bias.resize(rows);
    l.activation = static_cast<Activation>(act);
  }
  for (auto& l : layers) {
    for (Index r = 0; r < l.weight.rows(); ++r)
      for (Index c = 0; c < l.weight.cols(); ++c)
        if (!(in >> l.weight(r, c))) throw std::runtime_error("snapshot: truncated weights");
    for (Index r = 0; r < l.bias.size(); ++r)
      if (!(in >> l.bias(r))) throw std::runtime_error("snapshot: truncated biases");
  }
  return Mlp<Scalar>(std::move(layers));
}

}  // namespace cgan
