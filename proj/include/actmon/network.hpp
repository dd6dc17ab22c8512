#pragma once

// Minimal feed-forward reference network. Tensors travel as flat vectors in
// row-major order; `Shape` records the 2-D layout a convolution needs.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "actmon/error.hpp"
#include "actmon/types.hpp"

namespace actmon {

struct Shape {
  Index rows = 0;
  Index cols = 1;

  Index size() const noexcept { return rows * cols; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline constexpr double kLeakySlope = 0.01;

template <typename Scalar>
constexpr Scalar leaky_relu(Scalar v) noexcept {
  return v > Scalar(0) ? v : Scalar(kLeakySlope) * v;
}

/// Derivative used by backprop; at exactly 0 the "otherwise" branch applies.
template <typename Scalar>
constexpr Scalar leaky_relu_slope(Scalar v) noexcept {
  return v > Scalar(0) ? Scalar(1) : Scalar(kLeakySlope);
}

/// y = W x + b, W is (out x in).
template <typename Scalar>
struct DenseLayer {
  MatrixX<Scalar> weights;
  VectorX<Scalar> bias;
};

/// Single channel, stride 1, valid padding.
template <typename Scalar>
struct Conv2dLayer {
  MatrixX<Scalar> filter;
  Scalar bias = Scalar(0);
};

/// Inference-mode batch normalization:
/// y = gamma * (x - running_mean) / sqrt(running_var + epsilon) + beta.
template <typename Scalar>
struct BatchNormLayer {
  VectorX<Scalar> gamma;
  VectorX<Scalar> beta;
  VectorX<Scalar> running_mean;
  VectorX<Scalar> running_var;
  Scalar epsilon = Scalar(1e-5);

  VectorX<Scalar> scale() const {
    return (gamma.array() / (running_var.array() + epsilon).sqrt()).matrix();
  }
};

struct LeakyReluLayer {};

template <typename Scalar>
using Layer =
    std::variant<DenseLayer<Scalar>, Conv2dLayer<Scalar>, BatchNormLayer<Scalar>, LeakyReluLayer>;

enum class LayerKind { Dense, Conv2d, BatchNorm, LeakyRelu };

template <typename Scalar>
LayerKind kind_of(const Layer<Scalar>& layer) {
  return static_cast<LayerKind>(layer.index());
}

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

/// Layers with their input/output shapes checked end to end on construction.
template <typename Scalar>
class Network {
 public:
  using scalar_type = Scalar;

  Network() = default;
  Network(Shape input_shape, std::vector<Layer<Scalar>> layers)
      : layers_(std::move(layers)) {
    if (input_shape.size() <= 0) throw ValidationError("network input shape is empty");
    shapes_.reserve(layers_.size() + 1);
    shapes_.push_back(input_shape);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      shapes_.push_back(std::visit(
          [&](const auto& layer) { return output_shape(layer, shapes_.back(), l); }, layers_[l]));
    }
  }

  const Shape& input_shape() const { return shapes_.front(); }
  const Shape& output_shape() const { return shapes_.back(); }
  /// shapes()[l] is the input shape of layer l; shapes().back() the output.
  const std::vector<Shape>& shapes() const noexcept { return shapes_; }
  const std::vector<Layer<Scalar>>& layers() const noexcept { return layers_; }
  std::size_t depth() const noexcept { return layers_.size(); }

  template <typename Other>
  Network<Other> cast() const {
    std::vector<Layer<Other>> out;
    out.reserve(layers_.size());
    for (const auto& layer : layers_) {
      out.push_back(std::visit(
          [](const auto& src) -> Layer<Other> {
            using T = std::decay_t<decltype(src)>;
            if constexpr (std::is_same_v<T, DenseLayer<Scalar>>) {
              return DenseLayer<Other>{src.weights.template cast<Other>(),
                                       src.bias.template cast<Other>()};
            } else if constexpr (std::is_same_v<T, Conv2dLayer<Scalar>>) {
              return Conv2dLayer<Other>{src.filter.template cast<Other>(), Other(src.bias)};
            } else if constexpr (std::is_same_v<T, BatchNormLayer<Scalar>>) {
              return BatchNormLayer<Other>{
                  src.gamma.template cast<Other>(), src.beta.template cast<Other>(),
                  src.running_mean.template cast<Other>(), src.running_var.template cast<Other>(),
                  Other(src.epsilon)};
            } else {
              return LeakyReluLayer{};
            }
          },
          layer));
    }
    return Network<Other>(input_shape(), std::move(out));
  }

  /// Mutable access for post-construction parameter updates that keep shapes.
  Layer<Scalar>& mutable_layer(std::size_t l) { return layers_.at(l); }

 private:
  static std::string where(std::size_t l) { return "layer " + std::to_string(l) + ": "; }

  static Shape output_shape(const DenseLayer<Scalar>& d, const Shape& in, std::size_t l) {
    if (d.weights.cols() != in.size()) {
      throw ValidationError(where(l) + "dense weights have " + std::to_string(d.weights.cols()) +
                            " columns, previous layer outputs " + std::to_string(in.size()));
    }
    if (d.bias.size() != d.weights.rows() || d.weights.rows() == 0) {
      throw ValidationError(where(l) + "dense bias length does not match weight rows");
    }
    return Shape{d.weights.rows(), 1};
  }
  static Shape output_shape(const Conv2dLayer<Scalar>& c, const Shape& in, std::size_t l) {
    if (c.filter.rows() < 1 || c.filter.cols() < 1 || c.filter.rows() > in.rows ||
        c.filter.cols() > in.cols) {
      throw ValidationError(where(l) + "conv2d filter does not fit the input");
    }
    return Shape{in.rows - c.filter.rows() + 1, in.cols - c.filter.cols() + 1};
  }
  static Shape output_shape(const BatchNormLayer<Scalar>& b, const Shape& in, std::size_t l) {
    const auto n = in.size();
    if (b.gamma.size() != n || b.beta.size() != n || b.running_mean.size() != n ||
        b.running_var.size() != n) {
      throw ValidationError(where(l) + "batchnorm parameters must have " + std::to_string(n) +
                            " units");
    }
    if (!(b.epsilon >= Scalar(0)) || (b.running_var.array() < Scalar(0)).any() ||
        !((b.running_var.array() + b.epsilon) > Scalar(0)).all()) {
      throw ValidationError(where(l) + "batchnorm needs running_var >= 0, epsilon >= 0 and "
                                       "running_var + epsilon > 0");
    }
    return in;
  }
  static Shape output_shape(const LeakyReluLayer&, const Shape& in, std::size_t) { return in; }

  std::vector<Layer<Scalar>> layers_;
  std::vector<Shape> shapes_;
};

/// Activations per layer: entry 0 is the flattened input, entry l + 1 the
/// output of layer l.
template <typename Scalar>
using ForwardTrace = std::vector<VectorX<Scalar>>;

namespace detail {

template <typename Scalar>
using RowMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
VectorX<Scalar> apply(const DenseLayer<Scalar>& d, const VectorX<Scalar>& x, const Shape&) {
  return d.weights * x + d.bias;
}

template <typename Scalar>
VectorX<Scalar> apply(const Conv2dLayer<Scalar>& c, const VectorX<Scalar>& x, const Shape& in) {
  const Eigen::Map<const RowMajor<Scalar>> image(x.data(), in.rows, in.cols);
  const Index kr = c.filter.rows(), kc = c.filter.cols();
  const Index out_rows = in.rows - kr + 1, out_cols = in.cols - kc + 1;
  VectorX<Scalar> y(out_rows * out_cols);
  Eigen::Map<RowMajor<Scalar>> out(y.data(), out_rows, out_cols);
  for (Index r = 0; r < out_rows; ++r)
    for (Index col = 0; col < out_cols; ++col)
      out(r, col) = image.block(r, col, kr, kc).cwiseProduct(c.filter).sum() + c.bias;
  return y;
}

template <typename Scalar>
VectorX<Scalar> apply(const BatchNormLayer<Scalar>& b, const VectorX<Scalar>& x, const Shape&) {
  return (b.scale().array() * (x - b.running_mean).array() + b.beta.array()).matrix();
}

template <typename Scalar>
VectorX<Scalar> apply(const LeakyReluLayer&, const VectorX<Scalar>& x, const Shape&) {
  return x.unaryExpr([](Scalar v) { return leaky_relu(v); });
}

template <typename Scalar>
VectorX<Scalar> backward(const DenseLayer<Scalar>& d, const VectorX<Scalar>&,
                         const VectorX<Scalar>& grad_out, const Shape&) {
  return d.weights.transpose() * grad_out;
}

template <typename Scalar>
VectorX<Scalar> backward(const Conv2dLayer<Scalar>& c, const VectorX<Scalar>&,
                         const VectorX<Scalar>& grad_out, const Shape& in) {
  const Index kr = c.filter.rows(), kc = c.filter.cols();
  const Index out_rows = in.rows - kr + 1, out_cols = in.cols - kc + 1;
  const Eigen::Map<const RowMajor<Scalar>> g(grad_out.data(), out_rows, out_cols);
  VectorX<Scalar> grad_in = VectorX<Scalar>::Zero(in.size());
  Eigen::Map<RowMajor<Scalar>> gi(grad_in.data(), in.rows, in.cols);
  for (Index r = 0; r < out_rows; ++r)
    for (Index col = 0; col < out_cols; ++col) gi.block(r, col, kr, kc) += g(r, col) * c.filter;
  return grad_in;
}

template <typename Scalar>
VectorX<Scalar> backward(const BatchNormLayer<Scalar>& b, const VectorX<Scalar>&,
                         const VectorX<Scalar>& grad_out, const Shape&) {
  return b.scale().cwiseProduct(grad_out);
}

template <typename Scalar>
VectorX<Scalar> backward(const LeakyReluLayer&, const VectorX<Scalar>& x,
                         const VectorX<Scalar>& grad_out, const Shape&) {
  return (grad_out.array() * x.unaryExpr([](Scalar v) { return leaky_relu_slope(v); }).array())
      .matrix();
}

template <typename Scalar, typename Derived>
void check_input(const Network<Scalar>& net, const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != net.input_shape().size()) {
    throw ValidationError("input has " + std::to_string(x.size()) + " elements, network expects " +
                          std::to_string(net.input_shape().size()));
  }
  if (!x.allFinite()) throw ValidationError("network input contains a non-finite value");
}

}  // namespace detail

template <typename Scalar>
struct ForwardResult {
  VectorX<Scalar> output;
  ForwardTrace<Scalar> trace;
};

template <typename Scalar, typename Derived>
ForwardResult<Scalar> forward_with_trace(const Network<Scalar>& net,
                                         const Eigen::MatrixBase<Derived>& x) {
  detail::check_input(net, x);
  ForwardTrace<Scalar> trace;
  trace.reserve(net.depth() + 1);
  trace.push_back(x.template cast<Scalar>());
  for (std::size_t l = 0; l < net.depth(); ++l) {
    trace.push_back(std::visit(
        [&](const auto& layer) { return detail::apply(layer, trace.back(), net.shapes()[l]); },
        net.layers()[l]));
  }
  VectorX<Scalar> output = trace.back();
  return {std::move(output), std::move(trace)};
}

template <typename Scalar, typename Derived>
VectorX<Scalar> forward(const Network<Scalar>& net, const Eigen::MatrixBase<Derived>& x) {
  detail::check_input(net, x);
  VectorX<Scalar> h = x.template cast<Scalar>();
  for (std::size_t l = 0; l < net.depth(); ++l) {
    h = std::visit([&](const auto& layer) { return detail::apply(layer, h, net.shapes()[l]); },
                   net.layers()[l]);
  }
  return h;
}

/// Gradient of ||forward(net, x) - target||^2 with respect to x, by
/// reverse-mode accumulation through every layer.
template <typename Scalar, typename Derived, typename TargetDerived>
VectorX<Scalar> input_gradient(const Network<Scalar>& net, const Eigen::MatrixBase<Derived>& x,
                               const Eigen::MatrixBase<TargetDerived>& target) {
  auto [output, trace] = forward_with_trace(net, x);
  if (target.size() != output.size()) {
    throw ValidationError("target has " + std::to_string(target.size()) +
                          " elements, network outputs " + std::to_string(output.size()));
  }
  VectorX<Scalar> grad = Scalar(2) * (output - target.template cast<Scalar>());
  for (std::size_t l = net.depth(); l-- > 0;) {
    grad = std::visit(
        [&](const auto& layer) { return detail::backward(layer, trace[l], grad, net.shapes()[l]); },
        net.layers()[l]);
  }
  return grad;
}

/// Architecture without weights, consumed by init_network.
struct LayerDescriptor {
  LayerKind kind = LayerKind::Dense;
  Index units = 0;        // dense
  Shape kernel{0, 0};     // conv2d
};

struct Architecture {
  Shape input_shape;
  std::vector<LayerDescriptor> layers;
};

/// Dense weights/biases and conv filters uniform in [-r, r], r = 1/sqrt(fan_in).
/// Batchnorm starts from gamma in [0.5, 1.5], beta in [-0.1, 0.1], running
/// mean 0, running variance 1, epsilon 1e-5.
Network<double> init_network(const Architecture& arch, std::uint64_t seed);

/// Replaces every batchnorm layer's running mean/variance by the population
/// statistics of its inputs over `inputs`, layer by layer from the front.
void estimate_batchnorm_statistics(Network<double>& net, std::span<const VectorXd> inputs);

std::string network_to_json(const Network<double>& net);
Network<double> network_from_json(std::string_view text);
Network<double> load_network(const std::filesystem::path& path);
void save_network(const Network<double>& net, const std::filesystem::path& path);

Architecture architecture_from_json(std::string_view text);
std::string architecture_to_json(const Architecture& arch);

}  // namespace actmon
