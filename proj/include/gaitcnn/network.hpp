#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "gaitcnn/errors.hpp"
#include "gaitcnn/layers.hpp"
#include "gaitcnn/rng.hpp"
#include "gaitcnn/tensor.hpp"

namespace gaitcnn {

/// Convolution followed by ReLU.
struct ConvLayer {
  ConvParams params;
};
struct PoolLayer {
  std::size_t window = 2;
};
/// Channel-major flatten to a single channel.
struct FlattenLayer {};
struct DenseLayer {
  DenseParams params;
  Activation activation = Activation::relu;
};
struct DropoutLayer {
  double drop_probability = 0.0;
};

using Layer = std::variant<ConvLayer, PoolLayer, FlattenLayer, DenseLayer, DropoutLayer>;

enum class Mode { train, inference };

/// A named view onto one parameter buffer of the network.
struct ParamRef {
  std::string name;
  std::span<double> values;
};

/// Gradient buffers, one per ParamRef in the same order.
using Gradients = std::vector<std::vector<double>>;

/// Per-batch record of everything the backward pass needs.
struct Trace {
  std::vector<Batch> activations;  // [0] = input, [i + 1] = output of layer i
  std::vector<std::vector<std::size_t>> argmax;
  std::vector<std::vector<double>> dropout_scale;
};

/// Ordered layer stack with shape checking and batched forward/backward.
class Network {
 public:
  Network() = default;
  Network(Shape input, std::vector<Layer> layers) : input_(input), layers_(std::move(layers)) { infer_shapes(); }

  [[nodiscard]] const Shape& input_shape() const { return input_; }
  [[nodiscard]] const Shape& output_shape() const { return shapes_.back(); }
  [[nodiscard]] std::size_t output_width() const { return shapes_.back().size(); }
  [[nodiscard]] const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  /// Output shape of layer i.
  [[nodiscard]] const Shape& layer_shape(std::size_t i) const { return shapes_[i + 1]; }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) {
      if (const auto* c = std::get_if<ConvLayer>(&l)) n += c->params.kernels.size() + c->params.biases.size();
      if (const auto* d = std::get_if<DenseLayer>(&l)) n += d->params.weights.size() + d->params.biases.size();
    }
    return n;
  }

  /// Parameter buffers in layer order, weights before biases.
  std::vector<ParamRef> parameters() {
    std::vector<ParamRef> refs;
    std::size_t conv = 0, dense = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (auto* c = std::get_if<ConvLayer>(&layers_[i])) {
        const auto name = "conv" + std::to_string(++conv);
        refs.push_back({name + ".kernels", c->params.kernels});
        refs.push_back({name + ".biases", c->params.biases});
      } else if (auto* d = std::get_if<DenseLayer>(&layers_[i])) {
        const auto name = is_readout(i) ? std::string("readout") : "dense" + std::to_string(++dense);
        refs.push_back({name + ".weights", d->params.weights});
        refs.push_back({name + ".biases", d->params.biases});
      }
    }
    return refs;
  }

  [[nodiscard]] Gradients zero_gradients() const {
    Gradients g;
    for (const auto& l : layers_) {
      if (const auto* c = std::get_if<ConvLayer>(&l)) {
        g.emplace_back(c->params.kernels.size(), 0.0);
        g.emplace_back(c->params.biases.size(), 0.0);
      } else if (const auto* d = std::get_if<DenseLayer>(&l)) {
        g.emplace_back(d->params.weights.size(), 0.0);
        g.emplace_back(d->params.biases.size(), 0.0);
      }
    }
    return g;
  }

  /// Runs the batch through every layer. In train mode fresh dropout masks are
  /// drawn from `rng`; inference ignores dropout and needs no rng.
  const Batch& forward(const Batch& input, Trace& trace, Mode mode, Rng* rng = nullptr) const {
    if (input.shape() != input_)
      throw DimensionError("network input " + to_string(input.shape()) + " != expected " + to_string(input_));
    if (mode == Mode::train && rng == nullptr && has_active_dropout())
      throw StateError("train-mode forward with dropout requires an rng");
    const std::size_t B = input.count();
    trace.activations.resize(layers_.size() + 1);
    trace.argmax.resize(layers_.size());
    trace.dropout_scale.resize(layers_.size());
    trace.activations[0] = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const Batch& in = trace.activations[i];
      Batch& out = trace.activations[i + 1];
      out.resize(B, shapes_[i + 1]);
      std::visit(
          [&](const auto& layer) {
            using T = std::decay_t<decltype(layer)>;
            if constexpr (std::is_same_v<T, ConvLayer>) {
              kernels::conv_forward(in.data(), B, in.shape().length, layer.params, out.data());
            } else if constexpr (std::is_same_v<T, PoolLayer>) {
              trace.argmax[i].resize(B * out.shape().size());
              kernels::pool_forward(in.data(), B, in.shape(), layer.window, out.data(), trace.argmax[i].data());
            } else if constexpr (std::is_same_v<T, FlattenLayer>) {
              std::copy(in.data(), in.data() + B * in.shape().size(), out.data());
            } else if constexpr (std::is_same_v<T, DenseLayer>) {
              kernels::dense_forward(in.data(), B, layer.params, layer.activation, out.data());
            } else if constexpr (std::is_same_v<T, DropoutLayer>) {
              const std::size_t n = B * in.shape().size();
              auto& scale = trace.dropout_scale[i];
              if (mode == Mode::train && layer.drop_probability > 0.0) {
                scale.resize(n);
                std::bernoulli_distribution drop(layer.drop_probability);
                const double keep_scale = 1.0 / (1.0 - layer.drop_probability);
                for (std::size_t e = 0; e < n; ++e) scale[e] = drop(*rng) ? 0.0 : keep_scale;
                for (std::size_t e = 0; e < n; ++e) out.data()[e] = in.data()[e] * scale[e];
              } else {
                scale.clear();
                std::copy(in.data(), in.data() + n, out.data());
              }
            }
          },
          layers_[i]);
    }
    return trace.activations.back();
  }

  /// Accumulates parameter gradients of sum_b <grad_output[b], output[b]> into `grads`.
  void backward(const Batch& grad_output, const Trace& trace, Gradients& grads) const {
    const std::size_t B = grad_output.count();
    if (trace.activations.size() != layers_.size() + 1 || trace.activations.back().count() != B ||
        grad_output.shape() != output_shape())
      throw DimensionError("backward: gradient does not match the traced forward pass");
    Batch g = grad_output;
    Batch g_prev;
    std::size_t block = grads.size();
    for (std::size_t idx = layers_.size(); idx-- > 0;) {
      const Batch& in = trace.activations[idx];
      const Batch& out = trace.activations[idx + 1];
      const bool need_input_grad = idx > 0;
      g_prev.resize(B, in.shape());
      std::visit(
          [&](const auto& layer) {
            using T = std::decay_t<decltype(layer)>;
            if constexpr (std::is_same_v<T, ConvLayer>) {
              block -= 2;
              kernels::conv_backward(g.data(), out.data(), in.data(), B, in.shape().length, layer.params,
                                     need_input_grad ? g_prev.data() : nullptr, grads[block].data(),
                                     grads[block + 1].data());
            } else if constexpr (std::is_same_v<T, PoolLayer>) {
              kernels::pool_backward(g.data(), B, in.shape(), layer.window, trace.argmax[idx].data(), g_prev.data());
            } else if constexpr (std::is_same_v<T, FlattenLayer>) {
              std::copy(g.data(), g.data() + B * in.shape().size(), g_prev.data());
            } else if constexpr (std::is_same_v<T, DenseLayer>) {
              block -= 2;
              kernels::dense_backward(g.data(), out.data(), in.data(), B, layer.params, layer.activation,
                                      need_input_grad ? g_prev.data() : nullptr, grads[block].data(),
                                      grads[block + 1].data());
            } else if constexpr (std::is_same_v<T, DropoutLayer>) {
              const auto& scale = trace.dropout_scale[idx];
              const std::size_t n = B * in.shape().size();
              if (scale.empty())
                std::copy(g.data(), g.data() + n, g_prev.data());
              else
                for (std::size_t e = 0; e < n; ++e) g_prev.data()[e] = g.data()[e] * scale[e];
            }
          },
          layers_[idx]);
      std::swap(g, g_prev);
    }
  }

  /// Inference-mode forward pass.
  [[nodiscard]] Batch predict(const Batch& input) const {
    Trace trace;
    return forward(input, trace, Mode::inference);
  }

  /// Throws ValidationError naming the first parameter buffer holding a non-finite value.
  void check_finite() {
    for (const auto& p : parameters())
      for (double v : p.values)
        if (!std::isfinite(v)) throw ValidationError("non-finite value in " + p.name);
  }

  [[nodiscard]] bool has_active_dropout() const {
    for (const auto& l : layers_)
      if (const auto* d = std::get_if<DropoutLayer>(&l); d != nullptr && d->drop_probability > 0.0) return true;
    return false;
  }

 private:
  [[nodiscard]] bool is_readout(std::size_t i) const {
    for (std::size_t k = i + 1; k < layers_.size(); ++k)
      if (std::holds_alternative<DenseLayer>(layers_[k])) return false;
    const auto& d = std::get<DenseLayer>(layers_[i]);
    return d.activation == Activation::identity;
  }

  void infer_shapes() {
    shapes_.assign(1, input_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const Shape in = shapes_.back();
      Shape out = in;
      std::visit(
          [&](auto& layer) {
            using T = std::decay_t<decltype(layer)>;
            if constexpr (std::is_same_v<T, ConvLayer>) {
              if (layer.params.n_in != in.channels)
                throw DimensionError("layer " + std::to_string(i) + ": convolution expects " +
                                     std::to_string(layer.params.n_in) + " channels, gets " + to_string(in));
              if (layer.params.kernels.size() != layer.params.n_out * layer.params.n_in * layer.params.kernel_len ||
                  layer.params.biases.size() != layer.params.n_out || layer.params.kernel_len == 0)
                throw DimensionError("layer " + std::to_string(i) + ": inconsistent convolution buffers");
              out = {layer.params.n_out, in.length};
            } else if constexpr (std::is_same_v<T, PoolLayer>) {
              if (layer.window == 0 || in.length % layer.window != 0)
                throw ValidationError("layer " + std::to_string(i) + ": pool window does not divide length");
              out = {in.channels, in.length / layer.window};
            } else if constexpr (std::is_same_v<T, FlattenLayer>) {
              out = {1, in.size()};
            } else if constexpr (std::is_same_v<T, DenseLayer>) {
              if (in.channels != 1 || layer.params.n_in != in.length)
                throw DimensionError("layer " + std::to_string(i) + ": dense expects flat input of " +
                                     std::to_string(layer.params.n_in) + ", gets " + to_string(in));
              if (layer.params.weights.size() != layer.params.n_in * layer.params.n_out ||
                  layer.params.biases.size() != layer.params.n_out)
                throw DimensionError("layer " + std::to_string(i) + ": inconsistent dense buffers");
              out = {1, layer.params.n_out};
            } else if constexpr (std::is_same_v<T, DropoutLayer>) {
              if (!(layer.drop_probability >= 0.0 && layer.drop_probability < 1.0))
                throw ValidationError("layer " + std::to_string(i) + ": dropout probability outside [0, 1)");
            }
          },
          layers_[i]);
      shapes_.push_back(out);
    }
  }

  Shape input_{};
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_{Shape{}};
};

}  // namespace gaitcnn
