#pragma once

// Forward and backward passes for the five layer kinds the gait networks use:
// same-padded 1D convolution with ReLU, non-overlapping max-pooling, dense
// layers (ReLU or identity), and inverted dropout.
//
// The batched kernels in `kernels::` work on raw sample-major buffers and are
// what the network graph calls. The Series-level functions below them are the
// single-sample API used by tests and tools.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gaitcnn/errors.hpp"
#include "gaitcnn/gemm.hpp"
#include "gaitcnn/tensor.hpp"

namespace gaitcnn {

enum class Activation { relu, identity };
enum class PaddingMode { same_zero };

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

/// Kernels are stored [n_out][n_in][kernel_len]; the operation is a
/// cross-correlation (no kernel flip) with zero "same" padding.
struct ConvParams {
  std::size_t n_out = 0;
  std::size_t n_in = 0;
  std::size_t kernel_len = 0;
  std::vector<double> kernels;
  std::vector<double> biases;
  PaddingMode padding_mode = PaddingMode::same_zero;

  ConvParams() = default;
  ConvParams(std::size_t out, std::size_t in, std::size_t len)
      : n_out(out), n_in(in), kernel_len(len), kernels(out * in * len, 0.0), biases(out, 0.0) {}

  double& kernel(std::size_t k, std::size_t j, std::size_t m) { return kernels[(k * n_in + j) * kernel_len + m]; }
  [[nodiscard]] double kernel(std::size_t k, std::size_t j, std::size_t m) const {
    return kernels[(k * n_in + j) * kernel_len + m];
  }

  /// Zero-padding placed before the first sample; the remainder goes after.
  [[nodiscard]] std::size_t pad_left() const { return (kernel_len - 1) / 2; }

  void validate() const {
    if (kernel_len == 0 || n_out == 0 || n_in == 0) throw ValidationError("convolution needs kernel_len, n_in, n_out >= 1");
    if (kernels.size() != n_out * n_in * kernel_len) throw DimensionError("convolution kernel buffer has wrong size");
    if (biases.size() != n_out) throw DimensionError("convolution bias count must equal n_out");
    for (double v : kernels)
      if (!std::isfinite(v)) throw ValidationError("non-finite convolution kernel value");
    for (double v : biases)
      if (!std::isfinite(v)) throw ValidationError("non-finite convolution bias value");
  }
};

/// Weights stored [n_in][n_out] so a_j = act(sum_i W[i][j] x_i + b_j).
struct DenseParams {
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  std::vector<double> weights;
  std::vector<double> biases;

  DenseParams() = default;
  DenseParams(std::size_t in, std::size_t out) : n_in(in), n_out(out), weights(in * out, 0.0), biases(out, 0.0) {}

  double& weight(std::size_t i, std::size_t j) { return weights[i * n_out + j]; }
  [[nodiscard]] double weight(std::size_t i, std::size_t j) const { return weights[i * n_out + j]; }

  void validate() const {
    if (n_in == 0 || n_out == 0) throw ValidationError("dense layer needs n_in, n_out >= 1");
    if (weights.size() != n_in * n_out) throw DimensionError("dense weight buffer has wrong size");
    if (biases.size() != n_out) throw DimensionError("dense bias count must equal n_out");
    for (double v : weights)
      if (!std::isfinite(v)) throw ValidationError("non-finite dense weight");
    for (double v : biases)
      if (!std::isfinite(v)) throw ValidationError("non-finite dense bias");
  }
};

/// Argmax positions (index within the input channel) of every pooled value.
struct PoolRecord {
  std::size_t window = 1;
  Shape input_shape{};
  std::vector<std::size_t> argmax_indices;  // [channels][pooled_length]
};

struct DropoutMask {
  std::vector<bool> keep_flags;
  double drop_probability = 0.0;

  /// Multiplier applied to surviving activations at train time.
  [[nodiscard]] double scale() const { return 1.0 / (1.0 - drop_probability); }
};

namespace kernels {

/// Unfolds one sample into rows (j, m) of length L: col[j*K + m][t] = x[j][t + m - pad_left],
/// zero outside the signal.
inline void im2col(const double* x, std::size_t n_in, std::size_t length, std::size_t K, std::size_t pad,
                   double* col) {
  const auto L = static_cast<std::ptrdiff_t>(length);
  for (std::size_t j = 0; j < n_in; ++j)
    for (std::size_t m = 0; m < K; ++m) {
      double* row = col + (j * K + m) * length;
      const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(m) - static_cast<std::ptrdiff_t>(pad);
      const double* xj = x + j * length;
      for (std::ptrdiff_t t = 0; t < L; ++t) {
        const std::ptrdiff_t s = t + off;
        row[t] = (s >= 0 && s < L) ? xj[s] : 0.0;
      }
    }
}

/// out[b][k][t] = relu(bias[k] + sum_j sum_m w[k][j][m] * in[b][j][t + m - pad_left]).
/// Accumulation order per output element is bias, then j ascending, then m ascending.
inline void conv_forward(const double* in, std::size_t batch, std::size_t length, const ConvParams& p, double* out) {
  const std::size_t CK = p.n_in * p.kernel_len;
  std::vector<double> col(CK * length);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(in + b * p.n_in * length, p.n_in, length, p.kernel_len, p.pad_left(), col.data());
    double* o = out + b * p.n_out * length;
    for (std::size_t k = 0; k < p.n_out; ++k) std::fill(o + k * length, o + (k + 1) * length, p.biases[k]);
    gemm_acc(p.n_out, length, CK, p.kernels.data(), CK, col.data(), length, o, length);
    for (std::size_t e = 0; e < p.n_out * length; ++e) o[e] = o[e] > 0.0 ? o[e] : 0.0;
  }
}

/// Accumulates kernel/bias gradients; overwrites grad_in unless it is null.
/// `out` is the forward output, used as the ReLU gate.
inline void conv_backward(const double* grad_out, const double* out, const double* in, std::size_t batch,
                          std::size_t length, const ConvParams& p, double* grad_in, double* grad_kernels,
                          double* grad_biases) {
  const std::size_t K = p.kernel_len;
  const std::size_t CK = p.n_in * K;
  const std::size_t pad = p.pad_left();
  const auto L = static_cast<std::ptrdiff_t>(length);
  std::vector<double> gate(p.n_out * length);
  std::vector<double> col(CK * length);
  std::vector<double> rows(length * CK);
  std::vector<double> wt;
  std::vector<double> gcol;
  if (grad_in != nullptr) {
    wt.resize(CK * p.n_out);
    transpose(p.kernels.data(), p.n_out, CK, wt.data());
    gcol.resize(CK * length);
    std::fill(grad_in, grad_in + batch * p.n_in * length, 0.0);
  }
  for (std::size_t b = 0; b < batch; ++b) {
    const double* go = grad_out + b * p.n_out * length;
    const double* o = out + b * p.n_out * length;
    bool any = false;
    for (std::size_t e = 0; e < p.n_out * length; ++e) {
      gate[e] = o[e] > 0.0 ? go[e] : 0.0;
      any = any || gate[e] != 0.0;
    }
    if (!any) continue;
    for (std::size_t k = 0; k < p.n_out; ++k) {
      double s = 0.0;
      for (std::size_t t = 0; t < length; ++t) s += gate[k * length + t];
      grad_biases[k] += s;
    }
    im2col(in + b * p.n_in * length, p.n_in, length, K, pad, col.data());
    transpose(col.data(), CK, length, rows.data());
    gemm_acc(p.n_out, CK, length, gate.data(), length, rows.data(), CK, grad_kernels, CK);
    if (grad_in != nullptr) {
      std::fill(gcol.begin(), gcol.end(), 0.0);
      gemm_acc(CK, length, p.n_out, wt.data(), p.n_out, gate.data(), length, gcol.data(), length);
      double* gx = grad_in + b * p.n_in * length;
      for (std::size_t j = 0; j < p.n_in; ++j)
        for (std::size_t m = 0; m < K; ++m) {
          const double* row = gcol.data() + (j * K + m) * length;
          const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(m) - static_cast<std::ptrdiff_t>(pad);
          const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
          const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(L, L - off);
          double* gxj = gx + j * length;
          for (std::ptrdiff_t t = t0; t < t1; ++t) gxj[t + off] += row[t];
        }
    }
  }
}

/// Non-overlapping max pooling; ties resolve to the first index in the window.
inline void pool_forward(const double* in, std::size_t batch, Shape shape, std::size_t window, double* out,
                         std::size_t* argmax) {
  const std::size_t pooled = shape.length / window;
  for (std::size_t bc = 0; bc < batch * shape.channels; ++bc) {
    const double* x = in + bc * shape.length;
    double* o = out + bc * pooled;
    std::size_t* a = argmax + bc * pooled;
    for (std::size_t i = 0; i < pooled; ++i) {
      std::size_t best = i * window;
      for (std::size_t t = best + 1; t < (i + 1) * window; ++t)
        if (x[t] > x[best]) best = t;
      o[i] = x[best];
      a[i] = best;
    }
  }
}

inline void pool_backward(const double* grad_out, std::size_t batch, Shape in_shape, std::size_t window,
                          const std::size_t* argmax, double* grad_in) {
  const std::size_t pooled = in_shape.length / window;
  std::fill(grad_in, grad_in + batch * in_shape.size(), 0.0);
  for (std::size_t bc = 0; bc < batch * in_shape.channels; ++bc) {
    const double* g = grad_out + bc * pooled;
    const std::size_t* a = argmax + bc * pooled;
    double* gi = grad_in + bc * in_shape.length;
    for (std::size_t i = 0; i < pooled; ++i) gi[a[i]] += g[i];
  }
}

/// out[b][j] = act(bias[j] + sum_i W[i][j] in[b][i]), i ascending.
inline void dense_forward(const double* in, std::size_t batch, const DenseParams& p, Activation act, double* out) {
  for (std::size_t b = 0; b < batch; ++b) std::copy(p.biases.begin(), p.biases.end(), out + b * p.n_out);
  gemm_acc(batch, p.n_out, p.n_in, in, p.n_in, p.weights.data(), p.n_out, out, p.n_out);
  if (act == Activation::relu)
    for (std::size_t e = 0; e < batch * p.n_out; ++e) out[e] = out[e] > 0.0 ? out[e] : 0.0;
}

inline void dense_backward(const double* grad_out, const double* out, const double* in, std::size_t batch,
                           const DenseParams& p, Activation act, double* grad_in, double* grad_weights,
                           double* grad_biases) {
  const std::size_t n_out = p.n_out;
  std::vector<double> gate(batch * n_out);
  for (std::size_t e = 0; e < batch * n_out; ++e)
    gate[e] = (act == Activation::identity || out[e] > 0.0) ? grad_out[e] : 0.0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < n_out; ++j) grad_biases[j] += gate[b * n_out + j];
  std::vector<double> xt(p.n_in * batch);
  transpose(in, batch, p.n_in, xt.data());
  gemm_acc(p.n_in, n_out, batch, xt.data(), batch, gate.data(), n_out, grad_weights, n_out);
  if (grad_in != nullptr) {
    std::vector<double> wt(n_out * p.n_in);
    transpose(p.weights.data(), p.n_in, n_out, wt.data());
    std::fill(grad_in, grad_in + batch * p.n_in, 0.0);
    gemm_acc(batch, p.n_in, n_out, gate.data(), n_out, wt.data(), p.n_in, grad_in, p.n_in);
  }
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Single-sample API

inline Series conv1d_forward(const Series& input, const ConvParams& params) {
  params.validate();
  if (input.channels() != params.n_in)
    throw DimensionError("conv1d: input has " + std::to_string(input.channels()) + " channels, kernels expect " +
                         std::to_string(params.n_in));
  Series out(params.n_out, input.length());
  kernels::conv_forward(input.values().data(), 1, input.length(), params, out.values().data());
  return out;
}

struct ConvGrads {
  Series grad_input;
  std::vector<double> grad_kernels;
  std::vector<double> grad_biases;
};

/// `cached_output` is the forward result; it supplies the ReLU gate.
inline ConvGrads conv1d_backward(const Series& upstream, const Series& cached_input, const Series& cached_output,
                                 const ConvParams& params) {
  params.validate();
  if (cached_input.channels() != params.n_in) throw DimensionError("conv1d_backward: input channel mismatch");
  const Shape out_shape{params.n_out, cached_input.length()};
  if (upstream.shape() != out_shape || cached_output.shape() != out_shape)
    throw DimensionError("conv1d_backward: upstream shape " + to_string(upstream.shape()) + " != forward output " +
                         to_string(out_shape));
  ConvGrads g{Series(params.n_in, cached_input.length()), std::vector<double>(params.kernels.size(), 0.0),
              std::vector<double>(params.n_out, 0.0)};
  kernels::conv_backward(upstream.values().data(), cached_output.values().data(), cached_input.values().data(), 1,
                         cached_input.length(), params, g.grad_input.values().data(), g.grad_kernels.data(),
                         g.grad_biases.data());
  return g;
}

inline ConvGrads conv1d_backward(const Series& upstream, const Series& cached_input, const ConvParams& params) {
  return conv1d_backward(upstream, cached_input, conv1d_forward(cached_input, params), params);
}

inline std::pair<Series, PoolRecord> maxpool_forward(const Series& input, std::size_t window) {
  if (window == 0) throw ValidationError("pool window must be >= 1");
  if (input.length() % window != 0)
    throw ValidationError("pool window " + std::to_string(window) + " does not divide length " +
                          std::to_string(input.length()));
  Series out(input.channels(), input.length() / window);
  PoolRecord rec{window, input.shape(), std::vector<std::size_t>(out.shape().size())};
  kernels::pool_forward(input.values().data(), 1, input.shape(), window, out.values().data(),
                        rec.argmax_indices.data());
  return {std::move(out), std::move(rec)};
}

inline Series maxpool_backward(const Series& upstream, const PoolRecord& record) {
  const Shape pooled{record.input_shape.channels, record.input_shape.length / record.window};
  if (upstream.shape() != pooled || record.argmax_indices.size() != pooled.size())
    throw DimensionError("maxpool_backward: upstream " + to_string(upstream.shape()) + " vs pooled " +
                         to_string(pooled));
  Series g(record.input_shape.channels, record.input_shape.length);
  kernels::pool_backward(upstream.values().data(), 1, record.input_shape, record.window,
                         record.argmax_indices.data(), g.values().data());
  return g;
}

inline std::vector<double> dense_forward(std::span<const double> input, const DenseParams& params,
                                         Activation activation) {
  params.validate();
  if (input.size() != params.n_in)
    throw DimensionError("dense: input length " + std::to_string(input.size()) + " != n_in " +
                         std::to_string(params.n_in));
  std::vector<double> out(params.n_out);
  kernels::dense_forward(input.data(), 1, params, activation, out.data());
  return out;
}

struct DenseGrads {
  std::vector<double> grad_input;
  std::vector<double> grad_weights;
  std::vector<double> grad_biases;
};

inline DenseGrads dense_backward(std::span<const double> upstream, std::span<const double> cached_input,
                                 const DenseParams& params, Activation activation) {
  params.validate();
  if (cached_input.size() != params.n_in || upstream.size() != params.n_out)
    throw DimensionError("dense_backward: shape mismatch");
  const auto out = dense_forward(cached_input, params, activation);
  DenseGrads g{std::vector<double>(params.n_in), std::vector<double>(params.weights.size(), 0.0),
               std::vector<double>(params.n_out, 0.0)};
  kernels::dense_backward(upstream.data(), out.data(), cached_input.data(), 1, params, activation,
                          g.grad_input.data(), g.grad_weights.data(), g.grad_biases.data());
  return g;
}

template <class Rng>
DropoutMask dropout_sample(std::size_t width, double drop_probability, Rng& rng) {
  if (!(drop_probability >= 0.0 && drop_probability < 1.0))
    throw ValidationError("dropout probability must lie in [0, 1), got " + std::to_string(drop_probability));
  DropoutMask mask{std::vector<bool>(width, true), drop_probability};
  if (drop_probability == 0.0) return mask;
  std::bernoulli_distribution drop(drop_probability);
  for (std::size_t i = 0; i < width; ++i) mask.keep_flags[i] = !drop(rng);
  return mask;
}

/// Inference-time mask: everything kept, no rescaling.
inline DropoutMask dropout_inference_mask(std::size_t width) { return {std::vector<bool>(width, true), 0.0}; }

inline std::vector<double> dropout_apply(std::span<const double> input, const DropoutMask& mask) {
  if (input.size() != mask.keep_flags.size()) throw DimensionError("dropout mask width mismatch");
  std::vector<double> out(input.size());
  const double s = mask.scale();
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = mask.keep_flags[i] ? input[i] * s : 0.0;
  return out;
}

}  // namespace gaitcnn
