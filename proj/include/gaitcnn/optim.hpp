#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gaitcnn/errors.hpp"
#include "gaitcnn/network.hpp"
#include "gaitcnn/tensor.hpp"

namespace gaitcnn {

struct AdamConfig {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  std::size_t iterations = 4000;
  std::size_t batch_size = 100;
  double init_std = 0.01;
  double init_bias = 0.01;
  AdamConfig adam{};
  std::uint64_t seed = 1;
  /// Full-training-set loss is evaluated every this many iterations.
  std::size_t eval_interval = 50;

  void validate() const {
    if (iterations < 1) throw ValidationError("iterations must be >= 1");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (eval_interval < 1) throw ValidationError("eval_interval must be >= 1");
    if (!(init_std > 0.0)) throw ValidationError("init_std must be positive");
  }
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t t = 0;
  AdamConfig config{};

  AdamState() = default;
  explicit AdamState(const Gradients& shape_like, AdamConfig cfg = {}) : t(0), config(cfg) {
    for (const auto& g : shape_like) {
      m.emplace_back(g.size(), 0.0);
      v.emplace_back(g.size(), 0.0);
    }
  }
};

/// E = sum_i rmse_i over a mini-batch.
struct LossValue {
  double total = 0.0;
  std::vector<double> components;
};

/// Weights (kernels and dense weights) from a normal distribution truncated at
/// +-2 std by re-sampling; every bias set to `init_bias`.
inline void init_parameters(Network& net, const TrainConfig& cfg, Rng& rng) {
  std::normal_distribution<double> normal(0.0, cfg.init_std);
  const double limit = 2.0 * cfg.init_std;
  for (auto& p : net.parameters()) {
    const bool is_bias = p.name.ends_with(".biases");
    for (double& w : p.values) {
      if (is_bias) {
        w = cfg.init_bias;
        continue;
      }
      double x = normal(rng);
      while (std::abs(x) > limit) x = normal(rng);
      w = x;
    }
  }
}

inline void check_loss_operands(const Batch& predictions, const Batch& references) {
  if (predictions.count() != references.count() || predictions.shape() != references.shape())
    throw DimensionError("loss: predictions and references differ in shape");
  if (predictions.count() == 0) throw ValidationError("loss: empty batch");
}

inline LossValue loss_sum_rmse(const Batch& predictions, const Batch& references) {
  check_loss_operands(predictions, references);
  const std::size_t B = predictions.count();
  const std::size_t T = predictions.shape().size();
  LossValue loss{0.0, std::vector<double>(T, 0.0)};
  for (std::size_t i = 0; i < T; ++i) {
    double sq = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double d = predictions.sample(b)[i] - references.sample(b)[i];
      sq += d * d;
    }
    loss.components[i] = std::sqrt(sq / static_cast<double>(B));
    loss.total += loss.components[i];
  }
  return loss;
}

/// dE/dy_i(b) = (y_i(b) - ref_i(b)) / (B * rmse_i), defined as 0 where rmse_i == 0.
inline Batch loss_backward(const Batch& predictions, const Batch& references) {
  const auto loss = loss_sum_rmse(predictions, references);
  const std::size_t B = predictions.count();
  const std::size_t T = predictions.shape().size();
  Batch grad(B, predictions.shape());
  for (std::size_t i = 0; i < T; ++i) {
    if (loss.components[i] == 0.0) continue;
    const double denom = static_cast<double>(B) * loss.components[i];
    for (std::size_t b = 0; b < B; ++b)
      grad.sample(b)[i] = (predictions.sample(b)[i] - references.sample(b)[i]) / denom;
  }
  return grad;
}

/// One bias-corrected Adam update; increments state.t.
inline void adam_step(std::span<const ParamRef> params, const Gradients& grads, AdamState& state) {
  if (params.size() != grads.size() || state.m.size() != grads.size())
    throw DimensionError("adam_step: parameter, gradient and moment block counts differ");
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].values.size() != grads[p].size() || state.m[p].size() != grads[p].size())
      throw DimensionError("adam_step: size mismatch in " + params[p].name);
    for (std::size_t e = 0; e < grads[p].size(); ++e)
      if (!std::isfinite(grads[p][e]))
        throw TrainingError("non-finite gradient in " + params[p].name + " at element " + std::to_string(e));
  }
  const auto& c = state.config;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(c.beta1, t);
  const double c2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].values;
    const auto& g = grads[p];
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t e = 0; e < g.size(); ++e) {
      m[e] = c.beta1 * m[e] + (1.0 - c.beta1) * g[e];
      v[e] = c.beta2 * v[e] + (1.0 - c.beta2) * g[e] * g[e];
      values[e] -= c.alpha * (m[e] / c1) / (std::sqrt(v[e] / c2) + c.epsilon);
    }
  }
}

/// Inputs and [0, 1]-scaled targets, one row per stride.
struct TrainingSet {
  Batch inputs;
  Batch targets;

  [[nodiscard]] std::size_t size() const { return inputs.count(); }
};

struct LossPoint {
  std::size_t iteration = 0;
  std::optional<double> minibatch_loss;
  std::optional<double> trainset_loss;
};

/// minibatch_loss at iteration i is measured before update i; trainset_loss is
/// the inference-mode loss over the whole training set at the same parameters.
/// The last point (iteration == config.iterations) holds only the final trainset loss.
struct LossCurve {
  std::vector<LossPoint> points;

  [[nodiscard]] std::vector<std::pair<std::size_t, double>> trainset() const {
    std::vector<std::pair<std::size_t, double>> out;
    for (const auto& p : points)
      if (p.trainset_loss) out.emplace_back(p.iteration, *p.trainset_loss);
    return out;
  }
  [[nodiscard]] double final_trainset_loss() const { return trainset().back().second; }
  [[nodiscard]] double initial_trainset_loss() const { return trainset().front().second; }
};

/// Inference-mode loss over a full dataset, evaluated in chunks.
inline LossValue dataset_loss(const Network& net, const TrainingSet& data, std::size_t chunk = 256) {
  const std::size_t N = data.size();
  Batch preds(N, net.output_shape());
  for (std::size_t start = 0; start < N; start += chunk) {
    const std::size_t n = std::min(chunk, N - start);
    Batch in(n, data.inputs.shape());
    for (std::size_t b = 0; b < n; ++b) in.set_sample(b, data.inputs.sample(start + b));
    const Batch out = net.predict(in);
    for (std::size_t b = 0; b < n; ++b) preds.set_sample(start + b, out.sample(b));
  }
  return loss_sum_rmse(preds, data.targets);
}

/// Mini-batch Adam training: each iteration draws batch_size rows uniformly
/// with replacement, applies fresh dropout masks, and back-propagates the
/// summed-RMSE loss.
inline LossCurve train(Network& net, const TrainingSet& data, const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (data.size() == 0) throw ValidationError("train: empty dataset");
  if (data.inputs.shape() != net.input_shape()) throw DimensionError("train: input shape does not match network");
  if (data.targets.count() != data.size() || data.targets.shape().size() != net.output_width())
    throw DimensionError("train: target width does not match network output");

  auto params = net.parameters();
  Gradients grads = net.zero_gradients();
  AdamState adam(grads, cfg.adam);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  Batch inputs(cfg.batch_size, data.inputs.shape());
  Batch targets(cfg.batch_size, data.targets.shape());
  Trace trace;
  LossCurve curve;
  curve.points.reserve(cfg.iterations + 1);

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    LossPoint point{it, std::nullopt, std::nullopt};
    if (it % cfg.eval_interval == 0) point.trainset_loss = dataset_loss(net, data).total;

    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const std::size_t row = pick(rng);
      inputs.set_sample(b, data.inputs.sample(row));
      targets.set_sample(b, data.targets.sample(row));
    }
    const Batch& preds = net.forward(inputs, trace, Mode::train, &rng);
    const auto loss = loss_sum_rmse(preds, targets);
    if (!std::isfinite(loss.total)) throw TrainingError("non-finite loss at iteration " + std::to_string(it));
    point.minibatch_loss = loss.total;
    curve.points.push_back(point);

    const Batch grad_out = loss_backward(preds, targets);
    for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
    net.backward(grad_out, trace, grads);
    try {
      adam_step(params, grads, adam);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string(e.what()) + " at iteration " + std::to_string(it));
    }
  }
  const double final_loss = dataset_loss(net, data).total;
  if (!std::isfinite(final_loss)) throw TrainingError("non-finite training-set loss after training");
  curve.points.push_back({cfg.iterations, std::nullopt, final_loss});
  return curve;
}

/// Least-squares slope of the trainset loss over the trailing `fraction` of
/// the run, expressed as the change across that window relative to the
/// initial loss. Values near zero indicate a stable regime.
inline double tail_relative_change(const LossCurve& curve, double fraction = 0.1) {
  const auto pts = curve.trainset();
  if (pts.size() < 2) throw ValidationError("loss curve has fewer than two trainset evaluations");
  const double last = static_cast<double>(pts.back().first);
  const double start = last * (1.0 - fraction);
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (const auto& [x, y] : pts) {
    if (static_cast<double>(x) < start) continue;
    sx += static_cast<double>(x);
    sy += y;
    sxx += static_cast<double>(x) * static_cast<double>(x);
    sxy += static_cast<double>(x) * y;
    n += 1;
  }
  if (n < 2) throw ValidationError("tail window holds fewer than two evaluations");
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return slope * (last - start) / pts.front().second;
}

inline void write_loss_curve_csv(const std::string& path, const LossCurve& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss curve " + path);
  out.precision(17);
  out << "iteration,minibatch_loss,trainset_loss\n";
  for (const auto& p : curve.points) {
    out << p.iteration << ',';
    if (p.minibatch_loss) out << *p.minibatch_loss;
    out << ',';
    if (p.trainset_loss) out << *p.trainset_loss;
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace gaitcnn
