#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gaitcnn/errors.hpp"
#include "gaitcnn/network.hpp"
#include "gaitcnn/optim.hpp"
#include "gaitcnn/parallel.hpp"
#include "gaitcnn/rng.hpp"
#include "gaitcnn/targets.hpp"
#include "gaitcnn/tensor.hpp"

namespace gaitcnn {

inline constexpr Shape kStrideShape{6, 256};

enum class ModelKind { A, B };
/// `paper` is the published architecture and schedule; `desk` halves every
/// width and shortens training so full cross-validation runs on a workstation.
enum class Preset { paper, desk };

inline std::string to_string(ModelKind k) { return k == ModelKind::A ? "A" : "B"; }
inline std::string to_string(Preset p) { return p == Preset::paper ? "paper" : "desk"; }
inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "A" || s == "a") return ModelKind::A;
  if (s == "B" || s == "b") return ModelKind::B;
  throw ValidationError("unknown model kind '" + s + "' (expected A or B)");
}
inline Preset preset_from_string(const std::string& s) {
  if (s == "paper") return Preset::paper;
  if (s == "desk") return Preset::desk;
  throw ValidationError("unknown preset '" + s + "' (expected paper or desk)");
}

/// conv(+ReLU) -> pool blocks, flatten, dense(+ReLU) -> dropout blocks, identity readout.
struct ArchitectureSpec {
  Shape input = kStrideShape;
  std::vector<std::size_t> conv_kernels;
  std::vector<std::size_t> kernel_lengths;
  std::size_t pool_window = 2;
  std::vector<std::size_t> dense_widths;
  std::vector<double> dropout;  // drop probability after each dense layer
  std::size_t outputs = 1;

  [[nodiscard]] std::size_t flatten_width() const {
    std::size_t len = input.length;
    for (std::size_t i = 0; i < conv_kernels.size(); ++i) len /= pool_window;
    return conv_kernels.back() * len;
  }
  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

inline ArchitectureSpec model_a_spec(Preset preset = Preset::paper) {
  ArchitectureSpec s;
  s.conv_kernels = {32, 64, 128};
  s.kernel_lengths = {30, 15, 7};
  s.dense_widths = {2048, 1024, 512};
  s.dropout = {0.75, 0.5, 0.0};
  s.outputs = kCnnTargetCount;
  if (preset == Preset::desk) {
    for (auto& n : s.conv_kernels) n /= 2;
    for (auto& n : s.dense_widths) n /= 2;
  }
  return s;
}

inline ArchitectureSpec model_b_spec(Preset preset = Preset::paper) {
  ArchitectureSpec s;
  s.conv_kernels = {16, 32};
  s.kernel_lengths = {30, 15};
  s.dense_widths = {1024};
  s.dropout = {0.5};
  s.outputs = 1;
  if (preset == Preset::desk) {
    for (auto& n : s.conv_kernels) n /= 2;
    for (auto& n : s.dense_widths) n /= 2;
  }
  return s;
}

inline ArchitectureSpec architecture_for(ModelKind kind, Preset preset) {
  return kind == ModelKind::A ? model_a_spec(preset) : model_b_spec(preset);
}

/// How the published dropout values are read: as drop probabilities (default)
/// or as keep probabilities. Under the keep reading a value of 0 still means
/// "no dropout" because dropping every unit is not a usable layer.
enum class DropoutReading { drop, keep };

inline std::string to_string(DropoutReading r) { return r == DropoutReading::drop ? "drop" : "keep"; }
inline DropoutReading dropout_reading_from_string(const std::string& s) {
  if (s == "drop") return DropoutReading::drop;
  if (s == "keep") return DropoutReading::keep;
  throw ValidationError("unknown dropout reading '" + s + "' (expected drop or keep)");
}

inline ArchitectureSpec with_dropout_reading(ArchitectureSpec s, DropoutReading r) {
  if (r == DropoutReading::keep)
    for (double& p : s.dropout)
      if (p > 0.0) p = 1.0 - p;
  return s;
}

inline TrainConfig train_config_for(Preset preset) {
  TrainConfig c;
  if (preset == Preset::desk) {
    c.iterations = 500;
    c.batch_size = 32;
  }
  return c;
}

/// Builds the layer stack with zeroed parameters.
inline Network build_network(const ArchitectureSpec& s) {
  if (s.conv_kernels.empty() || s.conv_kernels.size() != s.kernel_lengths.size())
    throw ValidationError("architecture needs matching conv kernel counts and lengths");
  if (s.dense_widths.size() != s.dropout.size()) throw ValidationError("one dropout probability per dense layer");
  std::vector<Layer> layers;
  std::size_t channels = s.input.channels;
  for (std::size_t i = 0; i < s.conv_kernels.size(); ++i) {
    layers.emplace_back(ConvLayer{ConvParams(s.conv_kernels[i], channels, s.kernel_lengths[i])});
    layers.emplace_back(PoolLayer{s.pool_window});
    channels = s.conv_kernels[i];
  }
  layers.emplace_back(FlattenLayer{});
  std::size_t width = s.flatten_width();
  for (std::size_t i = 0; i < s.dense_widths.size(); ++i) {
    layers.emplace_back(DenseLayer{DenseParams(width, s.dense_widths[i]), Activation::relu});
    layers.emplace_back(DropoutLayer{s.dropout[i]});
    width = s.dense_widths[i];
  }
  layers.emplace_back(DenseLayer{DenseParams(width, s.outputs), Activation::identity});
  return Network(s.input, std::move(layers));
}

inline Network build_model_a(Preset preset = Preset::paper) { return build_network(model_a_spec(preset)); }

inline Network build_model_b_member(CnnTarget target, Preset preset = Preset::paper) {
  if (static_cast<std::size_t>(target) >= kCnnTargetCount) throw ValidationError("unknown target id");
  return build_network(model_b_spec(preset));
}
inline Network build_model_b_member(const std::string& target_id, Preset preset = Preset::paper) {
  return build_model_b_member(cnn_target_from_name(target_id), preset);
}

/// Min/max scaling to [0, 1] using constants from the training split.
struct TargetScaler {
  std::vector<double> min;
  std::vector<double> max;

  [[nodiscard]] bool fitted() const { return !min.empty() && min.size() == max.size(); }
  [[nodiscard]] std::size_t width() const { return min.size(); }

  static TargetScaler fit(const Batch& targets) {
    if (targets.count() == 0) throw ValidationError("cannot fit scaler on an empty training split");
    const std::size_t T = targets.shape().size();
    TargetScaler s{std::vector<double>(T), std::vector<double>(T)};
    for (std::size_t i = 0; i < T; ++i) {
      s.min[i] = s.max[i] = targets.sample(0)[i];
      for (std::size_t b = 1; b < targets.count(); ++b) {
        s.min[i] = std::min(s.min[i], targets.sample(b)[i]);
        s.max[i] = std::max(s.max[i], targets.sample(b)[i]);
      }
    }
    s.validate();
    return s;
  }

  void validate() const {
    if (!fitted()) throw StateError("target scaler is not fitted");
    for (std::size_t i = 0; i < min.size(); ++i)
      if (!(max[i] > min[i]))
        throw ValidationError("degenerate training split: target " + std::to_string(i) + " has max == min");
  }

  [[nodiscard]] double scale(std::size_t i, double y) const { return (y - min[i]) / (max[i] - min[i]); }
  [[nodiscard]] double rescale(std::size_t i, double y) const { return y * (max[i] - min[i]) + min[i]; }

  [[nodiscard]] Batch scale(const Batch& y) const {
    validate();
    if (y.shape().size() != width()) throw DimensionError("scaler width does not match targets");
    Batch out(y.count(), y.shape());
    for (std::size_t b = 0; b < y.count(); ++b)
      for (std::size_t i = 0; i < width(); ++i) out.sample(b)[i] = scale(i, y.sample(b)[i]);
    return out;
  }
  [[nodiscard]] Batch rescale(const Batch& y) const {
    validate();
    if (y.shape().size() != width()) throw DimensionError("scaler width does not match predictions");
    Batch out(y.count(), y.shape());
    for (std::size_t b = 0; b < y.count(); ++b)
      for (std::size_t i = 0; i < width(); ++i) out.sample(b)[i] = rescale(i, y.sample(b)[i]);
    return out;
  }

  /// Single-column scaler for one ensemble member.
  [[nodiscard]] TargetScaler column(std::size_t i) const { return {{min.at(i)}, {max.at(i)}}; }

  friend bool operator==(const TargetScaler&, const TargetScaler&) = default;
};

/// A trained Model A (one network, five outputs) or Model B (five single-output members).
struct GaitModel {
  ModelKind kind = ModelKind::B;
  Preset preset = Preset::paper;
  ArchitectureSpec architecture;
  TrainConfig train_config;
  TargetScaler scaler;  // always five columns, fixed target order
  std::vector<Network> members;
  std::vector<CnnTarget> member_targets;  // Model B only; Model A covers all

  /// Physical-unit predictions [n x 5], inference mode.
  [[nodiscard]] Batch predict(const Batch& strides) const {
    if (members.empty()) throw StateError("model has no trained networks");
    if (!scaler.fitted()) throw StateError("model has no target scaler");
    const std::size_t n = strides.count();
    Batch out(n, Shape{1, kCnnTargetCount});
    constexpr std::size_t chunk = 256;
    for (std::size_t m = 0; m < members.size(); ++m) {
      for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t len = std::min(chunk, n - start);
        Batch in(len, strides.shape());
        for (std::size_t b = 0; b < len; ++b) in.set_sample(b, strides.sample(start + b));
        const Batch raw = members[m].predict(in);
        for (std::size_t b = 0; b < len; ++b) {
          if (kind == ModelKind::A) {
            for (std::size_t i = 0; i < kCnnTargetCount; ++i)
              out.sample(start + b)[i] = scaler.rescale(i, raw.sample(b)[i]);
          } else {
            const auto col = static_cast<std::size_t>(member_targets.at(m));
            out.sample(start + b)[col] = scaler.rescale(col, raw.sample(b)[0]);
          }
        }
      }
    }
    return out;
  }

  void validate() const {
    if (kind == ModelKind::A && members.size() != 1) throw StateError("Model A holds exactly one network");
    if (kind == ModelKind::B && (members.size() != kCnnTargetCount || member_targets.size() != kCnnTargetCount))
      throw StateError("Model B holds one network per CNN target");
  }
};

/// Trains one network on the scaled target columns it is responsible for.
/// `column` selects a single target (Model B member); nullopt trains all five.
inline Network train_member(const ArchitectureSpec& arch, const Batch& inputs, const Batch& scaled_targets,
                            std::optional<std::size_t> column, const TrainConfig& cfg, Rng& rng,
                            LossCurve* curve_out = nullptr) {
  Network net = build_network(arch);
  init_parameters(net, cfg, rng);
  TrainingSet set{inputs, Batch()};
  if (column) {
    set.targets = Batch(scaled_targets.count(), Shape{1, 1});
    for (std::size_t b = 0; b < scaled_targets.count(); ++b) set.targets.sample(b)[0] = scaled_targets.sample(b)[*column];
  } else {
    set.targets = scaled_targets;
  }
  auto curve = train(net, set, cfg, rng);
  if (curve_out != nullptr) *curve_out = std::move(curve);
  return net;
}

/// Number of independently trained networks a model kind consists of.
inline std::size_t member_count(ModelKind kind) { return kind == ModelKind::A ? 1 : kCnnTargetCount; }

/// Fits the scaler on `targets` (physical units, [n x 5]) and trains every
/// member. Member m draws from make_rng(seed, {run_id, m}).
inline GaitModel train_model(const ArchitectureSpec& arch, ModelKind kind, Preset preset, const TrainConfig& cfg,
                             const Batch& inputs, const Batch& targets, std::uint64_t seed, std::uint64_t run_id = 0,
                             std::size_t jobs = 1, std::vector<LossCurve>* curves = nullptr) {
  if (targets.shape().size() != kCnnTargetCount) throw DimensionError("train_model expects five target columns");
  GaitModel model;
  model.kind = kind;
  model.preset = preset;
  model.architecture = arch;
  model.train_config = cfg;
  model.train_config.seed = seed;
  model.scaler = TargetScaler::fit(targets);
  const Batch scaled = model.scaler.scale(targets);
  const std::size_t n = member_count(kind);
  model.members.resize(n);
  std::vector<LossCurve> local(n);
  parallel_for(n, jobs, [&](std::size_t m) {
    Rng rng = make_rng(seed, {run_id, m});
    std::optional<std::size_t> column;
    if (kind == ModelKind::B) column = m;
    model.members[m] = train_member(model.architecture, inputs, scaled, column, cfg, rng, &local[m]);
  });
  if (kind == ModelKind::B) model.member_targets.assign(kCnnTargets.begin(), kCnnTargets.end());
  if (curves != nullptr) *curves = std::move(local);
  return model;
}

inline GaitModel train_model(ModelKind kind, Preset preset, const TrainConfig& cfg, const Batch& inputs,
                             const Batch& targets, std::uint64_t seed, std::uint64_t run_id = 0, std::size_t jobs = 1,
                             std::vector<LossCurve>* curves = nullptr) {
  return train_model(architecture_for(kind, preset), kind, preset, cfg, inputs, targets, seed, run_id, jobs, curves);
}

}  // namespace gaitcnn
