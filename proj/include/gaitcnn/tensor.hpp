#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gaitcnn/errors.hpp"

namespace gaitcnn {

/// Channel count and sample count of one multichannel signal.
struct Shape {
  std::size_t channels = 1;
  std::size_t length = 1;

  [[nodiscard]] constexpr std::size_t size() const { return channels * length; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.length);
}

/// A multichannel time series stored channel-major: all samples of channel 0,
/// then channel 1, and so on. Flattening is therefore a reinterpretation.
class Series {
 public:
  Series() = default;
  Series(std::size_t channels, std::size_t length, double fill = 0.0)
      : shape_{channels, length}, values_(channels * length, fill) {
    if (channels == 0 || length == 0) throw ValidationError("Series needs at least one channel and one sample");
  }
  Series(std::size_t channels, std::size_t length, std::vector<double> values)
      : shape_{channels, length}, values_(std::move(values)) {
    if (channels == 0 || length == 0) throw ValidationError("Series needs at least one channel and one sample");
    if (values_.size() != shape_.size())
      throw DimensionError("Series value count " + std::to_string(values_.size()) + " does not match shape " +
                           to_string(shape_));
  }

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] std::size_t channels() const { return shape_.channels; }
  [[nodiscard]] std::size_t length() const { return shape_.length; }

  double& at(std::size_t c, std::size_t t) { return values_[c * shape_.length + t]; }
  [[nodiscard]] double at(std::size_t c, std::size_t t) const { return values_[c * shape_.length + t]; }

  std::span<double> channel(std::size_t c) { return {values_.data() + c * shape_.length, shape_.length}; }
  [[nodiscard]] std::span<const double> channel(std::size_t c) const {
    return {values_.data() + c * shape_.length, shape_.length};
  }

  std::span<double> values() { return values_; }
  [[nodiscard]] std::span<const double> values() const { return values_; }
  [[nodiscard]] const std::vector<double>& data() const { return values_; }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Series&, const Series&) = default;

 private:
  Shape shape_{};
  std::vector<double> values_;
};

/// A mini-batch of equally shaped samples, sample-major.
class Batch {
 public:
  Batch() = default;
  Batch(std::size_t count, Shape shape, double fill = 0.0)
      : count_(count), shape_(shape), data_(count * shape.size(), fill) {}

  [[nodiscard]] std::size_t count() const { return count_; }
  [[nodiscard]] const Shape& shape() const { return shape_; }

  std::span<double> sample(std::size_t b) { return {data_.data() + b * shape_.size(), shape_.size()}; }
  [[nodiscard]] std::span<const double> sample(std::size_t b) const {
    return {data_.data() + b * shape_.size(), shape_.size()};
  }

  double* data() { return data_.data(); }
  [[nodiscard]] const double* data() const { return data_.data(); }
  [[nodiscard]] std::span<const double> values() const { return data_; }

  /// Reinterpret each sample's shape without touching the data.
  void reshape(Shape s) {
    if (s.size() != shape_.size()) throw DimensionError("reshape changes element count");
    shape_ = s;
  }

  void resize(std::size_t count, Shape shape) {
    count_ = count;
    shape_ = shape;
    data_.assign(count * shape.size(), 0.0);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  void set_sample(std::size_t b, std::span<const double> v) {
    if (v.size() != shape_.size()) throw DimensionError("sample size mismatch");
    std::copy(v.begin(), v.end(), data_.begin() + static_cast<std::ptrdiff_t>(b * shape_.size()));
  }

 private:
  std::size_t count_ = 0;
  Shape shape_{};
  std::vector<double> data_;
};

}  // namespace gaitcnn
