#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <tuple>
#include <vector>

#include "gaitcnn/errors.hpp"
#include "gaitcnn/gaitio.hpp"
#include "gaitcnn/log.hpp"
#include "gaitcnn/parallel.hpp"
#include "gaitcnn/targets.hpp"
#include "gaitcnn/tensor.hpp"

namespace gaitcnn {

inline constexpr std::size_t kStrideLength = 256;

/// Identifier stored with preprocessed data so another detector can be swapped in.
inline constexpr const char* kDetectionMethod = "gy-swing-peak-minima/1";

/// A stride longer than the fixed network input.
class StrideRejected : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Heel strike and toe off as sample indices.
struct GaitEvents {
  std::size_t heel_strike = 0;
  std::size_t toe_off = 0;

  friend bool operator==(const GaitEvents&, const GaitEvents&) = default;
};

struct DetectConfig {
  /// Minimum max-min spread of the sagittal angular rate; flatter strides have no swing.
  double min_swing_range_dps = 50.0;
};

/// Locates the swing-phase maximum of the sagittal angular rate (gy), then
/// TO as the minimum before it and HS as the minimum after it. Indices are
/// relative to the stride start plus `offset`. Ties resolve to the first sample.
inline GaitEvents detect_events(const Series& stride, double sample_rate, std::size_t offset = 0,
                                const DetectConfig& cfg = {}) {
  if (stride.channels() != kChannels) throw DimensionError("detect_events expects 6 channels");
  if (!(sample_rate > 0.0)) throw ValidationError("sample rate must be positive");
  const auto g = stride.channel(Channel::gy);
  const auto [lo, hi] = std::minmax_element(g.begin(), g.end());
  if (*hi - *lo < cfg.min_swing_range_dps) throw DetectionError("no swing peak: sagittal angular rate is flat");
  const auto peak = static_cast<std::size_t>(hi - g.begin());
  if (peak == 0 || peak + 1 >= g.size()) throw DetectionError("swing peak at the stride border");
  const auto to = static_cast<std::size_t>(std::min_element(g.begin(), g.begin() + peak) - g.begin());
  const auto hs = static_cast<std::size_t>(std::min_element(g.begin() + peak + 1, g.end()) - g.begin());
  return {hs + offset, to + offset};
}

/// A heel-strike to heel-strike segment [start, end) with the toe off inside it.
/// `source` indexes the annotated stride in which the starting heel strike was found.
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t toe_off = 0;
  std::size_t source = 0;

  [[nodiscard]] std::size_t length() const { return end - start; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Re-cuts one walk of consecutive annotated strides at the detected heel
/// strikes. Annotated stride k holds TO_k and the following heel strike, so
/// segment k runs from the HS found in stride k to the HS found in stride k+1
/// and carries the TO found in stride k+1. n strides give n-1 segments.
inline std::vector<Segment> resegment_hs_to_hs(const std::vector<StrideAnnotation>& strides,
                                               const std::vector<GaitEvents>& events) {
  if (strides.size() != events.size()) throw DimensionError("one event pair per stride required");
  for (std::size_t k = 0; k < strides.size(); ++k) {
    if (k > 0 && strides[k].start != strides[k - 1].end)
      throw ValidationError("strides " + std::to_string(k - 1) + " and " + std::to_string(k) + " are not consecutive");
    const auto& e = events[k];
    if (e.heel_strike < strides[k].start || e.heel_strike >= strides[k].end || e.toe_off < strides[k].start ||
        e.toe_off >= strides[k].end)
      throw ValidationError("events of stride " + std::to_string(k) + " lie outside its borders");
  }
  std::vector<Segment> out;
  for (std::size_t k = 0; k + 1 < strides.size(); ++k) {
    const Segment s{events[k].heel_strike, events[k + 1].heel_strike, events[k + 1].toe_off, k};
    if (!(s.start <= s.toe_off && s.toe_off < s.end))
      throw ValidationError("events out of order between strides " + std::to_string(k) + " and " +
                            std::to_string(k + 1));
    out.push_back(s);
  }
  return out;
}

/// Fixed-size network input: a 6 x 256 normalized stride, zero beyond original_length.
struct StrideTensor {
  Series values{kChannels, kStrideLength};
  std::size_t original_length = 0;
  std::string patient_id;
  std::size_t stride_id = 0;

  friend bool operator==(const StrideTensor&, const StrideTensor&) = default;
};

/// Appends zeros up to 256 samples.
inline StrideTensor pad_stride(const Series& segment, std::string patient_id = {}, std::size_t stride_id = 0) {
  if (segment.channels() != kChannels) throw DimensionError("pad_stride expects 6 channels");
  if (segment.length() > kStrideLength)
    throw StrideRejected("stride " + std::to_string(stride_id) + (patient_id.empty() ? "" : " of " + patient_id) +
                         " has " + std::to_string(segment.length()) + " samples, more than " +
                         std::to_string(kStrideLength));
  StrideTensor t;
  t.original_length = segment.length();
  t.patient_id = std::move(patient_id);
  t.stride_id = stride_id;
  for (std::size_t c = 0; c < kChannels; ++c)
    std::copy(segment.channel(c).begin(), segment.channel(c).end(), t.values.channel(c).begin());
  return t;
}

struct TemporalParams {
  double stride_time_s = 0.0;
  double stance_time_s = 0.0;
  double swing_time_s = 0.0;

  friend bool operator==(const TemporalParams&, const TemporalParams&) = default;
};

/// stance = (TO - HS) T, swing = (HS' - TO) T and stride = stance + swing,
/// with T = 1 / sample_rate. Each term is an integer sample count times T.
inline TemporalParams compute_temporal_params(std::size_t heel_strike, std::size_t toe_off, std::size_t next_heel_strike,
                                              double sample_rate = kSampleRate) {
  if (!(sample_rate > 0.0)) throw ValidationError("sample rate must be positive");
  if (toe_off < heel_strike || next_heel_strike < toe_off || next_heel_strike == heel_strike)
    throw ValidationError("gait events are not monotone (HS " + std::to_string(heel_strike) + ", TO " +
                          std::to_string(toe_off) + ", next HS " + std::to_string(next_heel_strike) + ")");
  const double period = 1.0 / sample_rate;
  TemporalParams p;
  p.stance_time_s = static_cast<double>(toe_off - heel_strike) * period;
  p.swing_time_s = static_cast<double>(next_heel_strike - toe_off) * period;
  p.stride_time_s = p.stance_time_s + p.swing_time_s;
  return p;
}

/// One network-ready stride with its reference and event-based parameters.
struct PreparedStride {
  StrideTensor tensor;
  Foot foot = Foot::right;
  GaitTargets reference;
  Segment segment;
  TemporalParams temporal;

  [[nodiscard]] const std::string& patient_id() const { return tensor.patient_id; }
  [[nodiscard]] std::size_t stride_id() const { return tensor.stride_id; }
  [[nodiscard]] bool has_cnn_reference() const {
    for (auto t : kCnnTargets)
      if (std::isnan(reference.cnn(t))) return false;
    return true;
  }

  friend bool operator==(const PreparedStride&, const PreparedStride&) = default;
};

struct PrepareReport {
  std::size_t annotated = 0;
  std::size_t walks = 0;
  std::size_t usable = 0;
  std::size_t detection_failures = 0;
  std::size_t rejected_length = 0;
  std::size_t clamped_samples = 0;
  /// (patient id, annotation row, reason) of every stride that produced no tensor.
  std::vector<std::tuple<std::string, std::size_t, std::string>> excluded;

  PrepareReport& operator+=(const PrepareReport& o) {
    excluded.insert(excluded.end(), o.excluded.begin(), o.excluded.end());
    annotated += o.annotated;
    walks += o.walks;
    usable += o.usable;
    detection_failures += o.detection_failures;
    rejected_length += o.rejected_length;
    clamped_samples += o.clamped_samples;
    return *this;
  }
};

/// Splits annotations into walks: maximal runs of strides where each starts
/// where the previous one ended.
inline std::vector<std::vector<std::size_t>> split_walks(const std::vector<StrideAnnotation>& strides) {
  std::vector<std::vector<std::size_t>> walks;
  for (std::size_t k = 0; k < strides.size(); ++k) {
    if (k == 0 || strides[k].start != strides[k - 1].end) walks.emplace_back();
    walks.back().push_back(k);
  }
  return walks;
}

/// calibrate -> align -> normalize, event detection per annotated stride,
/// HS->HS re-segmentation per walk and padding. Strides without detectable
/// events split their walk; over-long segments are rejected and logged.
inline std::vector<PreparedStride> prepare_recording(const RawRecording& rec, const CalibConfig& calib = {},
                                                     PrepareReport* report = nullptr, const DetectConfig& detect = {}) {
  rec.validate();
  PrepareReport rep;
  rep.annotated = rec.strides.size();
  const std::string ctx = rec.patient_id + "/" + to_string(rec.foot);
  const Series aligned = align_axes(calibrate(rec, calib), rec.foot, calib);
  const Series normalized = normalize_ranges(aligned, calib, &rep.clamped_samples, ctx);

  std::vector<PreparedStride> out;
  for (const auto& walk : split_walks(rec.strides)) {
    ++rep.walks;
    // Detect events; a failure ends the current run of usable strides.
    std::vector<std::vector<std::size_t>> runs(1);
    std::vector<GaitEvents> events(rec.strides.size());
    for (std::size_t k : walk) {
      const auto& s = rec.strides[k];
      Series slice(kChannels, s.end - s.start);
      for (std::size_t c = 0; c < kChannels; ++c)
        std::copy_n(aligned.channel(c).begin() + static_cast<std::ptrdiff_t>(s.start), s.end - s.start,
                    slice.channel(c).begin());
      try {
        events[k] = detect_events(slice, rec.sample_rate, s.start, detect);
        runs.back().push_back(k);
      } catch (const DetectionError& e) {
        ++rep.detection_failures;
        rep.excluded.emplace_back(rec.patient_id, s.row, std::string("event detection failed: ") + e.what());
        log_warning(ctx + ": stride row " + std::to_string(s.row) + " excluded: " + e.what());
        if (!runs.back().empty()) runs.emplace_back();
      }
    }
    for (const auto& run : runs) {
      if (run.size() < 2) continue;
      std::vector<StrideAnnotation> strides;
      std::vector<GaitEvents> ev;
      for (std::size_t k : run) {
        strides.push_back(rec.strides[k]);
        ev.push_back(events[k]);
      }
      for (const auto& seg : resegment_hs_to_hs(strides, ev)) {
        const auto& ann = strides[seg.source];
        Series piece(kChannels, seg.length());
        for (std::size_t c = 0; c < kChannels; ++c)
          std::copy_n(normalized.channel(c).begin() + static_cast<std::ptrdiff_t>(seg.start), seg.length(),
                      piece.channel(c).begin());
        PreparedStride p;
        try {
          p.tensor = pad_stride(piece, rec.patient_id, ann.row);
        } catch (const StrideRejected& e) {
          ++rep.rejected_length;
          rep.excluded.emplace_back(rec.patient_id, ann.row, e.what());
          log_warning(ctx + ": " + e.what());
          continue;
        }
        p.foot = rec.foot;
        p.reference = ann.reference;
        p.segment = seg;
        p.segment.source = ann.row;
        p.temporal = compute_temporal_params(seg.start, seg.toe_off, seg.end, rec.sample_rate);
        out.push_back(std::move(p));
      }
    }
  }
  rep.usable = out.size();
  if (report != nullptr) *report = rep;
  return out;
}

/// prepare_recording over every recording, in record order.
inline std::vector<PreparedStride> prepare_dataset(const std::vector<RawRecording>& recs, const CalibConfig& calib = {},
                                                   PrepareReport* report = nullptr, std::size_t jobs = 1,
                                                   const DetectConfig& detect = {}) {
  std::vector<std::vector<PreparedStride>> parts(recs.size());
  std::vector<PrepareReport> reps(recs.size());
  parallel_for(recs.size(), jobs, [&](std::size_t i) { parts[i] = prepare_recording(recs[i], calib, &reps[i], detect); });
  std::vector<PreparedStride> out;
  PrepareReport total;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    total += reps[i];
    for (auto& p : parts[i]) out.push_back(std::move(p));
  }
  if (report != nullptr) *report = total;
  return out;
}

/// Network inputs [n x 6 x 256].
inline Batch stack_inputs(const std::vector<PreparedStride>& strides) {
  Batch b(strides.size(), Shape{kChannels, kStrideLength});
  for (std::size_t i = 0; i < strides.size(); ++i) b.set_sample(i, strides[i].tensor.values.values());
  return b;
}

/// Reference CNN targets [n x 5] in the fixed target order.
inline Batch stack_cnn_targets(const std::vector<PreparedStride>& strides) {
  Batch b(strides.size(), Shape{1, kCnnTargetCount});
  for (std::size_t i = 0; i < strides.size(); ++i)
    for (std::size_t t = 0; t < kCnnTargetCount; ++t) b.sample(i)[t] = strides[i].reference.cnn(kCnnTargets[t]);
  return b;
}

}  // namespace gaitcnn
