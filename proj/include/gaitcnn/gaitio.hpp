#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "gaitcnn/errors.hpp"
#include "gaitcnn/log.hpp"
#include "gaitcnn/targets.hpp"
#include "gaitcnn/tensor.hpp"
#include "gaitcnn/text.hpp"

namespace gaitcnn {

enum class Foot { left, right };

inline std::string to_string(Foot f) { return f == Foot::left ? "left" : "right"; }
inline Foot foot_from_string(std::string_view s) {
  if (s == "left") return Foot::left;
  if (s == "right") return Foot::right;
  throw ValidationError("unknown foot '" + std::string(s) + "'");
}

inline constexpr double kSampleRate = 102.4;
inline constexpr std::size_t kChannels = 6;
inline constexpr int kCountMax = 4095;

/// Channel order of every signal: accelerometer x, y, z then gyroscope x, y, z.
enum Channel : std::size_t { ax = 0, ay, az, gx, gy, gz };
inline constexpr std::array<const char*, kChannels> kChannelNames{"ax", "ay", "az", "gx", "gy", "gz"};
inline constexpr bool is_accel(std::size_t c) { return c < 3; }

/// One annotated stride: dataset-provided borders (0-based, end exclusive)
/// and the reference parameters stored on the same annotation row.
struct StrideAnnotation {
  std::size_t start = 0;
  std::size_t end = 0;
  GaitTargets reference;
  std::size_t row = 0;  // 0-based data row in the patient's strides file

  friend bool operator==(const StrideAnnotation&, const StrideAnnotation&) = default;
};

/// Raw 12-bit counts of one foot sensor plus its stride annotations.
struct RawRecording {
  std::string patient_id;
  Foot foot = Foot::right;
  double sample_rate = kSampleRate;
  std::array<std::vector<int>, kChannels> counts;
  std::vector<StrideAnnotation> strides;

  [[nodiscard]] std::size_t length() const { return counts[0].size(); }

  /// Throws ValidationError on out-of-range counts, ragged channels or
  /// overlapping / descending / out-of-bounds annotations.
  void validate() const {
    const std::size_t n = length();
    for (std::size_t c = 0; c < kChannels; ++c) {
      if (counts[c].size() != n) throw ValidationError(patient_id + ": channels have different lengths");
      for (std::size_t i = 0; i < n; ++i)
        if (counts[c][i] < 0 || counts[c][i] > kCountMax)
          throw ValidationError(patient_id + ": count outside 12-bit range in channel " + kChannelNames[c] +
                                " at sample " + std::to_string(i));
    }
    for (std::size_t k = 0; k < strides.size(); ++k) {
      const auto& s = strides[k];
      if (s.end <= s.start || s.end > n)
        throw ValidationError(patient_id + ": stride " + std::to_string(k) + " has invalid bounds");
      if (k > 0 && s.start < strides[k - 1].end)
        throw ValidationError(patient_id + ": stride " + std::to_string(k) + " overlaps its predecessor");
    }
  }

  friend bool operator==(const RawRecording&, const RawRecording&) = default;
};

/// Per-channel affine calibration, sensor ranges and the left-foot mirror.
struct CalibConfig {
  std::array<double, kChannels> offset{2048, 2048, 2048, 2048, 2048, 2048};
  /// counts per g (accelerometer) and counts per deg/s (gyroscope)
  std::array<double, kChannels> gain{341.25, 341.25, 341.25, 4.095, 4.095, 4.095};
  double accel_range_g = 6.0;
  double gyro_range_dps = 500.0;
  /// Channels negated on the left foot to map it onto the right-foot frame:
  /// the medio-lateral acceleration and the angular rates about the
  /// anterior-posterior and vertical axes.
  std::array<bool, kChannels> left_mirror{false, true, false, true, false, true};

  void validate() const {
    for (std::size_t c = 0; c < kChannels; ++c)
      if (!(gain[c] > 0.0) || !std::isfinite(offset[c]))
        throw ValidationError(std::string("calibration gain must be positive for channel ") + kChannelNames[c]);
    if (!(accel_range_g > 0.0) || !(gyro_range_dps > 0.0)) throw ValidationError("sensor ranges must be positive");
  }
  [[nodiscard]] double range(std::size_t c) const { return is_accel(c) ? accel_range_g : gyro_range_dps; }

  friend bool operator==(const CalibConfig&, const CalibConfig&) = default;
};

/// (count - offset) / gain per channel; g for accelerometer, deg/s for gyroscope.
inline Series calibrate(const RawRecording& raw, const CalibConfig& calib = {}) {
  calib.validate();
  const std::size_t n = raw.length();
  if (n == 0) throw ValidationError(raw.patient_id + ": empty recording");
  Series out(kChannels, n);
  for (std::size_t c = 0; c < kChannels; ++c)
    for (std::size_t i = 0; i < n; ++i) out.at(c, i) = (raw.counts[c][i] - calib.offset[c]) / calib.gain[c];
  return out;
}

/// Inverse of calibrate: offset + round(value * gain), clamped to 12 bit.
/// Rounding is symmetric about the offset so mirrored signals stay mirrored.
inline std::array<std::vector<int>, kChannels> decalibrate(const Series& physical, const CalibConfig& calib = {}) {
  calib.validate();
  if (physical.channels() != kChannels) throw DimensionError("decalibrate expects 6 channels");
  std::array<std::vector<int>, kChannels> counts;
  for (std::size_t c = 0; c < kChannels; ++c) {
    counts[c].resize(physical.length());
    for (std::size_t i = 0; i < physical.length(); ++i) {
      const double v = std::round(calib.offset[c]) + std::round(physical.at(c, i) * calib.gain[c]);
      counts[c][i] = static_cast<int>(std::clamp(v, 0.0, static_cast<double>(kCountMax)));
    }
  }
  return counts;
}

/// Maps a left-foot signal onto the right-foot frame; identity for the right foot.
/// Applying it twice to a left-foot signal restores the input.
inline Series align_axes(const Series& signal, Foot foot, const CalibConfig& calib = {}) {
  if (signal.channels() != kChannels) throw DimensionError("align_axes expects 6 channels");
  Series out = signal;
  if (foot == Foot::right) return out;
  for (std::size_t c = 0; c < kChannels; ++c)
    if (calib.left_mirror[c])
      for (double& v : out.channel(c)) v = -v;
  return out;
}

/// Divides by the sensor range; values beyond +-1 are clamped and reported.
inline Series normalize_ranges(const Series& signal, const CalibConfig& calib = {}, std::size_t* clamped = nullptr,
                               const std::string& context = {}) {
  if (signal.channels() != kChannels) throw DimensionError("normalize_ranges expects 6 channels");
  Series out = signal;
  std::size_t n_clamped = 0;
  for (std::size_t c = 0; c < kChannels; ++c) {
    const double r = calib.range(c);
    for (double& v : out.channel(c)) {
      v /= r;
      if (v > 1.0 || v < -1.0) {
        v = std::clamp(v, -1.0, 1.0);
        ++n_clamped;
      }
    }
  }
  if (n_clamped > 0)
    log_warning((context.empty() ? std::string("signal") : context) + ": " + std::to_string(n_clamped) +
                " saturated samples clamped to the sensor range");
  if (clamped != nullptr) *clamped = n_clamped;
  return out;
}

/// Summary of a load_dataset call.
struct LoadReport {
  std::size_t patients = 0;
  std::size_t recordings = 0;
  std::size_t strides = 0;
  std::vector<std::string> excluded_files;
};

namespace io_detail {

inline const std::string kSignalHeader = "t,ax,ay,az,gx,gy,gz";
inline const std::string kStridesHeader =
    "foot,start,end,stride_length_cm,stride_width_cm,foot_angle_deg,stride_time_s,swing_time_s,stance_time_s,"
    "heel_contact_s,toe_contact_s";

inline std::string where(const std::filesystem::path& file, std::size_t line) {
  return file.string() + ":" + std::to_string(line) + ": ";
}

inline std::string read_line_stripped(std::istream& in, bool& ok) {
  std::string line;
  ok = static_cast<bool>(std::getline(in, line));
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

inline std::array<std::vector<int>, kChannels> read_signal(const std::filesystem::path& file, double sample_rate) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  bool ok = false;
  const std::string header = read_line_stripped(in, ok);
  if (!ok || header != kSignalHeader)
    throw FormatError(where(file, 1) + "header mismatch, expected '" + kSignalHeader + "'");
  std::array<std::vector<int>, kChannels> counts;
  std::size_t line_no = 1;
  while (true) {
    const std::string line = read_line_stripped(in, ok);
    if (!ok) break;
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto fields = text::split(line);
    if (fields.size() != kChannels + 1)
      throw FormatError(where(file, line_no) + "expected 7 fields, found " + std::to_string(fields.size()));
    const auto t = text::parse_double(fields[0]);
    if (!t) throw FormatError(where(file, line_no) + "malformed time stamp");
    const double expected = static_cast<double>(counts[0].size()) / sample_rate;
    if (std::abs(*t - expected) > 0.25 / sample_rate)
      throw FormatError(where(file, line_no) + "time stamp does not match the sample rate (missing samples?)");
    for (std::size_t c = 0; c < kChannels; ++c) {
      const auto v = text::parse_int<int>(fields[c + 1]);
      if (!v) throw FormatError(where(file, line_no) + "malformed count in column " + kChannelNames[c]);
      if (*v < 0 || *v > kCountMax)
        throw FormatError(where(file, line_no) + "count " + std::to_string(*v) + " outside 12-bit range");
      counts[c].push_back(*v);
    }
  }
  return counts;
}

struct AnnotationRow {
  Foot foot;
  StrideAnnotation stride;
  std::size_t line;
};

inline std::vector<AnnotationRow> read_strides(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  bool ok = false;
  const std::string header = read_line_stripped(in, ok);
  if (!ok || header != kStridesHeader)
    throw FormatError(where(file, 1) + "header mismatch, expected '" + kStridesHeader + "'");
  std::vector<AnnotationRow> rows;
  std::size_t line_no = 1;
  while (true) {
    const std::string line = read_line_stripped(in, ok);
    if (!ok) break;
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line);
    if (f.size() != 11) throw FormatError(where(file, line_no) + "expected 11 fields, found " + std::to_string(f.size()));
    AnnotationRow row{};
    row.line = line_no;
    try {
      row.foot = foot_from_string(text::trim(f[0]));
    } catch (const ValidationError&) {
      throw FormatError(where(file, line_no) + "foot must be 'left' or 'right'");
    }
    const auto start = text::parse_int<std::size_t>(f[1]);
    const auto end = text::parse_int<std::size_t>(f[2]);
    if (!start || !end) throw FormatError(where(file, line_no) + "malformed sample index");
    row.stride.start = *start;
    row.stride.end = *end;
    row.stride.row = rows.size();
    std::array<double, 8> v{};
    for (std::size_t i = 0; i < 8; ++i) {
      const auto field = text::trim(f[i + 3]);
      if (field.empty()) {
        v[i] = std::numeric_limits<double>::quiet_NaN();  // reference not available
        continue;
      }
      const auto d = text::parse_double(field);
      if (!d) throw FormatError(where(file, line_no) + "malformed value in column " + std::to_string(i + 4));
      v[i] = *d;
    }
    auto& r = row.stride.reference;
    r.stride_length_cm = v[0];
    r.stride_width_cm = v[1];
    r.foot_angle_deg = v[2];
    r.stride_time_s = v[3];
    r.swing_time_s = v[4];
    r.stance_time_s = v[5];
    r.heel_contact_s = v[6];
    r.toe_contact_s = v[7];
    rows.push_back(row);
  }
  return rows;
}

/// Soft plausibility checks on a reference row; returns warning text or empty.
inline std::string check_reference(const GaitTargets& r, double sample_rate) {
  std::ostringstream w;
  for (double t : {r.stride_time_s, r.swing_time_s, r.stance_time_s, r.heel_contact_s, r.toe_contact_s})
    if (!std::isnan(t) && !(t > 0.0)) w << " non-positive time";
  if (!std::isnan(r.stride_time_s) &&
      std::abs(r.stride_time_s - (r.stance_time_s + r.swing_time_s)) > 1.0 / sample_rate)
    w << " stride time differs from stance + swing by more than one sample";
  if (r.stride_length_cm < 20.01 || r.stride_length_cm > 129.81) w << " stride length outside the typical range";
  if (r.stride_time_s > 2.5) w << " stride time longer than 2.5 s";
  return w.str();
}

inline void load_patient_dir(const std::filesystem::path& dir, LoadReport& rep, double sample_rate,
                             std::vector<RawRecording>& records) {
  namespace fs = std::filesystem;
  const std::string id = dir.filename().string();
  const fs::path strides_file = dir / (id + "_strides.csv");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (!fs::exists(strides_file)) {
    log_warning(dir.string() + ": no " + strides_file.filename().string() + ", patient skipped");
    for (const auto& f : files) rep.excluded_files.push_back(f.string());
    return;
  }
  const auto rows = io_detail::read_strides(strides_file);
  std::size_t used = 0;
  for (Foot foot : {Foot::left, Foot::right}) {
    const fs::path signal_file = dir / (id + "_" + to_string(foot) + ".csv");
    const bool has_rows = std::any_of(rows.begin(), rows.end(), [&](const auto& r) { return r.foot == foot; });
    if (!fs::exists(signal_file)) {
      if (has_rows)
        throw FormatError(io_detail::where(strides_file, 1) + "annotations for the " + to_string(foot) +
                          " foot but no " + signal_file.filename().string());
      continue;
    }
    RawRecording rec;
    rec.patient_id = id;
    rec.foot = foot;
    rec.sample_rate = sample_rate;
    rec.counts = io_detail::read_signal(signal_file, sample_rate);
    std::size_t prev_end = 0;
    bool first = true;
    for (const auto& r : rows) {
      if (r.foot != foot) continue;
      const auto& s = r.stride;
      if (s.end <= s.start || s.end > rec.length())
        throw ValidationError(io_detail::where(strides_file, r.line) + "stride bounds [" + std::to_string(s.start) +
                              ", " + std::to_string(s.end) + ") invalid for a recording of " +
                              std::to_string(rec.length()) + " samples");
      if (!first && s.start < prev_end)
        throw ValidationError(io_detail::where(strides_file, r.line) + "stride overlaps the previous stride");
      if (const auto w = io_detail::check_reference(s.reference, sample_rate); !w.empty())
        log_warning(io_detail::where(strides_file, r.line) + "reference check:" + w);
      prev_end = s.end;
      first = false;
      rec.strides.push_back(s);
    }
    ++used;
    rep.strides += rec.strides.size();
    records.push_back(std::move(rec));
  }
  for (const auto& f : files) {
    const auto name = f.filename().string();
    if (name != id + "_strides.csv" && name != id + "_left.csv" && name != id + "_right.csv")
      rep.excluded_files.push_back(f.string());
  }
  if (used > 0) ++rep.patients;
}

}  // namespace io_detail

/// Reads `root/<id>/<id>_<foot>.csv` (counts) and `root/<id>/<id>_strides.csv`.
/// Records are sorted by (patient id, foot) regardless of directory order.
inline std::vector<RawRecording> load_dataset(const std::filesystem::path& root, LoadReport* report = nullptr,
                                              double sample_rate = kSampleRate) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root.string());
  LoadReport rep;
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory())
      dirs.push_back(e.path());
    else
      rep.excluded_files.push_back(e.path().string());
  }
  std::sort(dirs.begin(), dirs.end());

  std::vector<RawRecording> records;
  for (const auto& dir : dirs) io_detail::load_patient_dir(dir, rep, sample_rate, records);
  rep.recordings = records.size();
  if (records.empty()) log_warning(root.string() + ": no recordings found");
  log_info("loaded " + std::to_string(rep.patients) + " patients, " + std::to_string(rep.strides) + " strides, " +
           std::to_string(rep.excluded_files.size()) + " files excluded");
  if (report != nullptr) *report = std::move(rep);
  return records;
}

/// Reads a single patient directory `dir/<id>_<foot>.csv`, `dir/<id>_strides.csv`.
inline std::vector<RawRecording> load_patient(const std::filesystem::path& dir, double sample_rate = kSampleRate) {
  if (!std::filesystem::is_directory(dir)) throw IoError("patient directory not found: " + dir.string());
  LoadReport rep;
  std::vector<RawRecording> records;
  io_detail::load_patient_dir(dir, rep, sample_rate, records);
  if (records.empty()) throw ValidationError(dir.string() + ": no recordings found");
  return records;
}

/// Writes one patient's recordings in the layout read by load_dataset.
/// All recordings must share the patient id.
inline void write_patient(const std::filesystem::path& root, const std::vector<RawRecording>& recs) {
  namespace fs = std::filesystem;
  if (recs.empty()) return;
  const std::string& id = recs.front().patient_id;
  const fs::path dir = root / id;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream strides(dir / (id + "_strides.csv"), std::ios::binary);
  if (!strides) throw IoError("cannot write strides file in " + dir.string());
  strides << io_detail::kStridesHeader << '\n';
  for (const auto& rec : recs) {
    if (rec.patient_id != id) throw ValidationError("write_patient: mixed patient ids");
    rec.validate();
    std::ofstream sig(dir / (id + "_" + to_string(rec.foot) + ".csv"), std::ios::binary);
    if (!sig) throw IoError("cannot write signal file in " + dir.string());
    sig << io_detail::kSignalHeader << '\n';
    for (std::size_t i = 0; i < rec.length(); ++i) {
      sig << text::format_double(static_cast<double>(i) / rec.sample_rate);
      for (std::size_t c = 0; c < kChannels; ++c) sig << ',' << rec.counts[c][i];
      sig << '\n';
    }
    if (!sig) throw IoError("write failed in " + dir.string());
    auto num = [](double v) { return std::isnan(v) ? std::string() : text::format_double(v); };
    for (const auto& s : rec.strides) {
      const auto& r = s.reference;
      strides << to_string(rec.foot) << ',' << s.start << ',' << s.end << ',' << num(r.stride_length_cm) << ','
              << num(r.stride_width_cm) << ',' << num(r.foot_angle_deg) << ',' << num(r.stride_time_s) << ','
              << num(r.swing_time_s) << ',' << num(r.stance_time_s) << ',' << num(r.heel_contact_s) << ','
              << num(r.toe_contact_s) << '\n';
    }
  }
  if (!strides) throw IoError("write failed in " + dir.string());
}

}  // namespace gaitcnn
