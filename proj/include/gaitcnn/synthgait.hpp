#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gaitcnn/errors.hpp"
#include "gaitcnn/gaitio.hpp"
#include "gaitcnn/parallel.hpp"
#include "gaitcnn/rng.hpp"
#include "gaitcnn/strideprep.hpp"
#include "gaitcnn/targets.hpp"
#include "gaitcnn/text.hpp"

namespace gaitcnn {

/// Desired moments and support of a truncated distribution.
struct TruncatedSpec {
  double mean = 0.0;
  double std = 1.0;
  double min = -1.0;
  double max = 1.0;

  friend bool operator==(const TruncatedSpec&, const TruncatedSpec&) = default;
};

/// Normal(mu, sigma) restricted to [lo, hi], sampled by rejection.
struct TruncatedNormal {
  double mu = 0.0;
  double sigma = 1.0;
  double lo = -1.0;
  double hi = 1.0;

  static double pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
  static double cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

  [[nodiscard]] std::pair<double, double> moments() const {
    const double a = (lo - mu) / sigma, b = (hi - mu) / sigma;
    const double z = cdf(b) - cdf(a);
    const double d = (pdf(a) - pdf(b)) / z;
    const double mean = mu + sigma * d;
    const double var = sigma * sigma * (1.0 + (a * pdf(a) - b * pdf(b)) / z - d * d);
    return {mean, std::sqrt(var)};
  }

  /// Finds mu and sigma so that the truncated distribution has the requested
  /// mean and standard deviation on [min, max].
  static TruncatedNormal matching(const TruncatedSpec& s) {
    if (!(s.max > s.min) || !(s.std > 0.0) || s.mean <= s.min || s.mean >= s.max)
      throw ValidationError("truncated distribution needs min < mean < max and std > 0");
    if (s.std >= (s.max - s.min) / std::sqrt(12.0))
      throw ValidationError("requested std is not attainable by a truncated normal on this range");
    TruncatedNormal t{s.mean, s.std, s.min, s.max};
    for (int it = 0; it < 500; ++it) {
      const auto [m, sd] = t.moments();
      if (std::abs(m - s.mean) < 1e-12 * s.std && std::abs(sd - s.std) < 1e-12 * s.std) return t;
      t.mu += s.mean - m;
      t.sigma *= s.std / sd;
    }
    const auto [m, sd] = t.moments();
    if (std::abs(m - s.mean) > 1e-6 * s.std || std::abs(sd - s.std) > 1e-6 * s.std)
      throw ValidationError("truncated normal moment matching did not converge");
    return t;
  }

  template <class R>
  double operator()(R& rng) const {
    std::normal_distribution<double> n(mu, sigma);
    while (true) {
      const double x = n(rng);
      if (x >= lo && x <= hi) return x;
    }
  }
};

/// Pulse constants of the generator. Every spatial target is encoded as the
/// area of one raised-cosine pulse during swing; contact times as durations.
struct SynthSignal {
  double length_area = 0.15;      // ax swing pulse area per cm, g * samples
  double width_area = 0.15;       // ay swing pulse area per cm (signed), g * samples
  double angle_area = 30.0;       // gz swing pulse area per degree, deg/s * samples
  double swing_rate = 300.0;      // gy swing peak, deg/s
  double event_dip = 150.0;       // gy dip depth at TO and HS, deg/s
  std::size_t dip_half_width = 6;
  double gravity = 1.0;           // az baseline, g
  double hs_transient = 2.0;      // az impact at HS, g
  double to_transient = 1.0;      // az push-off at TO, g
  std::size_t transient_half_width = 3;
  double heel_rate = 60.0;        // gx peak over the heel-contact interval, deg/s
  double toe_accel = 0.4;         // az plateau over the toe-contact interval, g
  std::size_t min_swing_samples = 16;
  std::size_t lead_in = 30;       // rest samples before the first HS
  std::size_t tail = 30;          // rest samples after the last HS

  friend bool operator==(const SynthSignal&, const SynthSignal&) = default;
};

struct SynthProfile {
  TruncatedSpec stride_length{80.63, 23.23, 20.01, 129.81};
  TruncatedSpec stride_width{-1.44, 13.29, -37.52, 33.03};
  TruncatedSpec foot_angle{0.07, 3.49, -11.93, 15.86};
  TruncatedSpec stance_time{0.85, 0.16, 0.48, 1.65};
  TruncatedSpec swing_time{0.37, 0.08, 0.01, 1.05};
  TruncatedSpec heel_contact{0.64, 0.14, 0.16, 1.52};
  TruncatedSpec toe_contact{0.69, 0.17, 0.25, 1.57};
  double noise_std = 0.002;  // fraction of each sensor's full scale
  double amplitude = 1.0;    // multiplies every pulse; 0 leaves gravity only
  std::size_t patients = 99;
  std::size_t strides_per_patient = 12;
  std::uint64_t seed = 1;
  double sample_rate = kSampleRate;
  SynthSignal signal{};
  CalibConfig calib{};

  void validate() const {
    if (!(noise_std >= 0.0)) throw ValidationError("noise_std must be >= 0");
    if (!(amplitude >= 0.0)) throw ValidationError("amplitude must be >= 0");
    if (strides_per_patient < 1) throw ValidationError("strides_per_patient must be >= 1");
    if (!(sample_rate > 0.0)) throw ValidationError("sample rate must be positive");
    calib.validate();
    for (const auto* s : {&stride_length, &stride_width, &foot_angle, &stance_time, &swing_time, &heel_contact,
                          &toe_contact})
      (void)TruncatedNormal::matching(*s);
  }

  friend bool operator==(const SynthProfile&, const SynthProfile&) = default;
};

/// One generated gait cycle [heel_strike, next_heel_strike) and its parameters.
struct SynthCycle {
  std::size_t heel_strike = 0;
  std::size_t toe_off = 0;
  std::size_t next_heel_strike = 0;
  GaitTargets targets;
};

struct SynthWalk {
  RawRecording recording;
  Series physical;                 // pre-quantization signal in the sensor's own frame
  std::vector<SynthCycle> cycles;  // cycle k + 1 is described by annotation row k
  std::vector<GaitEvents> events;  // per annotated stride: TO and HS lying inside it
  double amplitude = 1.0;
  SynthSignal signal{};
  std::uint64_t provenance = 0;
};

namespace synth_detail {

inline constexpr const char* kTag = "gaitcnn-synthgait/1";

inline std::uint64_t provenance_hash(const SynthWalk& w) {
  std::uint64_t h = text::fnv1a64(kTag, std::char_traits<char>::length(kTag));
  h = text::fnv1a64(w.recording.patient_id.data(), w.recording.patient_id.size(), h);
  for (const auto& s : w.recording.strides) {
    h = text::fnv1a64(&s.start, sizeof s.start, h);
    h = text::fnv1a64(&s.end, sizeof s.end, h);
    h = text::fnv1a64(&s.reference, sizeof s.reference, h);
  }
  for (const auto& e : w.events) h = text::fnv1a64(&e, sizeof e, h);
  for (const auto& c : w.recording.counts) h = text::fnv1a64(c.data(), c.size() * sizeof(int), h);
  return h;
}

/// sin^2 pulse on the open interval (a, b), scaled so its samples sum to `area`.
inline void add_area_pulse(std::span<double> ch, std::size_t a, std::size_t b, double area) {
  if (b <= a + 1 || area == 0.0) return;
  const double n = static_cast<double>(b - a);
  double sum = 0.0;
  for (std::size_t t = a + 1; t < b; ++t) sum += std::pow(std::sin(std::numbers::pi * static_cast<double>(t - a) / n), 2);
  for (std::size_t t = a + 1; t < b; ++t)
    ch[t] += area / sum * std::pow(std::sin(std::numbers::pi * static_cast<double>(t - a) / n), 2);
}

/// sin^2 pulse with the given peak on the open interval (a, b).
inline void add_peak_pulse(std::span<double> ch, std::size_t a, std::size_t b, double peak) {
  if (b <= a + 1) return;
  const double n = static_cast<double>(b - a);
  for (std::size_t t = a + 1; t < b; ++t) ch[t] += peak * std::pow(std::sin(std::numbers::pi * static_cast<double>(t - a) / n), 2);
}

/// cos^2 bump of height `peak` centred on c, zero from `half` samples away.
inline void add_bump(std::span<double> ch, std::size_t c, std::size_t half, double peak) {
  const std::size_t lo = c >= half ? c - half + 1 : 0;
  const std::size_t hi = std::min(ch.size(), c + half);
  for (std::size_t t = lo; t < hi; ++t) {
    const double x = (static_cast<double>(t) - static_cast<double>(c)) / static_cast<double>(half);
    ch[t] += peak * std::pow(std::cos(0.5 * std::numbers::pi * x), 2);
  }
}

struct Draws {
  TruncatedNormal length, width, angle, stance, swing, heel, toe;
  explicit Draws(const SynthProfile& p)
      : length(TruncatedNormal::matching(p.stride_length)),
        width(TruncatedNormal::matching(p.stride_width)),
        angle(TruncatedNormal::matching(p.foot_angle)),
        stance(TruncatedNormal::matching(p.stance_time)),
        swing(TruncatedNormal::matching(p.swing_time)),
        heel(TruncatedNormal::matching(p.heel_contact)),
        toe(TruncatedNormal::matching(p.toe_contact)) {}
};

struct CycleDraw {
  double length, width, angle;
  std::size_t stance, swing, heel, toe;  // samples
};

/// Temporal draws are quantized to samples and re-drawn until the cycle fits
/// the 256-sample input, leaves room for the swing pulse, and both contact
/// intervals lie inside stance.
inline CycleDraw draw_cycle(const Draws& d, const SynthProfile& p, Rng& rng) {
  CycleDraw c{};
  c.length = d.length(rng);
  c.width = d.width(rng);
  c.angle = d.angle(rng);
  auto samples = [&](double seconds) { return static_cast<std::size_t>(std::lround(seconds * p.sample_rate)); };
  do {
    c.stance = samples(d.stance(rng));
    c.swing = samples(d.swing(rng));
  } while (c.swing < p.signal.min_swing_samples || c.stance + c.swing > kStrideLength ||
           c.stance < 2 * p.signal.dip_half_width);
  do {
    c.heel = samples(d.heel(rng));
  } while (c.heel < 1 || c.heel > c.stance);
  do {
    c.toe = samples(d.toe(rng));
  } while (c.toe < 1 || c.toe > c.stance);
  return c;
}

}  // namespace synth_detail

/// Generates one walk of `strides_per_patient` annotated strides. Annotation
/// borders sit at mid-stance, so row k spans TO_k and HS_{k+1}; its reference
/// describes the HS->HS cycle starting at HS_{k+1}.
inline SynthWalk generate_walk(const SynthProfile& profile, std::uint64_t patient_seed, const std::string& patient_id,
                               Foot foot = Foot::right) {
  profile.validate();
  const auto& sig = profile.signal;
  const synth_detail::Draws dists(profile);
  Rng rng = make_rng(patient_seed);
  const std::size_t n_strides = profile.strides_per_patient;
  const double period = 1.0 / profile.sample_rate;

  SynthWalk w;
  w.amplitude = profile.amplitude;
  w.signal = sig;
  std::size_t hs = sig.lead_in;
  for (std::size_t j = 0; j <= n_strides; ++j) {
    const auto d = synth_detail::draw_cycle(dists, profile, rng);
    SynthCycle c;
    c.heel_strike = hs;
    c.toe_off = hs + d.stance;
    c.next_heel_strike = c.toe_off + d.swing;
    const auto tp = compute_temporal_params(c.heel_strike, c.toe_off, c.next_heel_strike, profile.sample_rate);
    c.targets.stride_length_cm = d.length;
    c.targets.stride_width_cm = d.width;
    c.targets.foot_angle_deg = d.angle;
    c.targets.stride_time_s = tp.stride_time_s;
    c.targets.stance_time_s = tp.stance_time_s;
    c.targets.swing_time_s = tp.swing_time_s;
    c.targets.heel_contact_s = static_cast<double>(d.heel) * period;
    c.targets.toe_contact_s = static_cast<double>(d.toe) * period;
    w.cycles.push_back(c);
    hs = c.next_heel_strike;
  }
  const std::size_t n = hs + sig.tail;

  Series s(kChannels, n);
  const double a = profile.amplitude;
  for (double& v : s.channel(Channel::az)) v = sig.gravity;
  std::vector<std::size_t> heel_strikes;
  for (const auto& c : w.cycles) {
    const auto& t = c.targets;
    const std::size_t heel = static_cast<std::size_t>(std::lround(t.heel_contact_s * profile.sample_rate));
    const std::size_t toe = static_cast<std::size_t>(std::lround(t.toe_contact_s * profile.sample_rate));
    synth_detail::add_area_pulse(s.channel(Channel::ax), c.toe_off, c.next_heel_strike, a * sig.length_area * t.stride_length_cm);
    synth_detail::add_area_pulse(s.channel(Channel::ay), c.toe_off, c.next_heel_strike, a * sig.width_area * t.stride_width_cm);
    synth_detail::add_area_pulse(s.channel(Channel::gz), c.toe_off, c.next_heel_strike, a * sig.angle_area * t.foot_angle_deg);
    synth_detail::add_peak_pulse(s.channel(Channel::gy), c.toe_off, c.next_heel_strike, a * sig.swing_rate);
    synth_detail::add_bump(s.channel(Channel::gy), c.toe_off, sig.dip_half_width, -a * sig.event_dip);
    synth_detail::add_bump(s.channel(Channel::az), c.toe_off, sig.transient_half_width, a * sig.to_transient);
    synth_detail::add_peak_pulse(s.channel(Channel::gx), c.heel_strike - 1, c.heel_strike + heel, a * sig.heel_rate);
    for (std::size_t i = c.toe_off - toe; i < c.toe_off; ++i) s.at(Channel::az, i) += a * sig.toe_accel;
    heel_strikes.push_back(c.heel_strike);
  }
  heel_strikes.push_back(w.cycles.back().next_heel_strike);
  for (std::size_t h : heel_strikes) {
    synth_detail::add_bump(s.channel(Channel::gy), h, sig.dip_half_width, -a * sig.event_dip);
    synth_detail::add_bump(s.channel(Channel::az), h, sig.transient_half_width, a * sig.hs_transient);
  }
  if (profile.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t c = 0; c < kChannels; ++c) {
      const double sd = profile.noise_std * profile.calib.range(c);
      for (double& v : s.channel(c)) v += sd * noise(rng);
    }
  }
  if (foot == Foot::left) s = align_axes(s, Foot::left, profile.calib);

  auto mid_stance = [](const SynthCycle& c) { return c.heel_strike + (c.toe_off - c.heel_strike) / 2; };
  w.recording.patient_id = patient_id;
  w.recording.foot = foot;
  w.recording.sample_rate = profile.sample_rate;
  w.recording.counts = decalibrate(s, profile.calib);
  for (std::size_t k = 0; k < n_strides; ++k) {
    StrideAnnotation ann;
    ann.start = mid_stance(w.cycles[k]);
    ann.end = mid_stance(w.cycles[k + 1]);
    ann.reference = w.cycles[k + 1].targets;
    ann.row = k;
    w.recording.strides.push_back(ann);
    w.events.push_back({w.cycles[k].next_heel_strike, w.cycles[k].toe_off});
  }
  w.physical = std::move(s);
  w.provenance = synth_detail::provenance_hash(w);
  return w;
}

/// The same walk recorded on the right and on the left foot: identical draws
/// and noise, the left copy mirrored into its own sensor frame.
inline std::pair<SynthWalk, SynthWalk> generate_mirrored_pair(const SynthProfile& profile, std::uint64_t patient_seed,
                                                              const std::string& patient_id) {
  return {generate_walk(profile, patient_seed, patient_id, Foot::right),
          generate_walk(profile, patient_seed, patient_id, Foot::left)};
}

/// The embedded reference of every annotated stride, without signal analysis.
inline std::vector<GaitTargets> oracle_targets(const SynthWalk& walk) {
  if (walk.provenance == 0 || synth_detail::provenance_hash(walk) != walk.provenance)
    throw ValidationError("walk " + walk.recording.patient_id + " was not produced by the generator or was modified");
  std::vector<GaitTargets> out;
  for (const auto& s : walk.recording.strides) out.push_back(s.reference);
  return out;
}

/// Recovers the spatial targets of annotation row k from the pulse areas of
/// the pre-quantization signal. Exact up to rounding for noiseless walks.
inline GaitTargets invert_spatial_maps(const SynthWalk& walk, std::size_t row) {
  if (row + 1 >= walk.cycles.size()) throw ValidationError("row out of range");
  if (!(walk.amplitude > 0.0)) throw ValidationError("zero-amplitude walk carries no spatial information");
  const auto& c = walk.cycles[row + 1];
  const Series s = align_axes(walk.physical, walk.recording.foot);
  auto area = [&](std::size_t ch) {
    double sum = 0.0;
    for (std::size_t t = c.toe_off + 1; t < c.next_heel_strike; ++t) sum += s.at(ch, t);
    return sum / walk.amplitude;
  };
  GaitTargets g = c.targets;
  g.stride_length_cm = area(Channel::ax) / walk.signal.length_area;
  g.stride_width_cm = area(Channel::ay) / walk.signal.width_area;
  g.foot_angle_deg = area(Channel::gz) / walk.signal.angle_area;
  return g;
}

inline std::string synth_patient_id(std::size_t i) {
  std::string n = std::to_string(i + 1);
  return "S" + std::string(n.size() < 3 ? 3 - n.size() : 0, '0') + n;
}

/// Patient i gets id S<i+1>, seed path (profile.seed, i), and alternates
/// right (even i) and left (odd i) foot.
inline std::vector<SynthWalk> generate_dataset(const SynthProfile& profile, std::size_t jobs = 1) {
  profile.validate();
  std::vector<SynthWalk> walks(profile.patients);
  parallel_for(profile.patients, jobs, [&](std::size_t i) {
    Rng seeder = make_rng(profile.seed, {i});
    walks[i] = generate_walk(profile, seeder(), synth_patient_id(i), i % 2 == 0 ? Foot::right : Foot::left);
  });
  return walks;
}

inline void write_synth_dataset(const std::filesystem::path& root, const std::vector<SynthWalk>& walks) {
  for (const auto& w : walks) write_patient(root, {w.recording});
}

}  // namespace gaitcnn
