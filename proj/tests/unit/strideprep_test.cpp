#include "test_util.hpp"

using namespace gaitcnn;

namespace {

Series slice(const Series& s, std::size_t start, std::size_t end) {
  Series out(s.channels(), end - start);
  for (std::size_t c = 0; c < s.channels(); ++c)
    std::copy_n(s.channel(c).begin() + static_cast<std::ptrdiff_t>(start), end - start, out.channel(c).begin());
  return out;
}

Series aligned_signal(const SynthWalk& w) { return align_axes(calibrate(w.recording), w.recording.foot); }

StrideAnnotation ann(std::size_t start, std::size_t end, std::size_t row) {
  StrideAnnotation a;
  a.start = start;
  a.end = end;
  a.row = row;
  return a;
}

}  // namespace

TEST(DetectEvents, MatchesGeneratorGroundTruth) {
  std::size_t n = 0, exact = 0;
  for (const auto& w : generate_dataset(testutil::small_profile(10, 12, 4))) {
    const auto sig = aligned_signal(w);
    for (std::size_t k = 0; k < w.recording.strides.size(); ++k) {
      const auto& s = w.recording.strides[k];
      const auto e = detect_events(slice(sig, s.start, s.end), kSampleRate, s.start);
      const auto& truth = w.events[k];
      EXPECT_NEAR(static_cast<double>(e.heel_strike), static_cast<double>(truth.heel_strike), 2.0);
      EXPECT_NEAR(static_cast<double>(e.toe_off), static_cast<double>(truth.toe_off), 2.0);
      exact += (e == truth) ? 1 : 0;
      ++n;
    }
  }
  EXPECT_EQ(n, 120u);
  EXPECT_GT(exact, n * 9 / 10);
}

TEST(DetectEvents, HeelStrikeAtKnownIndex) {
  // Find a generated stride whose heel strike sits 118 samples after the stride start.
  SynthProfile p = testutil::small_profile(1, 12, 1);
  for (std::uint64_t seed = 1; seed < 400; ++seed) {
    const auto w = generate_walk(p, seed, "P");
    for (std::size_t k = 0; k < w.recording.strides.size(); ++k) {
      const auto& s = w.recording.strides[k];
      if (w.events[k].heel_strike - s.start != 118) continue;
      const auto e = detect_events(slice(aligned_signal(w), s.start, s.end), kSampleRate);
      EXPECT_NEAR(static_cast<double>(e.heel_strike), 118.0, 2.0);
      return;
    }
  }
  FAIL() << "no stride with heel strike at 118 generated";
}

TEST(DetectEvents, FlatSignalRaises) {
  EXPECT_THROW(detect_events(Series(6, 128), kSampleRate), DetectionError);
}

TEST(DetectEvents, ShiftEquivariant) {
  const auto w = generate_walk(testutil::small_profile(1, 4), 9, "P");
  const auto sig = aligned_signal(w);
  const auto& s = w.recording.strides[1];
  const auto a = detect_events(slice(sig, s.start, s.end), kSampleRate);
  const auto b = detect_events(slice(sig, s.start - 5, s.end - 5), kSampleRate);
  EXPECT_EQ(b.heel_strike, a.heel_strike + 5);
  EXPECT_EQ(b.toe_off, a.toe_off + 5);
  const auto c = detect_events(slice(sig, s.start, s.end), kSampleRate, s.start);
  EXPECT_EQ(c.heel_strike, a.heel_strike + s.start);
}

TEST(Resegment, FourStridesGiveThreeSegments) {
  const std::vector<StrideAnnotation> strides{ann(0, 100, 0), ann(100, 210, 1), ann(210, 330, 2), ann(330, 440, 3)};
  const std::vector<GaitEvents> ev{{60, 20}, {170, 125}, {290, 240}, {400, 350}};
  const auto segs = resegment_hs_to_hs(strides, ev);
  ASSERT_EQ(segs.size(), 3u);
  EXPECT_EQ(segs[0], (Segment{60, 170, 125, 0}));
  EXPECT_EQ(segs[1], (Segment{170, 290, 240, 1}));
  EXPECT_EQ(segs[2], (Segment{290, 400, 350, 2}));
  for (std::size_t k = 0; k + 1 < segs.size(); ++k) EXPECT_EQ(segs[k].end, segs[k + 1].start);
}

TEST(Resegment, RejectsNonConsecutiveStrides) {
  const std::vector<StrideAnnotation> strides{ann(0, 100, 0), ann(120, 210, 1)};
  EXPECT_THROW(resegment_hs_to_hs(strides, {{60, 20}, {170, 130}}), ValidationError);
}

TEST(Resegment, RejectsEventsOutsideStride) {
  const std::vector<StrideAnnotation> strides{ann(0, 100, 0), ann(100, 210, 1)};
  EXPECT_THROW(resegment_hs_to_hs(strides, {{60, 20}, {230, 130}}), ValidationError);
}

TEST(Resegment, UsableStridesAreStridesMinusWalks) {
  PrepareReport rep;
  const auto strides = testutil::synth_strides(testutil::small_profile(6, 9, 12), &rep);
  EXPECT_EQ(rep.annotated, 54u);
  EXPECT_EQ(rep.walks, 6u);
  EXPECT_EQ(strides.size(), 54u - 6u);
  EXPECT_EQ(rep.usable, strides.size());
}

TEST(Resegment, GapSplitsIntoTwoWalks) {
  auto w = generate_walk(testutil::small_profile(1, 8), 5, "P");
  w.recording.strides.erase(w.recording.strides.begin() + 4);
  PrepareReport rep;
  const auto out = prepare_recording(w.recording, {}, &rep);
  EXPECT_EQ(rep.walks, 2u);
  EXPECT_EQ(out.size(), 7u - 2u);
}

TEST(Resegment, SegmentCarriesNextCycleReference) {
  const auto w = generate_walk(testutil::small_profile(1, 6), 8, "P");
  const auto out = prepare_recording(w.recording);
  ASSERT_EQ(out.size(), 5u);
  for (const auto& p : out) {
    const std::size_t k = p.stride_id();
    // the segment is the cycle annotated on row k
    EXPECT_EQ(p.segment.start, w.cycles[k + 1].heel_strike);
    EXPECT_EQ(p.segment.end, w.cycles[k + 1].next_heel_strike);
    EXPECT_EQ(p.reference, w.recording.strides[k].reference);
    EXPECT_EQ(p.temporal.stride_time_s, p.reference.stride_time_s);
  }
}

TEST(PadStride, AppendsZeros) {
  std::mt19937_64 rng(1);
  const auto seg = testutil::random_series(6, 126, rng);
  const auto t = pad_stride(seg, "P", 3);
  EXPECT_EQ(t.original_length, 126u);
  EXPECT_EQ(t.values.length(), 256u);
  for (std::size_t c = 0; c < 6; ++c) {
    for (std::size_t i = 0; i < 126; ++i) ASSERT_EQ(t.values.at(c, i), seg.at(c, i));
    for (std::size_t i = 126; i < 256; ++i) ASSERT_EQ(t.values.at(c, i), 0.0);
  }
}

TEST(PadStride, FullLengthUnchanged) {
  std::mt19937_64 rng(2);
  const auto seg = testutil::random_series(6, 256, rng);
  EXPECT_EQ(pad_stride(seg).values.data(), seg.data());
}

TEST(PadStride, OverlongRejectedWithId) {
  try {
    pad_stride(Series(6, 300), "P007", 12);
    FAIL();
  } catch (const StrideRejected& e) {
    EXPECT_NE(std::string(e.what()).find("stride 12 of P007"), std::string::npos) << e.what();
  }
}

TEST(TemporalParams, HandArithmetic) {
  const auto p = compute_temporal_params(0, 87, 126, 102.4);
  EXPECT_NEAR(p.stride_time_s, 1.2305, 5e-5);
  EXPECT_NEAR(p.stance_time_s, 0.8496, 5e-5);
  EXPECT_NEAR(p.swing_time_s, 0.3809, 5e-5);
  EXPECT_EQ(p.stance_time_s, 87.0 / 102.4);
}

TEST(TemporalParams, DegenerateAndIdentity) {
  EXPECT_EQ(compute_temporal_params(10, 10, 50).stance_time_s, 0.0);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> d(0, 200);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t hs = d(rng), to = hs + d(rng), next = to + 1 + d(rng);
    const auto p = compute_temporal_params(hs, to, next);
    ASSERT_EQ(p.stride_time_s, p.stance_time_s + p.swing_time_s);
  }
  EXPECT_THROW(compute_temporal_params(10, 5, 50), ValidationError);
  EXPECT_THROW(compute_temporal_params(10, 60, 50), ValidationError);
}

TEST(Prepare, TensorsHonourPaddingInvariant) {
  for (const auto& p : testutil::synth_strides(testutil::small_profile(4, 8, 2))) {
    EXPECT_EQ(p.tensor.original_length, p.segment.length());
    for (std::size_t c = 0; c < 6; ++c)
      for (std::size_t i = 0; i < 256; ++i) {
        const double v = p.tensor.values.at(c, i);
        ASSERT_LE(std::abs(v), 1.0);
        if (i >= p.tensor.original_length) {
          ASSERT_EQ(v, 0.0);
        }
      }
  }
}

TEST(Prepare, ZeroAmplitudeWalkFailsDetection) {
  SynthProfile p = testutil::small_profile(1, 4);
  p.amplitude = 0.0;
  testutil::CaptureLog log;
  PrepareReport rep;
  const auto out = prepare_recording(generate_walk(p, 1, "P").recording, {}, &rep);
  EXPECT_TRUE(out.empty());
  EXPECT_EQ(rep.detection_failures, 4u);
  EXPECT_EQ(rep.excluded.size(), 4u);
  EXPECT_GE(log.warnings, 4);
}

TEST(Prepare, Deterministic) {
  const auto a = testutil::synth_strides(testutil::small_profile(3, 5, 9));
  const auto b = testutil::synth_strides(testutil::small_profile(3, 5, 9));
  EXPECT_EQ(a, b);
}

TEST(Prepare, StrideCacheRoundTrip) {
  testutil::TempDir dir("cache");
  const auto a = testutil::synth_strides(testutil::small_profile(3, 5, 9));
  save_stride_cache(dir / "strides.gcnn", a, {{"source", "test"}});
  json prov;
  const auto b = load_stride_cache(dir / "strides.gcnn", &prov);
  EXPECT_EQ(a, b);
  EXPECT_EQ(prov.at("source"), "test");
  EXPECT_EQ(read_container(dir / "strides.gcnn").header.at("detection_method"), kDetectionMethod);
}
