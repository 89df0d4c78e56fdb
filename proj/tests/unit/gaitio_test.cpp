#include "test_util.hpp"

using namespace gaitcnn;
namespace fs = std::filesystem;

namespace {

RawRecording constant_recording(int count, std::size_t n = 4) {
  RawRecording r;
  r.patient_id = "P";
  for (auto& c : r.counts) c.assign(n, count);
  return r;
}

void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << s;
}

std::string signal_rows(std::size_t n) {
  std::string s = "t,ax,ay,az,gx,gy,gz\n";
  for (std::size_t i = 0; i < n; ++i) s += text::format_double(static_cast<double>(i) / kSampleRate) + ",2048,2048,2389,2048,2048,2048\n";
  return s;
}

const std::string kStridesHeader =
    "foot,start,end,stride_length_cm,stride_width_cm,foot_angle_deg,stride_time_s,swing_time_s,stance_time_s,"
    "heel_contact_s,toe_contact_s\n";

template <class F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Calibrate, OffsetCountIsZero) {
  const auto s = calibrate(constant_recording(2048));
  for (double v : s.values()) EXPECT_EQ(v, 0.0);
}

TEST(Calibrate, TopOfAccelerometerRange) {
  const auto s = calibrate(constant_recording(4095));
  // (4095 - 2048) / 341.25: the 12-bit code one below 2048 + 2048 sits just under +6 g
  EXPECT_DOUBLE_EQ(s.at(Channel::ax, 0), 2047.0 / 341.25);
  EXPECT_NEAR(s.at(Channel::ax, 0), 6.0, 0.0015);
  EXPECT_NEAR(s.at(Channel::gy, 0), 500.0, 0.25);
  EXPECT_DOUBLE_EQ(calibrate(constant_recording(0)).at(Channel::az, 0), -2048.0 / 341.25);
}

TEST(Calibrate, IsAffine) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> pick(1024, 3072);
  const CalibConfig cal;
  for (int rep = 0; rep < 200; ++rep) {
    const int a = pick(rng), b = pick(rng);
    const double ca = calibrate(constant_recording(a, 1)).at(Channel::gx, 0);
    const double cb = calibrate(constant_recording(b, 1)).at(Channel::gx, 0);
    const double co = calibrate(constant_recording(2048, 1)).at(Channel::gx, 0);
    const double cab = calibrate(constant_recording(a + b - 2048, 1)).at(Channel::gx, 0);
    EXPECT_NEAR(ca + cb - co, cab, 1e-12);
  }
}

TEST(Calibrate, DecalibrateInvertsOnCounts) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> pick(0, kCountMax);
  RawRecording r;
  for (auto& c : r.counts)
    for (int i = 0; i < 500; ++i) c.push_back(pick(rng));
  EXPECT_EQ(decalibrate(calibrate(r)), r.counts);
}

TEST(Calibrate, RejectsNonPositiveGain) {
  CalibConfig c;
  c.gain[2] = 0.0;
  EXPECT_THROW(calibrate(constant_recording(2048), c), ValidationError);
}

TEST(AlignAxes, RightFootUnchanged) {
  std::mt19937_64 rng(1);
  const auto s = testutil::random_series(6, 20, rng);
  EXPECT_EQ(align_axes(s, Foot::right).data(), s.data());
}

TEST(AlignAxes, LeftMirrorIsInvolution) {
  std::mt19937_64 rng(2);
  const auto s = testutil::random_series(6, 20, rng);
  const auto once = align_axes(s, Foot::left);
  EXPECT_EQ(align_axes(once, Foot::left).data(), s.data());
  for (std::size_t c = 0; c < kChannels; ++c) {
    const bool flipped = c == Channel::ay || c == Channel::gx || c == Channel::gz;
    EXPECT_EQ(once.at(c, 3), flipped ? -s.at(c, 3) : s.at(c, 3)) << kChannelNames[c];
  }
}

TEST(AlignAxes, MirrorIsConfigurable) {
  std::mt19937_64 rng(2);
  const auto s = testutil::random_series(6, 8, rng);
  CalibConfig c;
  c.left_mirror = {true, false, false, false, false, false};
  const auto a = align_axes(s, Foot::left, c);
  EXPECT_EQ(a.at(Channel::ax, 0), -s.at(Channel::ax, 0));
  EXPECT_EQ(a.at(Channel::ay, 0), s.at(Channel::ay, 0));
}

TEST(AlignAxes, MirroredSyntheticPairAlignsExactly) {
  const auto [right, left] = generate_mirrored_pair(SynthProfile{}, 77, "P001");
  const auto r = align_axes(calibrate(right.recording), Foot::right);
  const auto l = align_axes(calibrate(left.recording), Foot::left);
  EXPECT_EQ(r.data(), l.data());
  EXPECT_NE(right.recording.counts, left.recording.counts);
}

TEST(Normalize, SensorRangeEndpoints) {
  Series s(6, 2);
  s.at(Channel::ax, 0) = 6.0;
  s.at(Channel::gy, 0) = -250.0;
  s.at(Channel::az, 1) = -3.0;
  const auto n = normalize_ranges(s);
  EXPECT_EQ(n.at(Channel::ax, 0), 1.0);
  EXPECT_EQ(n.at(Channel::gy, 0), -0.5);
  EXPECT_EQ(n.at(Channel::az, 1), -0.5);
}

TEST(Normalize, ClampsWithWarning) {
  testutil::CaptureLog log;
  Series s(6, 3);
  s.at(Channel::gx, 1) = 612.0;
  s.at(Channel::ay, 2) = -7.5;
  std::size_t clamped = 0;
  const auto n = normalize_ranges(s, {}, &clamped, "P1/right");
  EXPECT_EQ(n.at(Channel::gx, 1), 1.0);
  EXPECT_EQ(n.at(Channel::ay, 2), -1.0);
  EXPECT_EQ(clamped, 2u);
  EXPECT_EQ(log.warnings, 1);
  EXPECT_NE(log.messages.at(0).find("P1/right"), std::string::npos);
}

TEST(Normalize, FixtureValuesInUnitRangeAndShapePreserved) {
  for (const auto& w : generate_dataset(testutil::small_profile(4, 6, 3))) {
    const auto phys = align_axes(calibrate(w.recording), w.recording.foot);
    const auto n = normalize_ranges(phys);
    for (double v : n.values()) ASSERT_LE(std::abs(v), 1.0);
    for (std::size_t c = 0; c < kChannels; ++c) {
      const auto a = phys.channel(c), b = n.channel(c);
      EXPECT_EQ(std::max_element(a.begin(), a.end()) - a.begin(), std::max_element(b.begin(), b.end()) - b.begin());
      for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i] > 0.0, b[i] > 0.0);
    }
  }
}

TEST(LoadDataset, EmptyDirectoryWarns) {
  testutil::TempDir dir("empty");
  testutil::CaptureLog log;
  LoadReport rep;
  EXPECT_TRUE(load_dataset(dir.path(), &rep).empty());
  EXPECT_EQ(log.warnings, 1);
  EXPECT_EQ(rep.patients, 0u);
}

TEST(LoadDataset, MissingRootIsIoError) {
  EXPECT_THROW(load_dataset("/nonexistent/gaitcnn/data"), IoError);
}

TEST(LoadDataset, ThreePatientFixture) {
  testutil::TempDir dir("three");
  const auto walks = generate_dataset(testutil::small_profile(3, 5, 11));
  write_synth_dataset(dir.path(), walks);
  LoadReport rep;
  const auto recs = load_dataset(dir.path(), &rep);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(rep.patients, 3u);
  EXPECT_EQ(rep.strides, 15u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(recs[i].strides.size(), 5u);
    EXPECT_EQ(recs[i], walks[i].recording);
  }
}

TEST(LoadDataset, BenchmarkScaleFixture) {
  testutil::TempDir dir("bench");
  SynthProfile p = testutil::small_profile(99, 12, 5);
  std::size_t total = 0;
  for (std::size_t i = 0; i < 99; ++i) {
    SynthProfile pi = p;
    pi.strides_per_patient = i < 96 ? 12 : 11;
    write_patient(dir.path(), {generate_walk(pi, 1000 + i, synth_patient_id(i)).recording});
    total += pi.strides_per_patient;
  }
  EXPECT_EQ(total, 1185u);
  LoadReport rep;
  const auto recs = load_dataset(dir.path(), &rep);
  EXPECT_EQ(rep.patients, 99u);
  EXPECT_EQ(rep.strides, 1185u);
  EXPECT_EQ(recs.size(), 99u);
}

TEST(LoadDataset, OrderInsensitive) {
  testutil::TempDir a("ord_a"), b("ord_b");
  const auto walks = generate_dataset(testutil::small_profile(4, 3, 2));
  for (const auto& w : walks) write_patient(a.path(), {w.recording});
  for (auto it = walks.rbegin(); it != walks.rend(); ++it) write_patient(b.path(), {it->recording});
  write_text(b / "notes.txt", "x");
  LoadReport rb;
  EXPECT_EQ(load_dataset(a.path()), load_dataset(b.path(), &rb));
  ASSERT_EQ(rb.excluded_files.size(), 1u);
}

TEST(LoadDataset, BothFeetOfOnePatient) {
  testutil::TempDir dir("feet");
  auto [right, left] = generate_mirrored_pair(testutil::small_profile(1, 4), 3, "P001");
  for (auto& s : left.recording.strides) s.row += 4;
  write_patient(dir.path(), {right.recording, left.recording});
  const auto recs = load_dataset(dir.path());
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].foot, Foot::left);
  EXPECT_EQ(recs[0], left.recording);
  EXPECT_EQ(recs[1], right.recording);
}

TEST(LoadDataset, MalformedRowNamesFileAndLine) {
  testutil::TempDir dir("bad");
  write_text(dir / "P1/P1_right.csv", signal_rows(3) + "0.0293,2048,x,2048,2048,2048,2048\n");
  write_text(dir / "P1/P1_strides.csv", kStridesHeader);
  const auto msg = error_of([&] { load_dataset(dir.path()); });
  EXPECT_NE(msg.find("P1_right.csv:5:"), std::string::npos) << msg;
  EXPECT_THROW(load_dataset(dir.path()), FormatError);
}

TEST(LoadDataset, HeaderMismatch) {
  testutil::TempDir dir("hdr");
  write_text(dir / "P1/P1_right.csv", "t,ax,ay,az,gx,gy\n");
  write_text(dir / "P1/P1_strides.csv", kStridesHeader);
  const auto msg = error_of([&] { load_dataset(dir.path()); });
  EXPECT_NE(msg.find("P1_right.csv:1:"), std::string::npos) << msg;
}

TEST(LoadDataset, OverlappingStridesNameLine) {
  testutil::TempDir dir("overlap");
  write_text(dir / "P1/P1_right.csv", signal_rows(300));
  write_text(dir / "P1/P1_strides.csv", kStridesHeader + "right,0,120,80,0,0,1.2,0.4,0.8,0.6,0.7\n" +
                                            "right,100,230,80,0,0,1.2,0.4,0.8,0.6,0.7\n");
  const auto msg = error_of([&] { load_dataset(dir.path()); });
  EXPECT_NE(msg.find("P1_strides.csv:3:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("overlaps"), std::string::npos) << msg;
}

TEST(LoadDataset, OutOfRangeCount) {
  testutil::TempDir dir("range");
  write_text(dir / "P1/P1_right.csv", signal_rows(1) + "0.009765625,4096,2048,2048,2048,2048,2048\n");
  write_text(dir / "P1/P1_strides.csv", kStridesHeader);
  EXPECT_NE(error_of([&] { load_dataset(dir.path()); }).find("P1_right.csv:3:"), std::string::npos);
}

TEST(LoadDataset, AnnotatedFootWithoutSignal) {
  testutil::TempDir dir("nofoot");
  write_text(dir / "P1/P1_right.csv", signal_rows(300));
  write_text(dir / "P1/P1_strides.csv", kStridesHeader + "left,0,120,80,0,0,1.2,0.4,0.8,0.6,0.7\n");
  EXPECT_THROW(load_dataset(dir.path()), FormatError);
}

TEST(LoadDataset, ImplausibleReferenceWarnsOnly) {
  testutil::TempDir dir("soft");
  write_text(dir / "P1/P1_right.csv", signal_rows(300));
  write_text(dir / "P1/P1_strides.csv", kStridesHeader + "right,0,120,150,0,0,1.5,0.4,0.8,0.6,0.7\n");
  testutil::CaptureLog log;
  const auto recs = load_dataset(dir.path());
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(log.warnings, 1);
  EXPECT_NE(log.messages.at(0).find("P1_strides.csv:2:"), std::string::npos);
}

TEST(LoadDataset, EmptyReferenceFieldIsMissing) {
  testutil::TempDir dir("nan");
  write_text(dir / "P1/P1_right.csv", signal_rows(300));
  write_text(dir / "P1/P1_strides.csv", kStridesHeader + "right,0,120,,0,0,1.2,0.4,0.8,0.6,0.7\n");
  testutil::CaptureLog log;
  const auto recs = load_dataset(dir.path());
  EXPECT_TRUE(std::isnan(recs.at(0).strides.at(0).reference.stride_length_cm));
}

TEST(LoadPatient, SingleDirectory) {
  testutil::TempDir dir("one");
  const auto walks = generate_dataset(testutil::small_profile(2, 3, 2));
  write_synth_dataset(dir.path(), walks);
  const auto recs = load_patient(dir / "S002");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0], walks[1].recording);
  EXPECT_THROW(load_patient(dir / "S009"), IoError);
  fs::create_directories(dir / "S010");
  testutil::CaptureLog log;
  EXPECT_THROW(load_patient(dir / "S010"), ValidationError);
}
