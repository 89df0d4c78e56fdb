#include <sys/wait.h>

#include <fstream>

#include "test_util.hpp"

using namespace gaitcnn;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(const std::string& args, const std::string& env = "", const fs::path& scratch = fs::temp_directory_path()) {
  static int counter = 0;
  const auto tag = std::to_string(::getpid()) + "_" + std::to_string(counter++);
  const fs::path o = scratch / ("cli_out_" + tag), e = scratch / ("cli_err_" + tag);
  const std::string cmd = "env " + env + " " + GAITCNN_CLI + " " + args + " >" + o.string() + " 2>" + e.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testutil::slurp(o);
  r.err = testutil::slurp(e);
  fs::remove(o);
  fs::remove(e);
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

// Compares the dataset files; the run files echo the output path and are skipped.
bool same_tree(const fs::path& a, const fs::path& b) {
  auto files = [](const fs::path& root) {
    std::vector<fs::path> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      const auto rel = fs::relative(e.path(), root);
      if (e.is_regular_file() && rel != "manifest.json" && rel != "run_config.toml") out.push_back(rel);
    }
    return out;
  };
  auto fa = files(a), fb = files(b);
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) return false;
  for (const auto& f : fa)
    if (testutil::slurp(a / f) != testutil::slurp(b / f)) return false;
  return true;
}

// A small synthetic dataset and a Model B trained on it, shared by the tests.
struct Fixture {
  testutil::TempDir dir{"cli_fixture"};
  fs::path data = dir / "data";
  fs::path model = dir / "model";
  Fixture() {
    const auto s = run("synth --patients 6 --strides 5 --seed 4 --out " + q(data));
    if (s.code != 0) throw std::runtime_error("synth failed: " + s.err);
    const auto t = run("train --model B --iterations 20 --seed 4 --data " + q(data) + " --out " + q(model));
    if (t.code != 0) throw std::runtime_error("train failed: " + t.err);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST(Cli, HelpAndVersion) {
  EXPECT_EQ(run("--help").code, 0);
  const auto v = run("--version");
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find(kVersion), std::string::npos);
}

TEST(Cli, ParseErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("fly").code, 2);
  EXPECT_EQ(run("synth --bogus 1").code, 2);
  testutil::TempDir dir("cli_parse");
  const auto r = run("synth --set nope.key=1 --out " + q(dir / "x"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("unknown configuration key 'nope.key'"), std::string::npos) << r.err;
  EXPECT_EQ(run("synth --preset huge --out " + q(dir / "y")).code, 2);
}

TEST(Cli, ConfigFileRejectsUnknownKeys) {
  testutil::TempDir dir("cli_cfg");
  write(dir / "run.toml", "seed = 3\n[synth]\npatients = 2\nsizes = 4\n");
  const auto r = run("synth --config " + q(dir / "run.toml") + " --out " + q(dir / "out"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("run.toml:4: unknown configuration key 'synth.sizes'"), std::string::npos) << r.err;
}

TEST(Cli, ConfigEnvFlagPrecedence) {
  testutil::TempDir dir("cli_prec");
  write(dir / "run.toml", "[synth]\npatients = 2\nstrides = 3\n");
  const std::string cfg = "synth --config " + q(dir / "run.toml");
  const auto a = run(cfg + " --out " + q(dir / "a"));
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("wrote 2 patients, 6 annotated strides"), std::string::npos) << a.out;
  const auto b = run(cfg + " --out " + q(dir / "b"), "GAITCNN_SYNTH_PATIENTS=3 GAITCNN_NOT_A_KEY=1");
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_NE(b.out.find("wrote 3 patients"), std::string::npos) << b.out;
  const auto c = run(cfg + " --patients 4 --out " + q(dir / "c"), "GAITCNN_SYNTH_PATIENTS=3");
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_NE(c.out.find("wrote 4 patients"), std::string::npos) << c.out;
  const auto d = run(cfg + " --out " + q(dir / "d"), "GAITCNN_SYNTH_PATIENTS=many");
  EXPECT_EQ(d.code, 2);
  EXPECT_NE(d.err.find("GAITCNN_SYNTH_PATIENTS"), std::string::npos) << d.err;
}

TEST(Cli, RunDirectoryRecordsTheConfig) {
  const auto& f = fixture();
  RunConfig cfg;
  apply_config_file(cfg, f.model / "run_config.toml");
  EXPECT_EQ(cfg.seed, 4u);
  EXPECT_EQ(cfg.model, ModelKind::B);
  EXPECT_EQ(cfg.train_config().iterations, 20u);
  EXPECT_EQ(cfg.data, f.data.string());
  const auto manifest = json::parse(testutil::slurp(f.model / "manifest.json"));
  EXPECT_EQ(manifest.at("command"), "train");
  EXPECT_EQ(manifest.at("seed"), 4);
  EXPECT_EQ(manifest.at("formats").at("detection_method"), kDetectionMethod);
  EXPECT_EQ(manifest.at("config").at("train.iterations"), "20");
}

TEST(CliSynth, CountsStrides) {
  const auto& f = fixture();
  const auto recs = load_dataset(f.data);
  ASSERT_EQ(recs.size(), 6u);
  std::size_t n = 0;
  for (const auto& r : recs) n += r.strides.size();
  EXPECT_EQ(n, 30u);
  testutil::TempDir dir("cli_synth");
  const auto r = run("synth --patients 3 --strides 5 --out " + q(dir / "s"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("wrote 3 patients, 15 annotated strides"), std::string::npos) << r.out;
}

TEST(CliSynth, DefaultProfileHasNinetyNinePatients) {
  testutil::TempDir dir("cli_default");
  const auto r = run("synth --out " + q(dir / "s"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("wrote 99 patients, 1188 annotated strides"), std::string::npos) << r.out;
  std::size_t dirs = 0;
  for (const auto& e : fs::directory_iterator(dir / "s")) dirs += e.is_directory();
  EXPECT_EQ(dirs, 99u);
}

TEST(CliSynth, SameSeedByteIdentical) {
  testutil::TempDir dir("cli_bytes");
  for (const char* sub : {"a", "b"})
    ASSERT_EQ(run("synth --patients 3 --strides 4 --seed 12 --out " + q(dir / sub)).code, 0);
  ASSERT_EQ(run("synth --patients 3 --strides 4 --seed 13 --out " + q(dir / "c")).code, 0);
  EXPECT_TRUE(same_tree(dir / "a", dir / "b"));
  EXPECT_FALSE(same_tree(dir / "a", dir / "c"));
  auto ma = json::parse(testutil::slurp(dir / "a" / "manifest.json"));
  auto mb = json::parse(testutil::slurp(dir / "b" / "manifest.json"));
  ma["config"].erase("out");
  mb["config"].erase("out");
  EXPECT_EQ(ma, mb);
}

TEST(CliSynth, RefusesNonEmptyOutput) {
  testutil::TempDir dir("cli_force");
  ASSERT_EQ(run("synth --patients 2 --strides 3 --out " + q(dir / "s")).code, 0);
  const auto again = run("synth --patients 2 --strides 3 --out " + q(dir / "s"));
  EXPECT_EQ(again.code, 2);
  EXPECT_NE(again.err.find("--force"), std::string::npos) << again.err;
  EXPECT_EQ(run("synth --patients 2 --strides 3 --force --out " + q(dir / "s")).code, 0);
  // a foreign directory is never cleared
  fs::create_directories(dir / "mine");
  write(dir / "mine" / "notes.txt", "keep");
  EXPECT_EQ(run("synth --patients 2 --strides 3 --force --out " + q(dir / "mine")).code, 2);
  EXPECT_TRUE(fs::exists(dir / "mine" / "notes.txt"));
}

TEST(CliTrain, ModelBWritesFiveCheckpoints) {
  const auto& f = fixture();
  const auto paths = find_checkpoints(f.model);
  ASSERT_EQ(paths.size(), 5u);
  for (auto t : kCnnTargets) EXPECT_TRUE(fs::exists(f.model / checkpoint_filename(ModelKind::B, t)));
  for (auto t : kCnnTargets) EXPECT_TRUE(fs::exists(f.model / ("loss_B_" + std::string(name(t)) + ".csv")));
  const auto ck = load_checkpoint(paths.front());
  EXPECT_EQ(ck.preset, Preset::desk);
  EXPECT_EQ(ck.architecture, architecture_for(ModelKind::B, Preset::desk));
  EXPECT_EQ(ck.train_config.iterations, 20u);
  EXPECT_EQ(ck.train_config.batch_size, 32u);
  EXPECT_EQ(ck.metadata.at("seed"), 4);
}

TEST(CliTrain, PresetsResolveTrainingConfig) {
  RunConfig cfg;
  set_config_value(cfg, "preset", {"paper"});
  EXPECT_EQ(cfg.train_config().iterations, 4000u);
  EXPECT_EQ(cfg.train_config().batch_size, 100u);
  EXPECT_NE(to_toml(cfg).find("iterations = 4000"), std::string::npos);
  EXPECT_NE(to_toml(cfg).find("batch_size = 100"), std::string::npos);
  set_config_value(cfg, "preset", {"desk"});
  EXPECT_EQ(cfg.train_config().iterations, 500u);
  EXPECT_EQ(cfg.train_config().batch_size, 32u);
  // what a paper-preset training would store in its checkpoint header
  const auto j = to_json(train_config_for(Preset::paper));
  EXPECT_EQ(j.at("iterations"), 4000);
  EXPECT_EQ(j.at("batch_size"), 100);
}

TEST(CliTrain, MissingDataIsAnIoError) {
  testutil::TempDir dir("cli_missing");
  EXPECT_EQ(run("train --data " + q(dir / "nowhere") + " --out " + q(dir / "m")).code, 4);
}

TEST(CliTrain, DivergenceExitsThree) {
  const auto& f = fixture();
  testutil::TempDir dir("cli_diverge");
  const auto r = run("train --iterations 30 --set adam.alpha=1e300 --data " + q(f.data) + " --out " + q(dir / "m"));
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_NE(r.err.find("training failed"), std::string::npos) << r.err;
}

TEST(CliPredict, EightColumnsPerStride) {
  const auto& f = fixture();
  testutil::TempDir dir("cli_predict");
  const auto r = run("predict --checkpoint " + q(f.model) + " --input " + q(f.data / "S001") + " --out " + q(dir / "p"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = testutil::slurp(dir / "p" / "predictions.csv");
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line,
            "patient_id,foot,stride_id,status,stride_length,stride_width,foot_angle,heel_contact_time,toe_contact_time,"
            "stride_time,swing_time,stance_time");
  std::size_t rows = 0, ok = 0;
  while (std::getline(in, line)) {
    ++rows;
    if (line.find(",ok,") == std::string::npos) continue;
    ++ok;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 11) << line;
    EXPECT_EQ(line.find(",,"), std::string::npos) << line;
  }
  EXPECT_EQ(rows, 5u);
  EXPECT_EQ(ok, 4u);  // the last row has no following heel strike
}

TEST(CliPredict, MatchesLibraryPredict) {
  const auto& f = fixture();
  testutil::TempDir dir("cli_lib");
  ASSERT_EQ(run("predict -c " + q(f.model) + " -i " + q(f.data) + " --out " + q(dir / "p")).code, 0);
  const auto model = load_model(find_checkpoints(f.model));
  const auto rows = predict_recordings(model, load_dataset(f.data));
  EXPECT_EQ(testutil::slurp(dir / "p" / "predictions.csv"), predictions_table_csv(rows));
}

TEST(CliPredict, OverlongStrideFlaggedOthersProcessed) {
  const auto& f = fixture();
  testutil::TempDir dir("cli_long");
  // stretch the stance of the cycle carried by row 1 with 200 rest samples
  auto rec = load_patient(f.data / "S001").front();
  const std::size_t at = rec.strides[1].end;
  for (auto& ch : rec.counts) ch.insert(ch.begin() + static_cast<std::ptrdiff_t>(at), 200, ch[at]);
  rec.strides[1].end += 200;
  for (std::size_t k = 2; k < rec.strides.size(); ++k) {
    rec.strides[k].start += 200;
    rec.strides[k].end += 200;
  }
  write_patient(dir / "walk", {rec});
  const auto r = run("predict -c " + q(f.model) + " -i " + q(dir / "walk" / "S001") + " --out " + q(dir / "p"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("3 of 5 strides predicted"), std::string::npos) << r.out;
  EXPECT_NE(r.err.find("row 1: stride 1 of S001 has"), std::string::npos) << r.err;
  const auto csv = testutil::slurp(dir / "p" / "predictions.csv");
  EXPECT_NE(csv.find("S001,right,1,\"stride 1 of S001 has"), std::string::npos) << csv;
  EXPECT_NE(csv.find("S001,right,2,ok,"), std::string::npos) << csv;
}

TEST(CliPredict, CorruptCheckpointIsAnIoError) {
  const auto& f = fixture();
  testutil::TempDir dir("cli_corrupt");
  const fs::path ck = dir / "model_A.gcnn";
  fs::copy_file(find_checkpoints(f.model).front(), ck);
  {
    std::fstream io(ck, std::ios::in | std::ios::out | std::ios::binary);
    io.seekp(-20, std::ios::end);
    io.put('\x7f');
  }
  const auto r = run("predict -c " + q(ck) + " -i " + q(f.data) + " --out " + q(dir / "p"));
  EXPECT_EQ(r.code, 4) << r.err;
  EXPECT_NE(r.err.find("model_A.gcnn"), std::string::npos) << r.err;
}

TEST(CliCrossval, CompareGivesFiveVerdictsAndReproduces) {
  const auto& f = fixture();
  testutil::TempDir dir("cli_cv");
  const std::string base = "crossval --compare A B --folds 3 --iterations 6 --batch-size 8 --seed 2 --data " + q(f.data);
  const auto a = run(base + " --out " + q(dir / "a"));
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("Levene-test"), std::string::npos) << a.out;
  const auto cmp = testutil::slurp(dir / "a" / "comparisons.csv");
  EXPECT_EQ(std::count(cmp.begin(), cmp.end(), '\n'), 6);
  std::size_t verdicts = 0;
  for (const std::string v : {",sign.\n", ",n.s.\n"})
    for (auto pos = cmp.find(v); pos != std::string::npos; pos = cmp.find(v, pos + 1)) ++verdicts;
  EXPECT_EQ(verdicts, 5u);
  const auto report = read_report(dir / "a" / "report.json");
  ASSERT_EQ(report.models.size(), 2u);
  EXPECT_EQ(report.models[0].targets.size(), 8u);
  EXPECT_EQ(report.models[0].targets[0].n_strides, 24u);

  ASSERT_EQ(run(base + " --out " + q(dir / "b")).code, 0);
  EXPECT_EQ(read_report(dir / "b" / "report.json"), report);
  EXPECT_EQ(testutil::slurp(dir / "a" / "report.json"), testutil::slurp(dir / "b" / "report.json"));
}

TEST(CliCrossval, SingleModelOmitsComparisons) {
  const auto& f = fixture();
  testutil::TempDir dir("cli_cv1");
  const auto r = run("crossval --folds 3 --iterations 6 --batch-size 8 --data " + q(f.data) + " --out " + q(dir / "a"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_FALSE(fs::exists(dir / "a" / "comparisons.csv"));
  EXPECT_EQ(r.out.find("Levene"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir / "a" / "model_B" / "bland_altman_stride_length.csv"));
  EXPECT_TRUE(fs::exists(dir / "a" / "model_B" / "fold_0" / "loss_stride_length.csv"));
  EXPECT_TRUE(fs::exists(dir / "a" / "folds.json"));
}

TEST(CliCrossval, TooFewPatientsForFolds) {
  const auto& f = fixture();
  testutil::TempDir dir("cli_cv2");
  const auto r = run("crossval --iterations 5 --data " + q(f.data) + " --out " + q(dir / "a"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("cannot split 6 patients into 10 folds"), std::string::npos) << r.err;
}
