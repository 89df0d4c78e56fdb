// gaitcnn command-line front end: synth | train | crossval | predict.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "gaitcnn/gaitcnn.hpp"

namespace {

enum ExitCode { kOk = 0, kOther = 1, kValidation = 2, kTraining = 3, kIo = 4 };

using Override = std::pair<std::string, std::vector<std::string>>;

// Registers a flag whose value is recorded as a config override.
template <class T>
CLI::Option* key_option(CLI::App* app, std::vector<Override>& overrides, const std::string& flag, const std::string& key,
                         const std::string& help) {
  return app->add_option_function<std::string>(
                flag, [&overrides, key](const std::string& v) { overrides.push_back({key, {v}}); }, help)
      ->type_name(T::name);
}

struct Int {
  static constexpr const char* name = "INT";
};
struct Num {
  static constexpr const char* name = "NUM";
};
struct Text {
  static constexpr const char* name = "TEXT";
};
struct Path {
  static constexpr const char* name = "PATH";
};

}  // namespace

int main(int argc, char** argv) {
  using namespace gaitcnn;
  CLI::App app{"Stride parameter estimation from foot-worn inertial sensors with 1D CNNs"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::vector<Override> overrides;
  std::string config_file;
  int verbosity = 0;
  bool quiet = false;

  app.add_option("--config", config_file, "Key = value configuration file (flags and GAITCNN_* override it)")
      ->check(CLI::ExistingFile);
  key_option<Int>(&app, overrides, "--seed", "seed", "Master seed");
  key_option<Text>(&app, overrides, "--preset", "preset", "paper or desk");
  key_option<Text>(&app, overrides, "--model", "model", "A or B");
  app.add_option_function<std::vector<std::string>>(
         "--compare", [&](const std::vector<std::string>& v) { overrides.push_back({"compare", v}); },
         "Models to compare, e.g. --compare A B")
      ->expected(2, 2);
  key_option<Int>(&app, overrides, "--jobs,-j", "jobs", "Worker threads");
  key_option<Path>(&app, overrides, "--out,-o", "out", "Output directory");
  app.add_flag_callback("--force", [&] { overrides.push_back({"force", {"true"}}); }, "Overwrite a previous run's output");
  key_option<Path>(&app, overrides, "--data,-d", "data", "Dataset root, patient directory or stride cache");
  app.add_option_function<std::vector<std::string>>(
      "--set",
      [&](const std::vector<std::string>& v) {
        for (const auto& kv : v) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value, got '" + kv + "'");
          overrides.push_back({kv.substr(0, eq), {kv.substr(eq + 1)}});
        }
      },
      "Any configuration key, e.g. --set adam.alpha=0.0005");
  app.add_flag("--verbose,-v", verbosity, "More log output (repeat for debug)");
  app.add_flag("--quiet,-q", quiet, "Errors only");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  key_option<Int>(synth, overrides, "--patients", "synth.patients", "Number of patients");
  key_option<Int>(synth, overrides, "--strides", "synth.strides", "Annotated strides per patient");
  key_option<Num>(synth, overrides, "--noise", "synth.noise_std", "Noise std as a fraction of full scale");
  key_option<Num>(synth, overrides, "--amplitude", "synth.amplitude", "Pulse amplitude factor");

  auto* train = app.add_subcommand("train", "Train Model A or B and write checkpoints");
  key_option<Int>(train, overrides, "--iterations", "train.iterations", "Training iterations");
  key_option<Int>(train, overrides, "--batch-size", "train.batch_size", "Mini-batch size");
  key_option<Int>(train, overrides, "--holdout-fold", "cv.holdout_fold", "Leave this fold of the patient split out");
  key_option<Int>(train, overrides, "--folds", "cv.folds", "Folds of the patient split");
  key_option<Int>(train, overrides, "--fold-seed", "cv.fold_seed", "Seed of the patient split");

  auto* crossval = app.add_subcommand("crossval", "Patient-wise cross-validation and evaluation report");
  key_option<Int>(crossval, overrides, "--iterations", "train.iterations", "Training iterations");
  key_option<Int>(crossval, overrides, "--batch-size", "train.batch_size", "Mini-batch size");
  key_option<Int>(crossval, overrides, "--folds", "cv.folds", "Number of folds");
  key_option<Int>(crossval, overrides, "--fold-seed", "cv.fold_seed", "Seed of the patient split");
  key_option<Text>(crossval, overrides, "--levene-center", "eval.levene_center", "median or mean");
  key_option<Text>(crossval, overrides, "--icc", "eval.icc_variant", "ICC(1,1), ICC(2,1) or ICC(3,1)");
  key_option<Num>(crossval, overrides, "--alpha", "eval.alpha", "Significance level of the Levene test");

  auto* predict = app.add_subcommand("predict", "Per-stride parameters for a walk");
  predict->add_option_function<std::vector<std::string>>(
      "--checkpoint,-c", [&](const std::vector<std::string>& v) { overrides.push_back({"predict.checkpoints", v}); },
      "Checkpoint files or a training output directory");
  key_option<Path>(predict, overrides, "--input,-i", "predict.input", "Patient directory or dataset root");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  set_log_level(quiet ? LogLevel::error : verbosity >= 2 ? LogLevel::debug : verbosity == 1 ? LogLevel::info : LogLevel::warning);

  try {
    RunConfig cfg;
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    apply_env(cfg);
    for (const auto& [key, values] : overrides) set_config_value(cfg, key, values);

    if (synth->parsed()) {
      const auto s = cmd_synth(cfg);
      std::cout << "wrote " << s.patients << " patients, " << s.annotated_strides << " annotated strides to " << cfg.out
                << "\n";
    } else if (train->parsed()) {
      for (const auto& p : cmd_train(cfg)) std::cout << p.string() << "\n";
    } else if (crossval->parsed()) {
      const auto r = cmd_crossval(cfg);
      std::cout << report_text(r.report);
      std::cerr << "training time " << text::format_fixed(r.train_seconds, 1) << " s summed over tasks, wall "
                << text::format_fixed(r.wall_seconds, 1) << " s\n";
    } else if (predict->parsed()) {
      const auto rows = cmd_predict(cfg);
      std::size_t ok = 0;
      for (const auto& r : rows) ok += r.ok ? 1 : 0;
      std::cout << ok << " of " << rows.size() << " strides predicted; see " << cfg.out << "/predictions.csv\n";
      for (const auto& r : rows)
        if (!r.ok) std::cerr << r.patient_id << "/" << to_string(r.foot) << " row " << r.stride_id << ": " << r.status << "\n";
    }
    return kOk;
  } catch (const TrainingError& e) {
    std::cerr << "training failed: " << e.what() << "\n";
    return kTraining;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return kOther;
  }
}
