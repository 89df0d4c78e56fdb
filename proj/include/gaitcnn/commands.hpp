#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaitcnn/checkpoint.hpp"
#include "gaitcnn/crossval.hpp"
#include "gaitcnn/gaitio.hpp"
#include "gaitcnn/log.hpp"
#include "gaitcnn/report.hpp"
#include "gaitcnn/run_config.hpp"
#include "gaitcnn/strideprep.hpp"
#include "gaitcnn/synthgait.hpp"

namespace gaitcnn {

inline constexpr const char* kVersion = "1.0.0";

namespace cmd_detail {

namespace fs = std::filesystem;

/// An existing non-empty directory is only reused with force, and then only
/// cleared if an earlier run left its manifest there.
inline void prepare_output_dir(const fs::path& dir, bool force) {
  if (dir.empty()) throw ValidationError("an output directory is required (--out)");
  std::error_code ec;
  if (fs::exists(dir) && !fs::is_directory(dir)) throw ValidationError(dir.string() + " exists and is not a directory");
  if (fs::is_directory(dir) && !fs::is_empty(dir)) {
    if (!force) throw ValidationError(dir.string() + " is not empty (use --force to overwrite)");
    if (!fs::exists(dir / "manifest.json"))
      throw ValidationError(dir.string() + " is not empty and holds no manifest.json; refusing to clear it");
    for (const auto& e : fs::directory_iterator(dir)) fs::remove_all(e.path(), ec);
    if (ec) throw IoError("cannot clear " + dir.string() + ": " + ec.message());
  }
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

inline void write_text(const fs::path& path, const std::string& content) { report_detail::write_file(path, content); }

inline json formats() {
  return {{"container_version", kContainerVersion},
          {"report_format_version", 1},
          {"stride_length", kStrideLength},
          {"sample_rate_hz", kSampleRate},
          {"detection_method", kDetectionMethod}};
}

inline void write_run_files(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                            const json& extra = json::object()) {
  write_text(dir / "run_config.toml", "# gaitcnn " + command + "\n" + to_toml(cfg));
  json m;
  m["tool"] = "gaitcnn";
  m["version"] = kVersion;
  m["command"] = command;
  m["seed"] = cfg.seed;
  m["formats"] = formats();
  m["config"] = to_json(cfg);
  for (const auto& [k, v] : extra.items()) m[k] = v;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

inline bool is_patient_dir(const fs::path& p) {
  return fs::is_directory(p) && fs::exists(p / (p.filename().string() + "_strides.csv"));
}

}  // namespace cmd_detail

/// Loads and preprocesses the configured data: a dataset root, a single
/// patient directory, or a stride cache file.
inline std::vector<PreparedStride> load_prepared(const RunConfig& cfg, PrepareReport* report = nullptr,
                                                 json* provenance = nullptr) {
  namespace fs = std::filesystem;
  if (cfg.data.empty()) throw ValidationError("no dataset given (--data)");
  const fs::path p(cfg.data);
  if (fs::is_regular_file(p)) {
    json prov;
    auto strides = load_stride_cache(p, &prov);
    if (provenance != nullptr) *provenance = {{"stride_cache", prov}};
    return strides;
  }
  if (!fs::exists(p)) throw IoError("dataset not found: " + p.string());
  LoadReport load;
  std::vector<RawRecording> recs;
  if (cmd_detail::is_patient_dir(p)) {
    recs = load_patient(p);
    load.patients = 1;
    load.recordings = recs.size();
  } else {
    recs = load_dataset(p, &load);
  }
  PrepareReport rep;
  auto strides = prepare_dataset(recs, CalibConfig{}, &rep, cfg.jobs);
  log_info("prepared " + std::to_string(rep.usable) + " of " + std::to_string(rep.annotated) + " annotated strides (" +
           std::to_string(rep.walks) + " walks, " + std::to_string(rep.detection_failures) + " detection failures, " +
           std::to_string(rep.rejected_length) + " over-long)");
  if (report != nullptr) *report = rep;
  if (provenance != nullptr)
    *provenance = {{"patients", load.patients},
                   {"recordings", load.recordings},
                   {"annotated_strides", rep.annotated},
                   {"walks", rep.walks},
                   {"usable_strides", rep.usable},
                   {"detection_failures", rep.detection_failures},
                   {"rejected_length", rep.rejected_length},
                   {"clamped_samples", rep.clamped_samples}};
  return strides;
}

struct SynthSummary {
  std::size_t patients = 0;
  std::size_t annotated_strides = 0;
};

inline SynthSummary cmd_synth(const RunConfig& cfg) {
  cfg.validate();
  const auto profile = cfg.synth_profile();
  const std::filesystem::path out(cfg.out);
  cmd_detail::prepare_output_dir(out, cfg.force);
  const auto walks = generate_dataset(profile, cfg.jobs);
  write_synth_dataset(out, walks);
  SynthSummary s{walks.size(), 0};
  for (const auto& w : walks) s.annotated_strides += w.recording.strides.size();
  cmd_detail::write_run_files(out, "synth", cfg,
                              {{"dataset", {{"patients", s.patients}, {"annotated_strides", s.annotated_strides}}}});
  return s;
}

inline std::uint64_t model_run_id(ModelKind k) { return k == ModelKind::A ? 0 : 1; }

/// Returns the checkpoint paths written, per model.
inline std::vector<std::filesystem::path> cmd_train(const RunConfig& cfg) {
  cfg.validate();
  json prov;
  auto strides = load_prepared(cfg, nullptr, &prov);
  const std::filesystem::path out(cfg.out);
  cmd_detail::prepare_output_dir(out, cfg.force);

  json split = {{"holdout_fold", nullptr}};
  if (cfg.holdout_fold) {
    const auto plan = split_folds(patient_ids(strides), cfg.folds, cfg.resolved_fold_seed());
    const auto& held = plan.folds[*cfg.holdout_fold];
    std::erase_if(strides, [&](const PreparedStride& s) {
      return std::find(held.begin(), held.end(), s.patient_id()) != held.end();
    });
    split = {{"holdout_fold", *cfg.holdout_fold},
             {"folds", cfg.folds},
             {"fold_seed", cfg.resolved_fold_seed()},
             {"held_out_patients", held}};
  }
  std::erase_if(strides, [](const PreparedStride& s) { return !s.has_cnn_reference(); });
  if (strides.empty()) throw ValidationError("no training strides with complete references");
  const Batch inputs = stack_inputs(strides);
  const Batch targets = stack_cnn_targets(strides);
  const auto n_patients = patient_ids(strides).size();

  std::vector<std::filesystem::path> paths;
  for (auto kind : cfg.models()) {
    std::vector<LossCurve> curves;
    const auto start = std::chrono::steady_clock::now();
    const auto model = train_model(cfg.architecture(kind), kind, cfg.preset, cfg.train_config(), inputs, targets,
                                   cfg.seed, model_run_id(kind), cfg.jobs, &curves);
    log_info("trained model " + to_string(kind) + " in " +
             std::to_string(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()) + " s");
    json meta = {{"seed", cfg.seed},
                 {"run_id", model_run_id(kind)},
                 {"dropout_reading", to_string(cfg.dropout_reading)},
                 {"n_train_strides", strides.size()},
                 {"n_train_patients", n_patients},
                 {"split", split},
                 {"detection_method", kDetectionMethod}};
    for (const auto& p : save_model(out, model, meta)) paths.push_back(p);
    for (std::size_t m = 0; m < curves.size(); ++m) {
      const std::string member = kind == ModelKind::A ? "all" : std::string(name(kCnnTargets[m]));
      write_loss_curve_csv((out / ("loss_" + to_string(kind) + "_" + member + ".csv")).string(), curves[m]);
    }
  }
  cmd_detail::write_run_files(out, "train", cfg, {{"data", prov}, {"split", split}});
  return paths;
}

struct CrossvalOutput {
  EvalReport report;
  std::vector<CvResult> results;
  double train_seconds = 0.0;  // summed over all trainings, each on one worker
  double wall_seconds = 0.0;
};

inline CrossvalOutput cmd_crossval(const RunConfig& cfg) {
  cfg.validate();
  const auto wall = std::chrono::steady_clock::now();
  json prov;
  const auto strides = load_prepared(cfg, nullptr, &prov);
  const std::filesystem::path out(cfg.out);
  cmd_detail::prepare_output_dir(out, cfg.force);
  const auto plan = split_folds(patient_ids(strides), cfg.folds, cfg.resolved_fold_seed());

  std::vector<CvModelSpec> specs;
  for (auto kind : cfg.models()) specs.push_back({kind, cfg.preset, cfg.architecture(kind), cfg.train_config()});
  CrossvalOutput res;
  res.results = run_cv(specs, strides, plan, cfg.seed, cfg.jobs);

  std::vector<std::pair<std::string, std::vector<TargetSeries>>> pooled;
  for (const auto& r : res.results) {
    pooled.emplace_back(to_string(r.kind), pool_errors(r));
    res.train_seconds += r.train_seconds;
  }
  json meta = {{"seed", cfg.seed},
               {"preset", to_string(cfg.preset)},
               {"folds", cfg.folds},
               {"fold_seed", cfg.resolved_fold_seed()},
               {"n_strides", strides.size()},
               {"n_patients", patient_ids(strides).size()},
               {"train", to_json(cfg.train_config())},
               {"dropout_reading", to_string(cfg.dropout_reading)},
               {"detection_method", kDetectionMethod}};
  res.report = build_report(pooled, cfg.eval, meta);
  write_report(out, res.report, pooled);

  json folds = json::array();
  for (const auto& r : res.results) {
    for (const auto& f : r.folds) {
      const auto dir = out / ("model_" + to_string(r.kind)) / ("fold_" + std::to_string(f.fold));
      std::filesystem::create_directories(dir);
      for (std::size_t m = 0; m < f.curves.size(); ++m) {
        const std::string member = r.kind == ModelKind::A ? "all" : std::string(name(kCnnTargets[m]));
        write_loss_curve_csv((dir / ("loss_" + member + ".csv")).string(), f.curves[m]);
      }
      if (&r == &res.results.front())
        folds.push_back({{"fold", f.fold},
                         {"test_patients", f.test_patients},
                         {"n_train", f.n_train},
                         {"n_test", f.n_test},
                         {"scaler", to_json(f.scaler)}});
    }
  }
  cmd_detail::write_text(out / "folds.json", json{{"k", plan.k}, {"seed", plan.seed}, {"folds", folds}}.dump(2) + "\n");
  cmd_detail::write_run_files(out, "crossval", cfg, {{"data", prov}});
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall).count();
  return res;
}

/// One output row of predict: an annotated stride and either its eight
/// parameters or the reason it has none.
struct PredictRow {
  std::string patient_id;
  Foot foot = Foot::right;
  std::size_t stride_id = 0;
  bool ok = false;
  std::string status;
  std::array<double, kCnnTargetCount> cnn{};
  TemporalParams temporal;
};

inline std::vector<PredictRow> predict_recordings(const GaitModel& model, const std::vector<RawRecording>& recs) {
  std::vector<PredictRow> rows;
  for (const auto& rec : recs) {
    PrepareReport rep;
    const auto prepared = prepare_recording(rec, CalibConfig{}, &rep);
    Batch est;
    if (!prepared.empty()) est = model.predict(stack_inputs(prepared));
    std::map<std::size_t, std::size_t> by_row;
    for (std::size_t i = 0; i < prepared.size(); ++i) by_row[prepared[i].stride_id()] = i;
    std::map<std::size_t, std::string> reasons;
    for (const auto& [pid, row, why] : rep.excluded) reasons.emplace(row, why);
    for (const auto& s : rec.strides) {
      PredictRow r;
      r.patient_id = rec.patient_id;
      r.foot = rec.foot;
      r.stride_id = s.row;
      if (const auto it = by_row.find(s.row); it != by_row.end()) {
        r.ok = true;
        r.status = "ok";
        for (std::size_t c = 0; c < kCnnTargetCount; ++c) r.cnn[c] = est.sample(it->second)[c];
        r.temporal = prepared[it->second].temporal;
      } else if (const auto jt = reasons.find(s.row); jt != reasons.end()) {
        r.status = jt->second;
      } else {
        r.status = "no following stride to close the gait cycle";
      }
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

inline std::string predictions_table_csv(const std::vector<PredictRow>& rows) {
  auto field = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  std::ostringstream out;
  out << "patient_id,foot,stride_id,status";
  for (auto t : kCnnTargets) out << ',' << name(t);
  for (auto t : kEventTargets) out << ',' << name(t);
  out << '\n';
  for (const auto& r : rows) {
    out << r.patient_id << ',' << to_string(r.foot) << ',' << r.stride_id << ',' << field(r.status);
    if (r.ok) {
      for (double v : r.cnn) out << ',' << text::format_double(v);
      out << ',' << text::format_double(r.temporal.stride_time_s) << ',' << text::format_double(r.temporal.swing_time_s)
          << ',' << text::format_double(r.temporal.stance_time_s);
    } else {
      out << ",,,,,,,,";
    }
    out << '\n';
  }
  return out.str();
}

inline GaitModel load_configured_model(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  if (cfg.checkpoints.empty()) throw ValidationError("no checkpoints given (--checkpoint)");
  std::vector<fs::path> paths;
  for (const auto& c : cfg.checkpoints) {
    if (fs::is_directory(c)) {
      const auto found = find_checkpoints(c);
      paths.insert(paths.end(), found.begin(), found.end());
    } else {
      paths.emplace_back(c);
    }
  }
  // A training directory may hold both models; keep the configured one.
  if (paths.size() > 1) {
    const std::string prefix = "model_" + to_string(cfg.model);
    std::vector<fs::path> sel;
    for (const auto& p : paths)
      if (p.filename().string().rfind(prefix, 0) == 0) sel.push_back(p);
    if (!sel.empty()) paths = sel;
  }
  return load_model(paths);
}

inline std::vector<PredictRow> cmd_predict(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  cfg.validate();
  const auto model = load_configured_model(cfg);
  const std::string input = cfg.input.empty() ? cfg.data : cfg.input;
  if (input.empty()) throw ValidationError("no input walk given (--input)");
  if (!fs::exists(input)) throw IoError("input not found: " + input);
  const auto recs = cmd_detail::is_patient_dir(input) ? load_patient(input) : load_dataset(input);
  const fs::path out(cfg.out);
  cmd_detail::prepare_output_dir(out, cfg.force);
  const auto rows = predict_recordings(model, recs);
  cmd_detail::write_text(out / "predictions.csv", predictions_table_csv(rows));
  std::size_t ok = 0;
  for (const auto& r : rows) ok += r.ok ? 1 : 0;
  cmd_detail::write_run_files(out, "predict", cfg,
                              {{"model", to_string(model.kind)}, {"strides", rows.size()}, {"predicted", ok}});
  return rows;
}

}  // namespace gaitcnn
