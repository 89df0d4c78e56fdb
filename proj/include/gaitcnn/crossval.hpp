#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gaitcnn/errors.hpp"
#include "gaitcnn/log.hpp"
#include "gaitcnn/nets.hpp"
#include "gaitcnn/parallel.hpp"
#include "gaitcnn/rng.hpp"
#include "gaitcnn/strideprep.hpp"

namespace gaitcnn {

/// Patient-wise assignment of ids to k folds.
struct FoldPlan {
  std::size_t k = 10;
  std::uint64_t seed = 1;
  std::vector<std::vector<std::string>> folds;

  [[nodiscard]] std::size_t fold_of(const std::string& patient) const {
    for (std::size_t f = 0; f < folds.size(); ++f)
      if (std::find(folds[f].begin(), folds[f].end(), patient) != folds[f].end()) return f;
    throw ValidationError("patient " + patient + " is not in the fold plan");
  }
  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

/// Sorts and de-duplicates the ids, shuffles them with the seed, then deals
/// them round-robin so fold sizes differ by at most one.
inline FoldPlan split_folds(std::vector<std::string> patient_ids, std::size_t k = 10, std::uint64_t seed = 1) {
  std::sort(patient_ids.begin(), patient_ids.end());
  patient_ids.erase(std::unique(patient_ids.begin(), patient_ids.end()), patient_ids.end());
  if (k < 2) throw ValidationError("cross-validation needs at least two folds");
  if (patient_ids.size() < k)
    throw ValidationError("cannot split " + std::to_string(patient_ids.size()) + " patients into " + std::to_string(k) +
                          " folds");
  Rng rng = make_rng(seed, {0x666f6c64});
  std::shuffle(patient_ids.begin(), patient_ids.end(), rng);
  FoldPlan plan{k, seed, std::vector<std::vector<std::string>>(k)};
  for (std::size_t i = 0; i < patient_ids.size(); ++i) plan.folds[i % k].push_back(patient_ids[i]);
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

inline std::vector<std::string> patient_ids(const std::vector<PreparedStride>& strides) {
  std::set<std::string> ids;
  for (const auto& s : strides) ids.insert(s.patient_id());
  return {ids.begin(), ids.end()};
}

/// Held-out estimate for one stride.
struct StridePrediction {
  std::string patient_id;
  std::size_t stride_id = 0;
  std::size_t fold = 0;
  std::array<double, kCnnTargetCount> cnn{};  // physical units, fixed target order
  TemporalParams temporal;
  GaitTargets reference;
};

struct FoldRecord {
  std::size_t fold = 0;
  std::vector<std::string> train_patients;
  std::vector<std::string> test_patients;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  TargetScaler scaler;
  std::vector<LossCurve> curves;  // one per member
};

struct CvResult {
  ModelKind kind = ModelKind::B;
  Preset preset = Preset::desk;
  ArchitectureSpec architecture;
  TrainConfig train_config;
  FoldPlan plan;
  std::vector<FoldRecord> folds;
  std::vector<StridePrediction> predictions;  // ordered by fold, then input order
  double train_seconds = 0.0;                 // summed over members; not written to reports
};

/// One evaluated quantity: paired estimates and references with their ids.
struct TargetSeries {
  std::string target;
  std::string unit;
  bool event_based = false;
  std::vector<double> prediction;
  std::vector<double> reference;
  std::vector<std::string> patient_id;
  std::vector<std::size_t> stride_id;

  [[nodiscard]] std::vector<double> errors() const {
    std::vector<double> e(prediction.size());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = prediction[i] - reference[i];
    return e;
  }
};

/// Signed errors pooled over all folds: five CNN targets then the three
/// event-based ones. Strides without a reference for a target are skipped
/// for that target only.
inline std::vector<TargetSeries> pool_errors(const CvResult& r) {
  std::vector<TargetSeries> out;
  for (auto t : kCnnTargets) {
    TargetSeries s{std::string(name(t)), std::string(unit(t)), false, {}, {}, {}, {}};
    for (const auto& p : r.predictions) {
      const double ref = p.reference.cnn(t);
      if (std::isnan(ref)) continue;
      s.prediction.push_back(p.cnn[static_cast<std::size_t>(t)]);
      s.reference.push_back(ref);
      s.patient_id.push_back(p.patient_id);
      s.stride_id.push_back(p.stride_id);
    }
    out.push_back(std::move(s));
  }
  for (auto t : kEventTargets) {
    TargetSeries s{std::string(name(t)), "s", true, {}, {}, {}, {}};
    for (const auto& p : r.predictions) {
      const double ref = p.reference.event(t);
      if (std::isnan(ref)) continue;
      const double est = t == EventTarget::stride_time  ? p.temporal.stride_time_s
                         : t == EventTarget::swing_time ? p.temporal.swing_time_s
                                                        : p.temporal.stance_time_s;
      s.prediction.push_back(est);
      s.reference.push_back(ref);
      s.patient_id.push_back(p.patient_id);
      s.stride_id.push_back(p.stride_id);
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Throws ValidationError if any fold trained on a test patient or fitted its
/// scaler on anything but its own training strides.
inline void audit_no_leakage(const CvResult& r, const std::vector<PreparedStride>& strides) {
  for (const auto& f : r.folds) {
    std::set<std::string> train(f.train_patients.begin(), f.train_patients.end());
    for (const auto& p : f.test_patients)
      if (train.count(p)) throw ValidationError("fold " + std::to_string(f.fold) + ": patient " + p + " in both splits");
    std::vector<PreparedStride> train_strides;
    for (const auto& s : strides)
      if (train.count(s.patient_id()) && s.has_cnn_reference()) train_strides.push_back(s);
    if (train_strides.size() != f.n_train)
      throw ValidationError("fold " + std::to_string(f.fold) + ": training stride count does not match the audit");
    if (!(TargetScaler::fit(stack_cnn_targets(train_strides)) == f.scaler))
      throw ValidationError("fold " + std::to_string(f.fold) + ": scaler constants do not come from the training split");
  }
  std::set<std::pair<std::string, std::size_t>> seen;
  for (const auto& p : r.predictions) {
    const auto& test = r.folds.at(p.fold).test_patients;
    if (std::find(test.begin(), test.end(), p.patient_id) == test.end())
      throw ValidationError("stride " + p.patient_id + "/" + std::to_string(p.stride_id) + " predicted by a fold that trained on it");
    if (!seen.insert({p.patient_id, p.stride_id}).second)
      throw ValidationError("stride " + p.patient_id + "/" + std::to_string(p.stride_id) + " predicted twice");
  }
  if (seen.size() != strides.size()) throw ValidationError("not every usable stride was predicted exactly once");
}

/// What to evaluate in one cross-validation run.
struct CvModelSpec {
  ModelKind kind = ModelKind::B;
  Preset preset = Preset::desk;
  ArchitectureSpec architecture;
  TrainConfig train_config;
};

/// Patient-wise cross-validation of one or more models over the same fold
/// plan. Per fold the scaler is fitted on the training split only; every
/// (model, fold, member) training is an independent task drawing from
/// make_rng(seed, {model index, fold, member}), so results do not depend on
/// `jobs`. Event-based parameters come from the detected events of each stride.
inline std::vector<CvResult> run_cv(const std::vector<CvModelSpec>& models, const std::vector<PreparedStride>& strides,
                                    const FoldPlan& plan, std::uint64_t seed, std::size_t jobs = 1) {
  if (models.empty()) throw ValidationError("run_cv needs at least one model");
  for (const auto& m : models) m.train_config.validate();
  const std::size_t k = plan.folds.size();

  struct FoldData {
    std::vector<std::size_t> train_idx, test_idx;
    Batch train_x, test_x, scaled;
    TargetScaler scaler;
  };
  std::vector<FoldData> folds(k);
  std::vector<CvResult> results(models.size());
  for (std::size_t f = 0; f < k; ++f) {
    auto& fd = folds[f];
    std::set<std::string> test(plan.folds[f].begin(), plan.folds[f].end());
    std::vector<PreparedStride> train_strides, test_strides;
    for (std::size_t i = 0; i < strides.size(); ++i) {
      if (test.count(strides[i].patient_id())) {
        fd.test_idx.push_back(i);
        test_strides.push_back(strides[i]);
      } else if (strides[i].has_cnn_reference()) {
        fd.train_idx.push_back(i);
        train_strides.push_back(strides[i]);
      }
    }
    if (train_strides.empty()) throw ValidationError("fold " + std::to_string(f) + " has no training strides");
    fd.train_x = stack_inputs(train_strides);
    fd.test_x = stack_inputs(test_strides);
    try {
      fd.scaler = TargetScaler::fit(stack_cnn_targets(train_strides));
    } catch (const ValidationError& e) {
      throw ValidationError("fold " + std::to_string(f) + ": " + e.what());
    }
    fd.scaled = fd.scaler.scale(stack_cnn_targets(train_strides));
  }

  struct Task {
    std::size_t model, fold, member;
  };
  std::vector<Task> tasks;
  for (std::size_t m = 0; m < models.size(); ++m)
    for (std::size_t f = 0; f < k; ++f)
      for (std::size_t j = 0; j < member_count(models[m].kind); ++j) tasks.push_back({m, f, j});

  // raw[model][fold] = scaled predictions [n_test x 5]
  std::vector<std::vector<Batch>> raw(models.size());
  std::vector<std::vector<std::vector<LossCurve>>> curves(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (std::size_t f = 0; f < k; ++f) raw[m].emplace_back(folds[f].test_idx.size(), Shape{1, kCnnTargetCount});
    curves[m].assign(k, std::vector<LossCurve>(member_count(models[m].kind)));
  }
  std::vector<double> seconds(tasks.size(), 0.0);
  std::mutex progress_mu;
  std::size_t done = 0;
  parallel_for(tasks.size(), jobs, [&](std::size_t t) {
    const auto [m, f, j] = tasks[t];
    const auto& spec = models[m];
    const auto& fd = folds[f];
    const auto start = std::chrono::steady_clock::now();
    Rng rng = make_rng(seed, {m, f, j});
    std::optional<std::size_t> column;
    if (spec.kind == ModelKind::B) column = j;
    Network net;
    try {
      net = train_member(spec.architecture, fd.train_x, fd.scaled, column, spec.train_config, rng, &curves[m][f][j]);
    } catch (const TrainingError& e) {
      throw TrainingError("model " + to_string(spec.kind) + ", fold " + std::to_string(f) + ": " + e.what());
    }
    if (fd.test_x.count() > 0) {
      const Batch out = net.predict(fd.test_x);
      for (std::size_t b = 0; b < out.count(); ++b) {
        if (column)
          raw[m][f].sample(b)[*column] = out.sample(b)[0];
        else
          for (std::size_t c = 0; c < kCnnTargetCount; ++c) raw[m][f].sample(b)[c] = out.sample(b)[c];
      }
    }
    seconds[t] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::lock_guard lock(progress_mu);
    ++done;
    log_info("cv: model " + to_string(spec.kind) + " fold " + std::to_string(f) + " member " + std::to_string(j) +
             " done (" + std::to_string(done) + "/" + std::to_string(tasks.size()) + ")");
  });

  for (std::size_t m = 0; m < models.size(); ++m) {
    auto& r = results[m];
    r.kind = models[m].kind;
    r.preset = models[m].preset;
    r.architecture = models[m].architecture;
    r.train_config = models[m].train_config;
    r.train_config.seed = seed;
    r.plan = plan;
    for (std::size_t t = 0; t < tasks.size(); ++t)
      if (tasks[t].model == m) r.train_seconds += seconds[t];
    for (std::size_t f = 0; f < k; ++f) {
      const auto& fd = folds[f];
      FoldRecord rec;
      rec.fold = f;
      rec.test_patients = plan.folds[f];
      for (std::size_t g = 0; g < k; ++g)
        if (g != f) rec.train_patients.insert(rec.train_patients.end(), plan.folds[g].begin(), plan.folds[g].end());
      std::sort(rec.train_patients.begin(), rec.train_patients.end());
      rec.n_train = fd.train_idx.size();
      rec.n_test = fd.test_idx.size();
      rec.scaler = fd.scaler;
      rec.curves = std::move(curves[m][f]);
      r.folds.push_back(std::move(rec));
      for (std::size_t b = 0; b < fd.test_idx.size(); ++b) {
        const auto& s = strides[fd.test_idx[b]];
        StridePrediction p;
        p.patient_id = s.patient_id();
        p.stride_id = s.stride_id();
        p.fold = f;
        for (std::size_t c = 0; c < kCnnTargetCount; ++c) p.cnn[c] = fd.scaler.rescale(c, raw[m][f].sample(b)[c]);
        p.temporal = s.temporal;
        p.reference = s.reference;
        r.predictions.push_back(p);
      }
    }
    audit_no_leakage(r, strides);
  }
  return results;
}

}  // namespace gaitcnn
