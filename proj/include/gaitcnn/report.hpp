#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaitcnn/crossval.hpp"
#include "gaitcnn/errors.hpp"
#include "gaitcnn/stats.hpp"
#include "gaitcnn/text.hpp"

namespace gaitcnn {

struct EvalOptions {
  stats::LeveneCenter levene_center = stats::LeveneCenter::median;
  stats::IccVariant icc_variant = stats::IccVariant::two_way_agreement;
  double alpha = 0.01;
};

/// Error statistics of one target for one model. NaN marks an undefined value
/// (e.g. ICC with fewer than three strides); it serializes as null.
struct TargetSummary {
  std::string target;
  std::string unit;
  bool event_based = false;
  std::size_t n_strides = 0;
  std::size_t n_patients = 0;
  double mean = 0.0;       // accuracy
  double precision = 0.0;  // sample std of signed errors
  double lower = 0.0;      // mean - 1.96 precision
  double upper = 0.0;      // mean + 1.96 precision
  double icc = 0.0;
  double estimate_mean = 0.0;
  double estimate_sd = 0.0;
  double reference_mean = 0.0;
  double reference_sd = 0.0;
};

struct ModelReport {
  std::string model;
  std::vector<TargetSummary> targets;
};

/// Levene comparison of one CNN target between two models.
struct Comparison {
  std::string target;
  std::string model_a;
  std::string model_b;
  double statistic = 0.0;
  double p_value = 1.0;
  bool significant = false;

  [[nodiscard]] std::string verdict() const { return significant ? "sign." : "n.s."; }
};

struct EvalReport {
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
  std::vector<ModelReport> models;
  std::vector<Comparison> comparisons;
};

namespace report_detail {

inline bool same(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

inline nlohmann::ordered_json num(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}
inline double num(const nlohmann::ordered_json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::string pm(double m, double s, int digits = 2) {
  return text::format_fixed(m, digits) + " ± " + text::format_fixed(s, digits);
}

inline std::string pad(const std::string& s, std::size_t w) {
  // display width: count UTF-8 lead bytes only
  std::size_t cols = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++cols;
  return cols >= w ? s : s + std::string(w - cols, ' ');
}

inline std::string display_unit(const std::string& u) { return u == "deg" ? "°" : u; }

inline std::string display_name(std::string n) {
  for (auto& c : n)
    if (c == '_') c = ' ';
  if (!n.empty()) n[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(n[0])));
  return n;
}

}  // namespace report_detail

inline bool operator==(const TargetSummary& a, const TargetSummary& b) {
  using report_detail::same;
  return a.target == b.target && a.unit == b.unit && a.event_based == b.event_based && a.n_strides == b.n_strides &&
         a.n_patients == b.n_patients && same(a.mean, b.mean) && same(a.precision, b.precision) &&
         same(a.lower, b.lower) && same(a.upper, b.upper) && same(a.icc, b.icc) &&
         same(a.estimate_mean, b.estimate_mean) && same(a.estimate_sd, b.estimate_sd) &&
         same(a.reference_mean, b.reference_mean) && same(a.reference_sd, b.reference_sd);
}
inline bool operator==(const ModelReport& a, const ModelReport& b) {
  return a.model == b.model && a.targets == b.targets;
}
inline bool operator==(const Comparison& a, const Comparison& b) {
  using report_detail::same;
  return a.target == b.target && a.model_a == b.model_a && a.model_b == b.model_b && same(a.statistic, b.statistic) &&
         same(a.p_value, b.p_value) && a.significant == b.significant;
}
inline bool operator==(const EvalReport& a, const EvalReport& b) {
  return a.metadata == b.metadata && a.models == b.models && a.comparisons == b.comparisons;
}

inline TargetSummary summarize(const TargetSeries& s, const EvalOptions& opt = {}) {
  using report_detail::same;
  TargetSummary t;
  t.target = s.target;
  t.unit = s.unit;
  t.event_based = s.event_based;
  t.n_strides = s.prediction.size();
  t.n_patients = std::set<std::string>(s.patient_id.begin(), s.patient_id.end()).size();
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  if (t.n_strides < 2) {
    t.mean = t.precision = t.lower = t.upper = t.icc = nan;
    t.estimate_mean = t.estimate_sd = t.reference_mean = t.reference_sd = nan;
    return t;
  }
  const auto errs = s.errors();
  const auto es = stats::error_stats(errs);
  t.mean = es.mean;
  t.precision = es.precision;
  std::tie(t.lower, t.upper) = stats::agreement_limits(t.mean, t.precision);
  t.estimate_mean = stats::mean(s.prediction);
  t.estimate_sd = stats::stddev(s.prediction);
  t.reference_mean = stats::mean(s.reference);
  t.reference_sd = stats::stddev(s.reference);
  try {
    t.icc = stats::icc(s.prediction, s.reference, opt.icc_variant);
  } catch (const ValidationError&) {
    t.icc = nan;
  }
  return t;
}

/// Summaries per model and, for every pair of models, Levene comparisons of
/// the five CNN targets. Event-based targets are identical across models and
/// are not compared.
inline EvalReport build_report(const std::vector<std::pair<std::string, std::vector<TargetSeries>>>& pooled,
                               const EvalOptions& opt = {}, nlohmann::ordered_json metadata = nlohmann::ordered_json::object()) {
  if (pooled.empty()) throw ValidationError("report needs at least one model");
  EvalReport r;
  metadata["levene_center"] = stats::to_string(opt.levene_center);
  metadata["icc_variant"] = stats::to_string(opt.icc_variant);
  metadata["alpha"] = opt.alpha;
  metadata["limits_z"] = stats::kLimitsZ;
  r.metadata = std::move(metadata);
  for (const auto& [model, series] : pooled) {
    ModelReport m{model, {}};
    for (const auto& s : series) m.targets.push_back(summarize(s, opt));
    r.models.push_back(std::move(m));
  }
  for (std::size_t a = 0; a < pooled.size(); ++a) {
    for (std::size_t b = a + 1; b < pooled.size(); ++b) {
      for (const auto& sa : pooled[a].second) {
        if (sa.event_based) continue;
        const auto it = std::find_if(pooled[b].second.begin(), pooled[b].second.end(),
                                     [&](const TargetSeries& s) { return s.target == sa.target; });
        if (it == pooled[b].second.end()) continue;
        const auto res = stats::levene_test(sa.errors(), it->errors(), opt.levene_center, opt.alpha);
        r.comparisons.push_back({sa.target, pooled[a].first, pooled[b].first, res.statistic, res.p_value, res.significant});
      }
    }
  }
  return r;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  using report_detail::num;
  nlohmann::ordered_json j;
  j["format"] = "gaitcnn-report";
  j["format_version"] = 1;
  j["metadata"] = r.metadata;
  j["models"] = nlohmann::ordered_json::array();
  for (const auto& m : r.models) {
    nlohmann::ordered_json jm;
    jm["model"] = m.model;
    jm["targets"] = nlohmann::ordered_json::array();
    for (const auto& t : m.targets) {
      jm["targets"].push_back({{"target", t.target},
                               {"unit", t.unit},
                               {"event_based", t.event_based},
                               {"n_strides", t.n_strides},
                               {"n_patients", t.n_patients},
                               {"mean", num(t.mean)},
                               {"precision", num(t.precision)},
                               {"lower", num(t.lower)},
                               {"upper", num(t.upper)},
                               {"icc", num(t.icc)},
                               {"estimate_mean", num(t.estimate_mean)},
                               {"estimate_sd", num(t.estimate_sd)},
                               {"reference_mean", num(t.reference_mean)},
                               {"reference_sd", num(t.reference_sd)}});
    }
    j["models"].push_back(std::move(jm));
  }
  j["comparisons"] = nlohmann::ordered_json::array();
  for (const auto& c : r.comparisons) {
    j["comparisons"].push_back({{"target", c.target},
                                {"model_a", c.model_a},
                                {"model_b", c.model_b},
                                {"statistic", num(c.statistic)},
                                {"p_value", num(c.p_value)},
                                {"significant", c.significant},
                                {"verdict", c.verdict()}});
  }
  return j;
}

inline EvalReport report_from_json(const nlohmann::ordered_json& j) {
  using report_detail::num;
  try {
    if (j.at("format") != "gaitcnn-report") throw FormatError("not a report document");
    if (j.at("format_version") != 1) throw FormatError("unsupported report version");
    EvalReport r;
    r.metadata = j.at("metadata");
    for (const auto& jm : j.at("models")) {
      ModelReport m{jm.at("model").get<std::string>(), {}};
      for (const auto& jt : jm.at("targets")) {
        TargetSummary t;
        t.target = jt.at("target").get<std::string>();
        t.unit = jt.at("unit").get<std::string>();
        t.event_based = jt.at("event_based").get<bool>();
        t.n_strides = jt.at("n_strides").get<std::size_t>();
        t.n_patients = jt.at("n_patients").get<std::size_t>();
        t.mean = num(jt.at("mean"));
        t.precision = num(jt.at("precision"));
        t.lower = num(jt.at("lower"));
        t.upper = num(jt.at("upper"));
        t.icc = num(jt.at("icc"));
        t.estimate_mean = num(jt.at("estimate_mean"));
        t.estimate_sd = num(jt.at("estimate_sd"));
        t.reference_mean = num(jt.at("reference_mean"));
        t.reference_sd = num(jt.at("reference_sd"));
        m.targets.push_back(std::move(t));
      }
      r.models.push_back(std::move(m));
    }
    for (const auto& jc : j.at("comparisons")) {
      r.comparisons.push_back({jc.at("target").get<std::string>(), jc.at("model_a").get<std::string>(),
                               jc.at("model_b").get<std::string>(), num(jc.at("statistic")), num(jc.at("p_value")),
                               jc.at("significant").get<bool>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
}

inline std::string report_csv(const EvalReport& r) {
  auto f = [](double v) { return std::isnan(v) ? std::string() : text::format_double(v); };
  std::ostringstream out;
  out << "model,target,unit,event_based,n_strides,n_patients,mean,precision,lower,upper,icc,"
         "estimate_mean,estimate_sd,reference_mean,reference_sd\n";
  for (const auto& m : r.models)
    for (const auto& t : m.targets)
      out << m.model << ',' << t.target << ',' << t.unit << ',' << (t.event_based ? 1 : 0) << ',' << t.n_strides << ','
          << t.n_patients << ',' << f(t.mean) << ',' << f(t.precision) << ',' << f(t.lower) << ',' << f(t.upper) << ','
          << f(t.icc) << ',' << f(t.estimate_mean) << ',' << f(t.estimate_sd) << ',' << f(t.reference_mean) << ','
          << f(t.reference_sd) << '\n';
  return out.str();
}

inline std::string comparisons_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "target,model_a,model_b,statistic,p_value,verdict\n";
  for (const auto& c : r.comparisons)
    out << c.target << ',' << c.model_a << ',' << c.model_b << ',' << text::format_double(c.statistic) << ','
        << text::format_double(c.p_value) << ',' << c.verdict() << '\n';
  return out.str();
}

/// Human-readable tables: accuracy +- precision of the CNN targets per model
/// with a Levene row, then a per-model block over all eight parameters.
inline std::string report_text(const EvalReport& r) {
  using report_detail::display_name;
  using report_detail::display_unit;
  using report_detail::pad;
  using report_detail::pm;
  std::ostringstream out;
  constexpr std::size_t first = 14, col = 20;
  out << "Accuracy ± precision on held-out patients";
  if (r.metadata.contains("folds")) out << " (" << r.metadata["folds"].get<int>() << "-fold, patient-wise)";
  out << "\n\n" << pad("", first);
  for (auto t : kCnnTargets) out << pad(display_name(std::string(name(t))), col);
  out << '\n';
  for (const auto& m : r.models) {
    out << pad("Model " + m.model, first);
    for (auto t : kCnnTargets) {
      for (const auto& s : m.targets)
        if (s.target == name(t)) out << pad(pm(s.mean, s.precision) + " " + display_unit(s.unit), col);
    }
    out << '\n';
  }
  if (!r.comparisons.empty()) {
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& c : r.comparisons) pairs.insert({c.model_a, c.model_b});
    for (const auto& [a, b] : pairs) {
      out << pad(pairs.size() == 1 ? "Levene-test" : "Levene " + a + "/" + b, first);
      for (auto t : kCnnTargets)
        for (const auto& c : r.comparisons)
          if (c.model_a == a && c.model_b == b && c.target == name(t)) out << pad(c.verdict(), col);
      out << '\n';
    }
    out << "\nLevene center: " << r.metadata.value("levene_center", std::string("median"))
        << ", alpha = " << text::format_double(r.metadata.value("alpha", 0.01)) << '\n';
    for (const auto& c : r.comparisons)
      out << "  " << pad(c.target, 18) << " W = " << text::format_fixed(c.statistic, 4) << ", p = " << text::format_double(c.p_value)
          << " (" << c.verdict() << ")\n";
  }
  for (const auto& m : r.models) {
    out << "\nModel " << m.model << ": average estimates and error of measurement\n\n";
    out << pad("Parameter", 20) << pad("Unit", 6) << pad("Estimate", 18) << pad("Reference", 18) << pad("Acc. ± prec.", 18)
        << pad("Limits", 22) << pad(r.metadata.value("icc_variant", std::string("ICC")), 10) << "n\n";
    for (const auto& s : m.targets) {
      out << pad(display_name(s.target), 20) << pad(display_unit(s.unit), 6) << pad(pm(s.estimate_mean, s.estimate_sd), 18)
          << pad(pm(s.reference_mean, s.reference_sd), 18) << pad(pm(s.mean, s.precision), 18)
          << pad("[" + text::format_fixed(s.lower, 2) + ", " + text::format_fixed(s.upper, 2) + "]", 22)
          << pad(std::isnan(s.icc) ? "-" : text::format_fixed(s.icc, 3), 10) << s.n_strides << '\n';
    }
  }
  return out.str();
}

inline std::string bland_altman_csv(const TargetSeries& s) {
  std::ostringstream out;
  out << "mean,diff\n";
  for (std::size_t i = 0; i < s.prediction.size(); ++i)
    out << text::format_double(0.5 * (s.prediction[i] + s.reference[i])) << ',' << text::format_double(s.prediction[i] - s.reference[i])
        << '\n';
  return out.str();
}

inline std::string predictions_csv(const std::vector<TargetSeries>& series) {
  std::ostringstream out;
  out << "patient_id,stride_id,target,prediction,reference\n";
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.prediction.size(); ++i)
      out << s.patient_id[i] << ',' << s.stride_id[i] << ',' << s.target << ',' << text::format_double(s.prediction[i]) << ','
          << text::format_double(s.reference[i]) << '\n';
  return out.str();
}

/// Writes report.json/.csv/.txt (and comparisons.csv when present) plus
/// model_<X>/bland_altman_<target>.csv and model_<X>/predictions.csv.
inline void write_report(const std::filesystem::path& dir, const EvalReport& r,
                         const std::vector<std::pair<std::string, std::vector<TargetSeries>>>& pooled) {
  using report_detail::write_file;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "report.json", to_json(r).dump(2) + "\n");
  write_file(dir / "report.csv", report_csv(r));
  if (!r.comparisons.empty()) write_file(dir / "comparisons.csv", comparisons_csv(r));
  write_file(dir / "report.txt", report_text(r));
  for (const auto& [model, series] : pooled) {
    const auto sub = dir / ("model_" + model);
    std::filesystem::create_directories(sub, ec);
    if (ec) throw IoError("cannot create " + sub.string() + ": " + ec.message());
    for (const auto& s : series) write_file(sub / ("bland_altman_" + s.target + ".csv"), bland_altman_csv(s));
    write_file(sub / "predictions.csv", predictions_csv(series));
  }
}

inline EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return report_from_json(nlohmann::ordered_json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace gaitcnn
