#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaitcnn/errors.hpp"
#include "gaitcnn/nets.hpp"
#include "gaitcnn/report.hpp"
#include "gaitcnn/synthgait.hpp"
#include "gaitcnn/text.hpp"

namespace gaitcnn {

inline constexpr const char* kEnvPrefix = "GAITCNN_";

/// Everything a run depends on. Unset optionals fall back to the preset.
struct RunConfig {
  std::uint64_t seed = 1;
  Preset preset = Preset::desk;
  ModelKind model = ModelKind::B;
  std::vector<ModelKind> compare;
  std::size_t jobs = 1;
  std::string out;
  bool force = false;
  std::string data;

  std::optional<std::size_t> iterations;
  std::optional<std::size_t> batch_size;
  std::size_t eval_interval = 50;
  double init_std = 0.01;
  double init_bias = 0.01;
  DropoutReading dropout_reading = DropoutReading::drop;
  AdamConfig adam{};

  std::size_t folds = 10;
  std::optional<std::uint64_t> fold_seed;
  std::optional<std::size_t> holdout_fold;

  EvalOptions eval{};

  std::size_t synth_patients = 99;
  std::size_t synth_strides = 12;
  double synth_noise_std = 0.002;
  double synth_amplitude = 1.0;

  std::vector<std::string> checkpoints;
  std::string input;

  [[nodiscard]] TrainConfig train_config() const {
    TrainConfig c = train_config_for(preset);
    if (iterations) c.iterations = *iterations;
    if (batch_size) c.batch_size = *batch_size;
    c.eval_interval = eval_interval;
    c.init_std = init_std;
    c.init_bias = init_bias;
    c.adam = adam;
    c.seed = seed;
    c.validate();
    return c;
  }
  [[nodiscard]] ArchitectureSpec architecture(ModelKind kind) const {
    return with_dropout_reading(architecture_for(kind, preset), dropout_reading);
  }
  [[nodiscard]] std::uint64_t resolved_fold_seed() const { return fold_seed.value_or(seed); }
  [[nodiscard]] std::vector<ModelKind> models() const { return compare.empty() ? std::vector<ModelKind>{model} : compare; }
  [[nodiscard]] SynthProfile synth_profile() const {
    SynthProfile p;
    p.patients = synth_patients;
    p.strides_per_patient = synth_strides;
    p.noise_std = synth_noise_std;
    p.amplitude = synth_amplitude;
    p.seed = seed;
    p.validate();
    return p;
  }

  void validate() const {
    if (jobs < 1) throw ValidationError("jobs must be >= 1");
    if (folds < 2) throw ValidationError("cv.folds must be >= 2");
    if (holdout_fold && *holdout_fold >= folds) throw ValidationError("cv.holdout_fold must be < cv.folds");
    if (!(eval.alpha > 0.0 && eval.alpha < 1.0)) throw ValidationError("eval.alpha must lie in (0, 1)");
    for (std::size_t i = 0; i < compare.size(); ++i)
      for (std::size_t j = i + 1; j < compare.size(); ++j)
        if (compare[i] == compare[j]) throw ValidationError("compare lists model " + to_string(compare[i]) + " twice");
    (void)train_config();
  }
};

namespace config_detail {

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::vector<std::string>&)> set;
  std::function<std::string(const RunConfig&)> toml;  // value as a TOML literal
};

inline std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

inline std::string one(const std::string& key, const std::vector<std::string>& v) {
  if (v.size() != 1) throw ValidationError(key + " expects a single value");
  return v[0];
}

template <class Int>
Int integer(const std::string& key, const std::vector<std::string>& v) {
  const auto r = text::parse_int<Int>(one(key, v));
  if (!r) throw ValidationError(key + ": '" + v[0] + "' is not a valid non-negative integer");
  return *r;
}

inline double real(const std::string& key, const std::vector<std::string>& v) {
  const auto r = text::parse_double(one(key, v));
  if (!r || !std::isfinite(*r)) throw ValidationError(key + ": '" + v[0] + "' is not a finite number");
  return *r;
}

inline bool boolean(const std::string& key, const std::vector<std::string>& v) {
  const auto s = one(key, v);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ValidationError(key + ": '" + s + "' is not a boolean");
}

template <class F>
auto rethrow_as(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    if (msg.rfind(key, 0) == 0) throw;
    throw ValidationError(key + ": " + msg);
  }
}

inline std::string num(double v) { return text::format_double(v); }
inline std::string num(std::uint64_t v) { return std::to_string(v); }

inline const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    auto add = [&](std::string name, auto set, auto toml) { k.push_back({std::move(name), set, toml}); };
    add("seed", [](RunConfig& c, const auto& v) { c.seed = integer<std::uint64_t>("seed", v); },
        [](const RunConfig& c) { return num(c.seed); });
    add("preset", [](RunConfig& c, const auto& v) { c.preset = rethrow_as("preset", [&] { return preset_from_string(one("preset", v)); }); },
        [](const RunConfig& c) { return quote(to_string(c.preset)); });
    add("model", [](RunConfig& c, const auto& v) { c.model = rethrow_as("model", [&] { return model_kind_from_string(one("model", v)); }); },
        [](const RunConfig& c) { return quote(to_string(c.model)); });
    add("compare",
        [](RunConfig& c, const auto& v) {
          c.compare.clear();
          for (const auto& s : v) c.compare.push_back(rethrow_as("compare", [&] { return model_kind_from_string(s); }));
        },
        [](const RunConfig& c) {
          std::string s = "[";
          for (std::size_t i = 0; i < c.compare.size(); ++i) s += (i ? ", " : "") + quote(to_string(c.compare[i]));
          return s + "]";
        });
    add("jobs", [](RunConfig& c, const auto& v) { c.jobs = integer<std::size_t>("jobs", v); },
        [](const RunConfig& c) { return num(c.jobs); });
    add("out", [](RunConfig& c, const auto& v) { c.out = one("out", v); }, [](const RunConfig& c) { return quote(c.out); });
    add("force", [](RunConfig& c, const auto& v) { c.force = boolean("force", v); },
        [](const RunConfig& c) { return std::string(c.force ? "true" : "false"); });
    add("data", [](RunConfig& c, const auto& v) { c.data = one("data", v); }, [](const RunConfig& c) { return quote(c.data); });

    add("train.iterations", [](RunConfig& c, const auto& v) { c.iterations = integer<std::size_t>("train.iterations", v); },
        [](const RunConfig& c) { return num(c.train_config().iterations); });
    add("train.batch_size", [](RunConfig& c, const auto& v) { c.batch_size = integer<std::size_t>("train.batch_size", v); },
        [](const RunConfig& c) { return num(c.train_config().batch_size); });
    add("train.eval_interval",
        [](RunConfig& c, const auto& v) { c.eval_interval = integer<std::size_t>("train.eval_interval", v); },
        [](const RunConfig& c) { return num(c.eval_interval); });
    add("train.init_std", [](RunConfig& c, const auto& v) { c.init_std = real("train.init_std", v); },
        [](const RunConfig& c) { return num(c.init_std); });
    add("train.init_bias", [](RunConfig& c, const auto& v) { c.init_bias = real("train.init_bias", v); },
        [](const RunConfig& c) { return num(c.init_bias); });
    add("train.dropout_reading",
        [](RunConfig& c, const auto& v) {
          c.dropout_reading =
              rethrow_as("train.dropout_reading", [&] { return dropout_reading_from_string(one("train.dropout_reading", v)); });
        },
        [](const RunConfig& c) { return quote(to_string(c.dropout_reading)); });

    add("adam.alpha", [](RunConfig& c, const auto& v) { c.adam.alpha = real("adam.alpha", v); },
        [](const RunConfig& c) { return num(c.adam.alpha); });
    add("adam.beta1", [](RunConfig& c, const auto& v) { c.adam.beta1 = real("adam.beta1", v); },
        [](const RunConfig& c) { return num(c.adam.beta1); });
    add("adam.beta2", [](RunConfig& c, const auto& v) { c.adam.beta2 = real("adam.beta2", v); },
        [](const RunConfig& c) { return num(c.adam.beta2); });
    add("adam.epsilon", [](RunConfig& c, const auto& v) { c.adam.epsilon = real("adam.epsilon", v); },
        [](const RunConfig& c) { return num(c.adam.epsilon); });

    add("cv.folds", [](RunConfig& c, const auto& v) { c.folds = integer<std::size_t>("cv.folds", v); },
        [](const RunConfig& c) { return num(c.folds); });
    add("cv.fold_seed", [](RunConfig& c, const auto& v) { c.fold_seed = integer<std::uint64_t>("cv.fold_seed", v); },
        [](const RunConfig& c) { return num(c.resolved_fold_seed()); });
    add("cv.holdout_fold",
        [](RunConfig& c, const auto& v) {
          if (one("cv.holdout_fold", v) == "none")
            c.holdout_fold.reset();
          else
            c.holdout_fold = integer<std::size_t>("cv.holdout_fold", v);
        },
        [](const RunConfig& c) { return c.holdout_fold ? num(*c.holdout_fold) : quote("none"); });

    add("eval.levene_center",
        [](RunConfig& c, const auto& v) {
          c.eval.levene_center = rethrow_as("eval.levene_center",
                                            [&] { return stats::levene_center_from_string(one("eval.levene_center", v)); });
        },
        [](const RunConfig& c) { return quote(stats::to_string(c.eval.levene_center)); });
    add("eval.icc_variant",
        [](RunConfig& c, const auto& v) {
          c.eval.icc_variant =
              rethrow_as("eval.icc_variant", [&] { return stats::icc_variant_from_string(one("eval.icc_variant", v)); });
        },
        [](const RunConfig& c) { return quote(stats::to_string(c.eval.icc_variant)); });
    add("eval.alpha", [](RunConfig& c, const auto& v) { c.eval.alpha = real("eval.alpha", v); },
        [](const RunConfig& c) { return num(c.eval.alpha); });

    add("synth.patients", [](RunConfig& c, const auto& v) { c.synth_patients = integer<std::size_t>("synth.patients", v); },
        [](const RunConfig& c) { return num(c.synth_patients); });
    add("synth.strides", [](RunConfig& c, const auto& v) { c.synth_strides = integer<std::size_t>("synth.strides", v); },
        [](const RunConfig& c) { return num(c.synth_strides); });
    add("synth.noise_std", [](RunConfig& c, const auto& v) { c.synth_noise_std = real("synth.noise_std", v); },
        [](const RunConfig& c) { return num(c.synth_noise_std); });
    add("synth.amplitude", [](RunConfig& c, const auto& v) { c.synth_amplitude = real("synth.amplitude", v); },
        [](const RunConfig& c) { return num(c.synth_amplitude); });

    add("predict.checkpoints", [](RunConfig& c, const auto& v) { c.checkpoints = v; },
        [](const RunConfig& c) {
          std::string s = "[";
          for (std::size_t i = 0; i < c.checkpoints.size(); ++i) s += (i ? ", " : "") + quote(c.checkpoints[i]);
          return s + "]";
        });
    add("predict.input", [](RunConfig& c, const auto& v) { c.input = one("predict.input", v); },
        [](const RunConfig& c) { return quote(c.input); });
    return k;
  }();
  return table;
}

inline const Key* find_key(const std::string& name) {
  for (const auto& k : keys())
    if (k.name == name) return &k;
  return nullptr;
}

inline std::string unquote(std::string_view v, const std::string& where) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      if (v[i] == '\\' && i + 2 < v.size()) ++i;
      out += v[i];
    }
    return out;
  }
  if (!v.empty() && (v.front() == '"' || v.back() == '"')) throw ValidationError(where + "unterminated string");
  return std::string(v);
}

/// Splits a TOML value into items: a bare or quoted scalar gives one item, a
/// [a, "b"] list gives one per element.
inline std::vector<std::string> parse_value(std::string_view v, const std::string& where) {
  v = text::trim(v);
  if (v.empty()) throw ValidationError(where + "missing value");
  if (v.front() != '[') return {unquote(v, where)};
  if (v.back() != ']') throw ValidationError(where + "unterminated list");
  std::vector<std::string> items;
  const auto inner = text::trim(v.substr(1, v.size() - 2));
  if (inner.empty()) return items;
  for (auto part : text::split(inner, ',')) {
    part = text::trim(part);
    if (part.empty()) continue;
    items.push_back(unquote(part, where));
  }
  return items;
}

inline std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

}  // namespace config_detail

/// Sets one key from its string items; throws ValidationError for unknown keys.
inline void set_config_value(RunConfig& c, const std::string& key, const std::vector<std::string>& values) {
  const auto* k = config_detail::find_key(key);
  if (k == nullptr) throw ValidationError("unknown configuration key '" + key + "'");
  k->set(c, values);
}

/// Applies a key = value document with [section] headers. Unknown keys are errors.
inline void apply_config_text(RunConfig& c, const std::string& text_in, const std::string& source = "config") {
  std::istringstream in(text_in);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    const std::string stripped = config_detail::strip_comment(line);
    const auto body = text::trim(stripped);
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ValidationError(where + "malformed section header");
      section = std::string(text::trim(body.substr(1, body.size() - 2)));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ValidationError(where + "expected key = value");
    const std::string key = std::string(text::trim(body.substr(0, eq)));
    const std::string full = section.empty() ? key : section + "." + key;
    if (config_detail::find_key(full) == nullptr) throw ValidationError(where + "unknown configuration key '" + full + "'");
    try {
      set_config_value(c, full, config_detail::parse_value(body.substr(eq + 1), where));
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      if (msg.rfind(where, 0) == 0) throw;
      throw ValidationError(where + msg);
    }
  }
}

inline void apply_config_file(RunConfig& c, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(c, ss.str(), path.string());
}

/// GAITCNN_<KEY> with dots as underscores, e.g. GAITCNN_TRAIN_ITERATIONS.
inline std::string env_name(const std::string& key) {
  std::string s = kEnvPrefix;
  for (char ch : key) s += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return s;
}

/// Applies GAITCNN_* variables for known keys. Lists are comma-separated.
inline void apply_env(RunConfig& c, const std::function<const char*(const char*)>& getenv_fn = [](const char* n) {
  return std::getenv(n);
}) {
  for (const auto& k : config_detail::keys()) {
    const auto name = env_name(k.name);
    const char* v = getenv_fn(name.c_str());
    if (v == nullptr) continue;
    std::vector<std::string> items;
    for (auto part : text::split(v, ',')) {
      part = text::trim(part);
      if (!part.empty()) items.emplace_back(part);
    }
    if (items.empty() && k.name != "compare" && k.name != "predict.checkpoints")
      throw ValidationError(name + " is empty");
    try {
      k.set(c, items);
    } catch (const ValidationError& e) {
      throw ValidationError(name + ": " + e.what());
    }
  }
}

/// Fully resolved configuration in the format read by apply_config_text.
inline std::string to_toml(const RunConfig& c) {
  std::ostringstream out;
  std::string section;
  for (const auto& k : config_detail::keys()) {
    const auto dot = k.name.find('.');
    const std::string sec = dot == std::string::npos ? "" : k.name.substr(0, dot);
    const std::string key = dot == std::string::npos ? k.name : k.name.substr(dot + 1);
    if (sec != section) {
      out << "\n[" << sec << "]\n";
      section = sec;
    }
    out << key << " = " << k.toml(c) << '\n';
  }
  return out.str();
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  for (const auto& k : config_detail::keys()) {
    auto items = config_detail::parse_value(k.toml(c), k.name + ": ");
    const auto lit = k.toml(c);
    if (!lit.empty() && lit.front() == '[')
      j[k.name] = items;
    else
      j[k.name] = items.empty() ? "" : items.front();
  }
  return j;
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : config_detail::keys()) out.push_back(k.name);
  return out;
}

}  // namespace gaitcnn
