#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaitcnn/errors.hpp"
#include "gaitcnn/nets.hpp"
#include "gaitcnn/strideprep.hpp"
#include "gaitcnn/text.hpp"

namespace gaitcnn {

using json = nlohmann::ordered_json;

/// File layout shared by checkpoints and preprocessed-stride caches:
///   8-byte magic | u32 version | u64 header length | JSON header |
///   u64 value count | little-endian float64 values | u64 FNV-1a of all preceding bytes
inline constexpr char kContainerMagic[8] = {'G', 'C', 'N', 'N', 'F', 'I', 'L', 'E'};
inline constexpr std::uint32_t kContainerVersion = 1;

namespace ckpt_detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[pos + i]);
  return v;
}
inline std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[pos + i]);
  return v;
}

}  // namespace ckpt_detail

struct Container {
  json header;
  std::vector<double> values;
};

inline std::string encode_container(const Container& c) {
  using namespace ckpt_detail;
  std::string out(kContainerMagic, sizeof kContainerMagic);
  put_u32(out, kContainerVersion);
  const std::string header = c.header.dump();
  put_u64(out, header.size());
  out += header;
  put_u64(out, c.values.size());
  out.reserve(out.size() + 8 * c.values.size() + 8);
  for (double v : c.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  put_u64(out, text::fnv1a64(out.data(), out.size()));
  return out;
}

/// Validates magic, version, sizes and checksum before anything is decoded.
inline Container decode_container(const std::string& bytes, const std::string& what = "file") {
  using namespace ckpt_detail;
  constexpr std::size_t fixed = sizeof kContainerMagic + 4 + 8 + 8 + 8;
  if (bytes.size() < fixed) throw FormatError(what + ": truncated (" + std::to_string(bytes.size()) + " bytes)");
  if (std::memcmp(bytes.data(), kContainerMagic, sizeof kContainerMagic) != 0)
    throw FormatError(what + ": not a gaitcnn file (bad magic)");
  const auto version = get_u32(bytes, 8);
  if (version != kContainerVersion)
    throw FormatError(what + ": format version " + std::to_string(version) + " not supported (expected " +
                      std::to_string(kContainerVersion) + ")");
  const auto header_len = get_u64(bytes, 12);
  if (header_len > bytes.size() - fixed) throw FormatError(what + ": truncated header");
  const std::size_t count_pos = 20 + header_len;
  const auto count = get_u64(bytes, count_pos);
  if (count > (bytes.size() - fixed - header_len) / 8 || bytes.size() != fixed + header_len + 8 * count)
    throw FormatError(what + ": truncated or oversized payload");
  const std::size_t sum_pos = bytes.size() - 8;
  if (text::fnv1a64(bytes.data(), sum_pos) != get_u64(bytes, sum_pos)) throw FormatError(what + ": checksum mismatch");
  Container c;
  try {
    c.header = json::parse(bytes.substr(20, header_len));
  } catch (const json::exception& e) {
    throw FormatError(what + ": malformed header: " + e.what());
  }
  c.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) c.values[i] = std::bit_cast<double>(get_u64(bytes, count_pos + 8 + 8 * i));
  return c;
}

inline void write_container(const std::filesystem::path& path, const Container& c) {
  const std::string bytes = encode_container(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_container(bytes, path.string());
}

// ---- JSON views of configuration types ----

inline json to_json(const ArchitectureSpec& a) {
  return {{"input", {a.input.channels, a.input.length}},
          {"conv_kernels", a.conv_kernels},
          {"kernel_lengths", a.kernel_lengths},
          {"pool_window", a.pool_window},
          {"dense_widths", a.dense_widths},
          {"dropout", a.dropout},
          {"outputs", a.outputs},
          {"padding", "same_zero"},
          {"flatten_order", "channel_major"},
          {"hidden_activation", "relu"},
          {"readout_activation", "identity"}};
}

inline ArchitectureSpec architecture_from_json(const json& j) {
  if (j.at("padding") != "same_zero" || j.at("flatten_order") != "channel_major")
    throw FormatError("unsupported padding mode or flatten order");
  ArchitectureSpec a;
  a.input = {j.at("input").at(0).get<std::size_t>(), j.at("input").at(1).get<std::size_t>()};
  a.conv_kernels = j.at("conv_kernels").get<std::vector<std::size_t>>();
  a.kernel_lengths = j.at("kernel_lengths").get<std::vector<std::size_t>>();
  a.pool_window = j.at("pool_window").get<std::size_t>();
  a.dense_widths = j.at("dense_widths").get<std::vector<std::size_t>>();
  a.dropout = j.at("dropout").get<std::vector<double>>();
  a.outputs = j.at("outputs").get<std::size_t>();
  return a;
}

inline json to_json(const TrainConfig& c) {
  return {{"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"init_std", c.init_std},
          {"init_bias", c.init_bias},
          {"adam", {{"alpha", c.adam.alpha}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
          {"seed", c.seed},
          {"eval_interval", c.eval_interval}};
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.iterations = j.at("iterations").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.init_std = j.at("init_std").get<double>();
  c.init_bias = j.at("init_bias").get<double>();
  const auto& a = j.at("adam");
  c.adam = {a.at("alpha").get<double>(), a.at("beta1").get<double>(), a.at("beta2").get<double>(),
            a.at("epsilon").get<double>()};
  c.seed = j.at("seed").get<std::uint64_t>();
  c.eval_interval = j.at("eval_interval").get<std::size_t>();
  return c;
}

inline json to_json(const TargetScaler& s) {
  json names = json::array();
  for (auto t : kCnnTargets) names.push_back(std::string(name(t)));
  return {{"targets", names}, {"min", s.min}, {"max", s.max}};
}

inline TargetScaler scaler_from_json(const json& j) {
  TargetScaler s{j.at("min").get<std::vector<double>>(), j.at("max").get<std::vector<double>>()};
  s.validate();
  return s;
}

// ---- network checkpoints ----

/// One trained network plus everything needed to use and reproduce it.
struct Checkpoint {
  ModelKind kind = ModelKind::B;
  Preset preset = Preset::paper;
  std::optional<CnnTarget> member_target;  // Model B members only
  ArchitectureSpec architecture;
  TrainConfig train_config;
  TargetScaler scaler;
  json metadata = json::object();  // run id, fold, seeds...
  Network network;
};

inline void save_checkpoint(const std::filesystem::path& path, Checkpoint ck) {
  Container c;
  auto& h = c.header;
  h["content"] = "network";
  h["model_kind"] = to_string(ck.kind);
  h["preset"] = to_string(ck.preset);
  h["member_target"] = ck.member_target ? json(std::string(name(*ck.member_target))) : json(nullptr);
  h["architecture"] = to_json(ck.architecture);
  h["train_config"] = to_json(ck.train_config);
  h["scaler"] = to_json(ck.scaler);
  h["metadata"] = ck.metadata;
  json buffers = json::array();
  for (const auto& p : ck.network.parameters()) {
    buffers.push_back({{"name", p.name}, {"count", p.values.size()}});
    c.values.insert(c.values.end(), p.values.begin(), p.values.end());
  }
  h["buffers"] = buffers;
  write_container(path, c);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const Container c = read_container(path);
  const auto& h = c.header;
  try {
    if (h.at("content") != "network") throw FormatError(path.string() + ": not a network checkpoint");
    Checkpoint ck;
    ck.kind = model_kind_from_string(h.at("model_kind").get<std::string>());
    ck.preset = preset_from_string(h.at("preset").get<std::string>());
    if (!h.at("member_target").is_null()) ck.member_target = cnn_target_from_name(h.at("member_target").get<std::string>());
    ck.architecture = architecture_from_json(h.at("architecture"));
    ck.train_config = train_config_from_json(h.at("train_config"));
    ck.scaler = scaler_from_json(h.at("scaler"));
    ck.metadata = h.at("metadata");
    Network net = build_network(ck.architecture);
    auto params = net.parameters();
    const auto& buffers = h.at("buffers");
    if (buffers.size() != params.size()) throw FormatError(path.string() + ": buffer list does not match architecture");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (buffers[i].at("name") != params[i].name || buffers[i].at("count").get<std::size_t>() != params[i].values.size())
        throw FormatError(path.string() + ": buffer " + params[i].name + " does not match architecture");
      if (offset + params[i].values.size() > c.values.size()) throw FormatError(path.string() + ": payload too short");
      std::copy_n(c.values.begin() + static_cast<std::ptrdiff_t>(offset), params[i].values.size(), params[i].values.begin());
      offset += params[i].values.size();
    }
    if (offset != c.values.size()) throw FormatError(path.string() + ": payload has trailing values");
    ck.network = std::move(net);
    return ck;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": header field missing or mistyped: " + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline std::string checkpoint_filename(ModelKind kind, std::optional<CnnTarget> member) {
  return kind == ModelKind::A ? std::string("model_A.gcnn") : "model_B_" + std::string(name(*member)) + ".gcnn";
}

/// Writes a model as one (A) or five (B) checkpoint files into `dir`; returns the paths.
inline std::vector<std::filesystem::path> save_model(const std::filesystem::path& dir, const GaitModel& m,
                                                     const json& metadata = json::object()) {
  m.validate();
  std::vector<std::filesystem::path> paths;
  for (std::size_t i = 0; i < m.members.size(); ++i) {
    Checkpoint ck;
    ck.kind = m.kind;
    ck.preset = m.preset;
    if (m.kind == ModelKind::B) ck.member_target = m.member_targets[i];
    ck.architecture = m.architecture;
    ck.train_config = m.train_config;
    ck.scaler = m.scaler;
    ck.metadata = metadata;
    ck.network = m.members[i];
    paths.push_back(dir / checkpoint_filename(m.kind, ck.member_target));
    save_checkpoint(paths.back(), std::move(ck));
  }
  return paths;
}

/// Assembles a model from its checkpoint files (one for A, five for B, any order).
inline GaitModel load_model(const std::vector<std::filesystem::path>& paths) {
  if (paths.empty()) throw ValidationError("no checkpoint files given");
  std::vector<Checkpoint> cks;
  for (const auto& p : paths) cks.push_back(load_checkpoint(p));
  GaitModel m;
  m.kind = cks.front().kind;
  m.preset = cks.front().preset;
  m.architecture = cks.front().architecture;
  m.train_config = cks.front().train_config;
  m.scaler = cks.front().scaler;
  for (const auto& ck : cks)
    if (ck.kind != m.kind || !(ck.scaler == m.scaler))
      throw ValidationError("checkpoints belong to different models");
  if (m.kind == ModelKind::A) {
    if (cks.size() != 1) throw ValidationError("Model A loads from exactly one checkpoint");
    m.members.push_back(std::move(cks.front().network));
  } else {
    for (auto t : kCnnTargets) {
      auto it = std::find_if(cks.begin(), cks.end(), [&](const Checkpoint& c) { return c.member_target == t; });
      if (it == cks.end()) throw ValidationError("Model B checkpoint for " + std::string(name(t)) + " missing");
      m.members.push_back(std::move(it->network));
      m.member_targets.push_back(t);
    }
    if (cks.size() != kCnnTargetCount) throw ValidationError("Model B loads from exactly five checkpoints");
  }
  m.validate();
  return m;
}

/// Checkpoint files of a model directory written by save_model.
inline std::vector<std::filesystem::path> find_checkpoints(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".gcnn") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// ---- preprocessed stride cache ----

inline constexpr std::size_t kCacheTail = 8 + 3;  // reference fields + temporal fields per stride

inline void save_stride_cache(const std::filesystem::path& path, const std::vector<PreparedStride>& strides,
                              const json& provenance = json::object()) {
  Container c;
  c.header["content"] = "prepared_strides";
  c.header["shape"] = {kChannels, kStrideLength};
  c.header["detection_method"] = kDetectionMethod;
  c.header["provenance"] = provenance;
  json meta = json::array();
  for (const auto& s : strides) {
    meta.push_back({{"patient_id", s.patient_id()},
                    {"stride_id", s.stride_id()},
                    {"foot", to_string(s.foot)},
                    {"original_length", s.tensor.original_length},
                    {"segment", {s.segment.start, s.segment.end, s.segment.toe_off, s.segment.source}}});
    const auto v = s.tensor.values.values();
    c.values.insert(c.values.end(), v.begin(), v.end());
    const auto& r = s.reference;
    c.values.insert(c.values.end(), {r.stride_length_cm, r.stride_width_cm, r.foot_angle_deg, r.stride_time_s,
                                     r.swing_time_s, r.stance_time_s, r.heel_contact_s, r.toe_contact_s,
                                     s.temporal.stride_time_s, s.temporal.stance_time_s, s.temporal.swing_time_s});
  }
  c.header["strides"] = meta;
  write_container(path, c);
}

inline std::vector<PreparedStride> load_stride_cache(const std::filesystem::path& path, json* provenance = nullptr) {
  const Container c = read_container(path);
  try {
    if (c.header.at("content") != "prepared_strides") throw FormatError(path.string() + ": not a stride cache");
    if (c.header.at("detection_method") != kDetectionMethod)
      throw FormatError(path.string() + ": produced by a different event detector");
    const auto& meta = c.header.at("strides");
    const std::size_t per = kChannels * kStrideLength + kCacheTail;
    if (c.values.size() != meta.size() * per) throw FormatError(path.string() + ": payload size mismatch");
    std::vector<PreparedStride> out;
    for (std::size_t i = 0; i < meta.size(); ++i) {
      const auto& m = meta[i];
      const double* v = c.values.data() + i * per;
      PreparedStride s;
      s.tensor.patient_id = m.at("patient_id").get<std::string>();
      s.tensor.stride_id = m.at("stride_id").get<std::size_t>();
      s.tensor.original_length = m.at("original_length").get<std::size_t>();
      std::copy_n(v, kChannels * kStrideLength, s.tensor.values.values().begin());
      v += kChannels * kStrideLength;
      s.foot = foot_from_string(m.at("foot").get<std::string>());
      const auto& seg = m.at("segment");
      s.segment = {seg.at(0).get<std::size_t>(), seg.at(1).get<std::size_t>(), seg.at(2).get<std::size_t>(),
                   seg.at(3).get<std::size_t>()};
      s.reference = {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
      s.temporal = {v[8], v[9], v[10]};
      out.push_back(std::move(s));
    }
    if (provenance != nullptr) *provenance = c.header.at("provenance");
    return out;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed stride cache header: " + e.what());
  }
}

}  // namespace gaitcnn
