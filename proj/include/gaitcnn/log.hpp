#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace gaitcnn {

enum class LogLevel { debug = 0, info = 1, warning = 2, error = 3 };

inline const char* to_string(LogLevel l) {
  switch (l) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warning: return "warning";
    case LogLevel::error: return "error";
  }
  return "?";
}

using LogSink = std::function<void(LogLevel, const std::string&)>;

namespace detail {
struct LogState {
  std::mutex mu;
  LogLevel threshold = LogLevel::warning;
  LogSink sink = [](LogLevel l, const std::string& m) { std::cerr << "[" << to_string(l) << "] " << m << '\n'; };
};
inline LogState& log_state() {
  static LogState s;
  return s;
}
}  // namespace detail

inline void set_log_level(LogLevel l) {
  std::lock_guard lock(detail::log_state().mu);
  detail::log_state().threshold = l;
}

/// Replaces the sink and returns the previous one.
inline LogSink set_log_sink(LogSink sink) {
  std::lock_guard lock(detail::log_state().mu);
  return std::exchange(detail::log_state().sink, std::move(sink));
}

inline void log(LogLevel l, const std::string& msg) {
  auto& s = detail::log_state();
  std::lock_guard lock(s.mu);
  if (l >= s.threshold && s.sink) s.sink(l, msg);
}
inline void log_info(const std::string& msg) { log(LogLevel::info, msg); }
inline void log_warning(const std::string& msg) { log(LogLevel::warning, msg); }

/// Swaps the sink for the lifetime of the object, e.g. to collect warnings in tests.
class ScopedLogSink {
 public:
  explicit ScopedLogSink(LogSink sink, LogLevel level = LogLevel::debug) {
    auto& s = detail::log_state();
    std::lock_guard lock(s.mu);
    prev_sink_ = std::exchange(s.sink, std::move(sink));
    prev_level_ = std::exchange(s.threshold, level);
  }
  ~ScopedLogSink() {
    auto& s = detail::log_state();
    std::lock_guard lock(s.mu);
    s.sink = std::move(prev_sink_);
    s.threshold = prev_level_;
  }
  ScopedLogSink(const ScopedLogSink&) = delete;
  ScopedLogSink& operator=(const ScopedLogSink&) = delete;

 private:
  LogSink prev_sink_;
  LogLevel prev_level_{};
};

}  // namespace gaitcnn
