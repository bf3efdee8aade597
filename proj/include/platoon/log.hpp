#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <utility>

namespace platoon {

enum class LogLevel : int { kOff = 0, kError = 1, kInfo = 2, kDebug = 3 };

namespace detail {

inline LogLevel parse_log_level(const char* s) {
  if (s == nullptr) return LogLevel::kError;
  if (std::strcmp(s, "off") == 0 || std::strcmp(s, "0") == 0)
    return LogLevel::kOff;
  if (std::strcmp(s, "error") == 0 || std::strcmp(s, "1") == 0)
    return LogLevel::kError;
  if (std::strcmp(s, "info") == 0 || std::strcmp(s, "2") == 0)
    return LogLevel::kInfo;
  if (std::strcmp(s, "debug") == 0 || std::strcmp(s, "3") == 0)
    return LogLevel::kDebug;
  return LogLevel::kError;
}

}  // namespace detail

// Process-wide log threshold, initialized once from PLATOON_SMPC_LOG.
// Recognized values: off, error, info, debug (or 0..3). Unset -> error.
inline LogLevel& log_level() {
  static LogLevel level = detail::parse_log_level(std::getenv("PLATOON_SMPC_LOG"));
  return level;
}

template <typename... Args>
inline void log_at(LogLevel level, const char* tag, const char* fmt,
                   Args&&... args) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  std::fprintf(stderr, "[%s] ", tag);
  if constexpr (sizeof...(Args) == 0) {
    std::fputs(fmt, stderr);
  } else {
    std::fprintf(stderr, fmt, std::forward<Args>(args)...);
  }
  std::fputc('\n', stderr);
}

template <typename... Args>
inline void log_error(const char* fmt, Args&&... args) {
  log_at(LogLevel::kError, "error", fmt, std::forward<Args>(args)...);
}

template <typename... Args>
inline void log_info(const char* fmt, Args&&... args) {
  log_at(LogLevel::kInfo, "info", fmt, std::forward<Args>(args)...);
}

template <typename... Args>
inline void log_debug(const char* fmt, Args&&... args) {
  log_at(LogLevel::kDebug, "debug", fmt, std::forward<Args>(args)...);
}

}  // namespace platoon
