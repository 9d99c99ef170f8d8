#pragma once

#include <string_view>

namespace imgsearch {

enum class LogLevel { Debug, Info, Warn, Error, Off };

/// Global threshold; messages below it are dropped. Logs go to stderr.
void set_log_level(LogLevel level) noexcept;
LogLevel log_level() noexcept;

void log_message(LogLevel level, std::string_view message);

inline void log_debug(std::string_view m) { log_message(LogLevel::Debug, m); }
inline void log_info(std::string_view m) { log_message(LogLevel::Info, m); }
inline void log_warn(std::string_view m) { log_message(LogLevel::Warn, m); }
inline void log_error(std::string_view m) { log_message(LogLevel::Error, m); }

}  // namespace imgsearch
