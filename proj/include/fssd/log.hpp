#pragma once

#include <string>

namespace fssd {

enum class LogLevel { error = 0, info = 1, debug = 2 };

// Parsed once from FSSD_LOG_LEVEL (error|info|debug); unset means info and a
// bad value is itself an error.
LogLevel log_level();

// One line to stderr when level is enabled. Messages never carry timestamps;
// the startup header is the only place one may appear.
void log_line(LogLevel level, const std::string& message);

inline void log_error(const std::string& m) { log_line(LogLevel::error, m); }
inline void log_info(const std::string& m) { log_line(LogLevel::info, m); }
inline void log_debug(const std::string& m) { log_line(LogLevel::debug, m); }

// "fssd <command> started <UTC time>" at info level. Output files stay
// byte-identical across reruns because wall time stops here.
void log_header(const std::string& command);

}  // namespace fssd
