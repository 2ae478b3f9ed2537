#include "fssd/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <ctime>

#include "fssd/check.hpp"

namespace fssd {

namespace {

LogLevel parse_level(const char* s) {
  std::string v(s);
  if (v == "error") return LogLevel::error;
  if (v == "info") return LogLevel::info;
  if (v == "debug") return LogLevel::debug;
  FSSD_FAIL("FSSD_LOG_LEVEL must be error, info or debug, got '", v, "'");
}

const char* level_name(LogLevel level) {
  switch (level) {
    case LogLevel::error: return "error";
    case LogLevel::info: return "info";
    default: return "debug";
  }
}

}  // namespace

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("FSSD_LOG_LEVEL");
    return env ? parse_level(env) : LogLevel::info;
  }();
  return level;
}

void log_line(LogLevel level, const std::string& message) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  std::fprintf(stderr, "%s: %s\n", level_name(level), message.c_str());
}

void log_header(const std::string& command) {
  if (static_cast<int>(log_level()) < static_cast<int>(LogLevel::info)) return;
  std::time_t now = std::time(nullptr);
  char stamp[32] = "unknown-time";
  std::tm tm_utc{};
  if (gmtime_r(&now, &tm_utc)) std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  std::fprintf(stderr, "info: fssd %s started %s\n", command.c_str(), stamp);
}

}  // namespace fssd
