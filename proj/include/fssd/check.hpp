#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace fssd {

// All recoverable failures (bad shapes, bad files, bad config) throw Error.
// The CLI catches it at the top level and turns it into a one-line message
// plus a nonzero exit code; tests catch it to assert on error paths.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

template <typename... Args>
std::string cat_message(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

[[noreturn]] inline void fail_check(const char* file, int line, const char* expr,
                                    const std::string& msg) {
  std::ostringstream os;
  os << "check failed: " << expr;
  if (!msg.empty()) os << ": " << msg;
  os << " (" << file << ":" << line << ")";
  throw Error(os.str());
}

}  // namespace detail

#define FSSD_CHECK(cond, ...)                                    \
  do {                                                           \
    if (!(cond)) {                                               \
      ::fssd::detail::fail_check(__FILE__, __LINE__, #cond,      \
                                 ::fssd::detail::cat_message(__VA_ARGS__)); \
    }                                                            \
  } while (0)

#define FSSD_FAIL(...)                                           \
  ::fssd::detail::fail_check(__FILE__, __LINE__, "fatal",        \
                             ::fssd::detail::cat_message(__VA_ARGS__))

}  // namespace fssd
