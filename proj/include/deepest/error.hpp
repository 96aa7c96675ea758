#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace deepest {

// Every failure surfaced by the library carries a stable machine-readable
// code (e.g. "SampleRateMismatch") next to the human-readable message. The
// CLI and the HTTP service forward both verbatim.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void fail(std::string code, const std::string& message) {
  throw Error(std::move(code), message);
}

}  // namespace deepest
