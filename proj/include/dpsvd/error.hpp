#pragma once

#include <stdexcept>
#include <string>

namespace dpsvd {

// Maps onto the CLI exit codes (1, 2, 3).
enum class ErrorKind { usage = 1, data = 2, numerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string what)
      : std::runtime_error(std::move(what)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void usage_error(const std::string& msg) {
  throw Error(ErrorKind::usage, msg);
}
[[noreturn]] inline void data_error(const std::string& msg) {
  throw Error(ErrorKind::data, msg);
}
[[noreturn]] inline void numerical_error(const std::string& msg) {
  throw Error(ErrorKind::numerical, msg);
}

}  // namespace dpsvd
