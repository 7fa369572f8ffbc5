#pragma once

#include <stdexcept>
#include <string>

namespace msface {

/// Broad failure classes. The CLI maps these onto exit codes.
enum class ErrorKind {
  invalid_argument,  // caller violated a precondition (usage error)
  data,              // input data is malformed, missing or unusable
  io,                // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, const std::string& msg,
                    ErrorKind kind = ErrorKind::invalid_argument) {
  if (!cond) throw Error(kind, msg);
}

[[noreturn]] inline void fail_data(const std::string& msg) {
  throw Error(ErrorKind::data, msg);
}

[[noreturn]] inline void fail_io(const std::string& msg) {
  throw Error(ErrorKind::io, msg);
}

}  // namespace msface
