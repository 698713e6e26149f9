#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cotforge {

enum class ErrorKind {
  invalid_input,
  missing_artifact,
  backend_unavailable,
  protocol,
  template_error,
  configuration,
  candidate_parse,
  selector,
  critique,
  invalid_plan,
  invalid_record,
  unrecoverable_run,
  storage,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // Backend failures map to CLI exit code 2, everything else to 1.
  bool is_backend_failure() const noexcept {
    return kind_ == ErrorKind::backend_unavailable || kind_ == ErrorKind::protocol;
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace cotforge
