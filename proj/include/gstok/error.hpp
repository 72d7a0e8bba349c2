#pragma once

#include <stdexcept>
#include <string>

namespace gstok {

enum class ErrorKind {
  kInvalidParameter,
  kDegenerateCovariance,
  kInvalidScene,
  kShape,
  kEmptyStatistics,
  kOutOfRange,
  kDivergence,
  kIo,
  kFormat,
};

const char* to_string(ErrorKind kind);

// All recoverable failures in the library are reported through this type.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace gstok
