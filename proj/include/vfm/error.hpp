#pragma once

#include <stdexcept>
#include <string>

namespace vfm {

enum class ErrorCode {
  InvalidInput,
  NoLiquid,
  FractionsExceedOne,
  NoConvergence,
  Shape,
  Io,
  Usage,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by the critical-pressure-ratio solver when it runs out of iterations.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_iterate)
      : Error(ErrorCode::NoConvergence, what), last_iterate_(last_iterate) {}
  double last_iterate() const noexcept { return last_iterate_; }

 private:
  double last_iterate_;
};

}  // namespace vfm
