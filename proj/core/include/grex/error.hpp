#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace grex {

/// Library-wide error with a short machine-greppable code. The CLI prints
/// failures as `error[CODE]: message` on stderr, one line per failure.
///
/// Codes in use:
///   E_RANGE     value or index outside its documented domain
///   E_SHAPE     tensor/edge-vector dimension mismatch
///   E_NONFINITE NaN or Inf produced by a numeric operation
///   E_STATE     object used outside its contract (wrong tape, untaped y, ...)
///   E_IO        file system failure (missing path, unwritable directory)
///   E_FORMAT    malformed JSON / manifest / checkpoint contents
///   E_TASK      model and dataset (or target) disagree on the task
///   E_USAGE     bad command-line or config input
///   E_DIVERGED  training loss became non-finite
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace grex
