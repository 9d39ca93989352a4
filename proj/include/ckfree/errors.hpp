// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ckfree {

/// Invalid configuration or argument combination. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values encountered in the numerical path. Carries the iteration
/// it was detected at, -1 when outside a training loop.
class NumericDivergenceError : public std::runtime_error {
 public:
  explicit NumericDivergenceError(const std::string& what, long iteration = -1)
      : std::runtime_error(iteration >= 0 ? what + " (iteration " + std::to_string(iteration) + ")" : what),
        iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

/// API misuse, e.g. backward without a matching forward.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed on-disk artifact (trace, checkpoint, network profile).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Recovery requested that the active strategy cannot perform,
/// e.g. a first/last stage failure under plain weighted averaging.
class UnsupportedRecoveryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ckfree
