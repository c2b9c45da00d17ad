#pragma once

#include <stdexcept>
#include <string>

namespace ensloss {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameter or argument outside the documented domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or degenerate input data (prices, returns, CSV files).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed (non-convergence, overflow, no bracket).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class OverflowError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Root finder was handed an interval without a sign change.
class BracketError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Order doubling did not settle; carries the last two estimates.
class QuadratureError : public NumericalError {
 public:
  QuadratureError(const std::string& what, double previous, double last)
      : NumericalError(what + " (last estimates " + std::to_string(previous) +
                       ", " + std::to_string(last) + ")"),
        previous_(previous),
        last_(last) {}

  double previous() const noexcept { return previous_; }
  double last() const noexcept { return last_; }

 private:
  double previous_;
  double last_;
};

namespace detail {

inline void require(bool condition, const char* message) {
  if (!condition) throw DomainError(message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw DomainError(message);
}

}  // namespace detail
}  // namespace ensloss
