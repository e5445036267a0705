#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace drsub {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument or malformed input (maps to CLI exit code 2).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// File could not be read or written (maps to CLI exit code 1).
class IoError : public Error {
 public:
  using Error::Error;
};

/// An iterative numerical routine failed to converge.
class NumericalError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

inline void require_dim(Index got, Index want, const char* what) {
  if (got != want) {
    throw ValidationError(std::string(what) + ": dimension mismatch (got " + std::to_string(got) +
                          ", expected " + std::to_string(want) + ")");
  }
}

}  // namespace detail
}  // namespace drsub
