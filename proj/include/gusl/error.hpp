#pragma once

#include <stdexcept>
#include <string>

namespace gusl {

// Bad arguments or violated preconditions (CLI exit code 1).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// File could not be read or written (CLI exit code 2).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unusable data or model content: checksum failures, truncation,
// degenerate datasets (CLI exit code 3).
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionError : public IntegrityError {
 public:
  using IntegrityError::IntegrityError;
};

// Normal equations without regularization on rank-deficient data.
class RankDeficientError : public IntegrityError {
 public:
  using IntegrityError::IntegrityError;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

}  // namespace detail
}  // namespace gusl
