#pragma once

#include <stdexcept>
#include <string>

namespace gazetrace {

/// Base for every error the library throws. The CLI maps each subclass to
/// one exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad command-line usage (exit 1).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent data: malformed files, violated preconditions (exit 2).
class DataError : public Error {
 public:
  using Error::Error;
};

/// File system or socket failure (exit 3).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gazetrace
