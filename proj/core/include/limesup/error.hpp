#pragma once

#include <stdexcept>
#include <string>

namespace limesup {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input: malformed files, schema violations, failed preconditions.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine could not produce a usable result.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace limesup
