#pragma once

#include <stdexcept>
#include <string>

namespace quirky {

// Base for every failure raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent input data: degenerate classes, shape mismatches,
// malformed files. The CLI maps these to exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

// Numerical failure: singular systems, non-PD covariances, divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace quirky
