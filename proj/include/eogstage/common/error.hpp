#pragma once

#include <stdexcept>
#include <string>

namespace eogstage {

// Root of the library's exception hierarchy. The CLI maps each branch to an
// exit code: UsageError/ConfigError -> 1, DataError -> 2, everything else -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input files (EDF, hypnograms, checkpoints, manifests).
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf, failed convergence, invalid numeric arguments.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace eogstage
