#pragma once

#include <stdexcept>
#include <string>

namespace driftbench {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Contract violations: bad shapes, invalid ranges, mismatched lengths.
class SpecError : public Error {
 public:
  using Error::Error;
};

// Lookup outside a declared domain (unknown month, index >= dimension).
class RangeError : public Error {
 public:
  using Error::Error;
};

// Malformed text input; message carries the line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Unrecognized file layout: bad magic, unsupported version, bad month label.
class FormatError : public Error {
 public:
  using Error::Error;
};

// File shorter than its own header claims.
class CorruptError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf escaped a numeric kernel.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse: backward without forward, unsupported operation for a model kind.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Training cannot proceed on the given data (e.g. single-class input).
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Every hyperparameter trial failed.
class SearchError : public Error {
 public:
  using Error::Error;
};

}  // namespace driftbench
