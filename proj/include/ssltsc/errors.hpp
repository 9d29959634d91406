#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ssltsc {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (ragged rows, non-numeric cells, shape mismatch).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Dataset cannot support the protocol (single class, single series).
class DegenerateDatasetError : public Error {
 public:
  using Error::Error;
};

/// A class has too few samples for the requested stratified draw.
class StratificationError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class EmptyBatchError : public Error {
 public:
  using Error::Error;
};

/// Broken internal contract; indicates a programming bug.
class InternalError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& what, std::int64_t last_finite_step)
      : Error(what), last_finite_step_(last_finite_step) {}
  std::int64_t last_finite_step() const noexcept { return last_finite_step_; }

 private:
  std::int64_t last_finite_step_;
};

}  // namespace ssltsc
