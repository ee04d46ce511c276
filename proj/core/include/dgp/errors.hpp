#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dgp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or layer widths.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, failed factorisations and other floating-point failures.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefiniteError : public NumericalError {
 public:
  NotPositiveDefiniteError(const std::string& what, std::vector<double> ladder)
      : NumericalError(what), ladder_(std::move(ladder)) {}

  /// Jitter values that were tried, in order.
  const std::vector<double>& ladder() const noexcept { return ladder_; }

 private:
  std::vector<double> ladder_;
};

/// Malformed input files: CSV data and model configuration.
class DataError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace dgp
