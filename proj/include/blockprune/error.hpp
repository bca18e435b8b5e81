#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace blockprune {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument value (sparsity out of range, n >= m, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data: tensor files, manifests, calibration shapes.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A factorization or solve could not proceed. Usually fixed by more damping.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public NumericalError {
 public:
  NotPositiveDefinite(std::size_t pivot, const std::string& what)
      : NumericalError(what), pivot_(pivot) {}
  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

class SingularSystem : public NumericalError {
 public:
  SingularSystem(std::size_t batch_index, const std::string& what)
      : NumericalError(what), batch_index_(batch_index) {}
  std::size_t batch_index() const noexcept { return batch_index_; }

 private:
  std::size_t batch_index_;
};

}  // namespace blockprune
