#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mapdyn {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user input: dimensions, names, malformed documents.
class InputError : public Error {
 public:
  using Error::Error;
};

// Inconsistent or unsupported model structure.
class ModelError : public InputError {
 public:
  using InputError::InputError;
};

// A required measurement channel is absent from a sensor configuration.
class MissingChannelError : public InputError {
 public:
  using InputError::InputError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Cholesky pivot below the positive-definiteness threshold.
class IndefiniteMatrixError : public NumericalError {
 public:
  IndefiniteMatrixError(const std::string& what, std::ptrdiff_t pivot)
      : NumericalError(what), pivot_(pivot) {}
  std::ptrdiff_t pivot() const { return pivot_; }

 private:
  std::ptrdiff_t pivot_;
};

class RankDeficiencyError : public NumericalError {
 public:
  RankDeficiencyError(const std::string& what, std::ptrdiff_t deficiency)
      : NumericalError(what), deficiency_(deficiency) {}
  // Dimension of the unconstrained subspace.
  std::ptrdiff_t deficiency() const { return deficiency_; }

 private:
  std::ptrdiff_t deficiency_;
};

// Sensor pose estimation without enough angular excitation.
class ExcitationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace mapdyn
