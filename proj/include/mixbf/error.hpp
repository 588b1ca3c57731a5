#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mixbf {

// Root of the library's exception hierarchy. Callers that only care about
// "something in mixbf failed" can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Ã₋ₖ had a pivot below the singularity threshold.
class SingularSystem : public Error {
 public:
  SingularSystem(const std::string& what, std::size_t pivot_index)
      : Error(what), pivot_index_(pivot_index) {}
  std::size_t pivot_index() const noexcept { return pivot_index_; }

 private:
  std::size_t pivot_index_;
};

// A posterior-mean estimate lies outside the range the prior allows.
class BoundsViolation : public Error {
 public:
  using Error::Error;
};

class DegenerateOccupancy : public Error {
 public:
  using Error::Error;
};

// Every mixture component has zero density at the current state.
class InfeasibleState : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mixbf
