#pragma once

#include <stdexcept>
#include <string>

namespace lrgw {

// Base class for everything thrown by this library.
class error : public std::runtime_error {
 public:
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Caller handed us something invalid (bad shapes, non-finite data,
// infeasible parameters). Maps to CLI exit code 2.
class input_error : public error {
 public:
  explicit input_error(const std::string& what) : error(what) {}
};

// An iteration budget ran out before the requested tolerance was met.
// Carries the residual observed on the last sweep. Maps to exit code 3.
class convergence_error : public error {
 public:
  convergence_error(const std::string& what, double last_residual)
      : error(what), last_residual(last_residual) {}
  double last_residual;
};

// Overflow, underflow, singular systems and friends. Maps to exit code 4.
class numerical_error : public error {
 public:
  explicit numerical_error(const std::string& what) : error(what) {}
};

// Data read back from disk violates its declared invariants.
class validation_error : public error {
 public:
  explicit validation_error(const std::string& what) : error(what) {}
};

}  // namespace lrgw
