#pragma once

#include <stdexcept>
#include <string>

namespace hetero {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke a precondition (dimension mismatch, bad argument range).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated input file (IDX, CSV, distribution spec).
class DataFormatError : public Error {
 public:
  using Error::Error;
};

// Bad experiment configuration or unknown key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A requested dense object would exceed the memory budget.
class ResourceError : public Error {
 public:
  using Error::Error;
};

// Hessian stayed indefinite after the jitter schedule was exhausted.
class FactorizationError : public Error {
 public:
  FactorizationError(const std::string& what, double min_eigenvalue)
      : Error(what), min_eigenvalue_(min_eigenvalue) {}
  double min_eigenvalue() const { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

// The optimizer hit its iteration cap before reaching grad_tol.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double grad_norm)
      : Error(what), grad_norm_(grad_norm) {}
  double grad_norm() const { return grad_norm_; }

 private:
  double grad_norm_;
};

}  // namespace hetero
