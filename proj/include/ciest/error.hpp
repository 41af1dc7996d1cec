#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ciest {

/// Base for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad edge, shape mismatch, out-of-domain argument.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// One failed check from scenario or schedule validation.
struct ValidationIssue {
  std::string code;     // stable machine-readable key, e.g. "persistence"
  std::string message;  // human-readable reason
};

/// A scenario or run pre-check failed. Carries every violated condition.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<ValidationIssue> issues);
  ValidationError(std::string code, std::string message);
  const std::vector<ValidationIssue>& issues() const { return issues_; }

 private:
  std::vector<ValidationIssue> issues_;
};

/// Recursion produced a non-finite or exploding state.
class DivergenceError : public Error {
 public:
  DivergenceError(std::uint64_t iteration, const std::string& what);
  std::uint64_t iteration() const { return iteration_; }

 private:
  std::uint64_t iteration_;
};

/// Lattice index outside the representable guard band.
class QuantizerOverflow : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ciest
