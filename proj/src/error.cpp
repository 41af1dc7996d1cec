#include "ciest/error.hpp"

namespace ciest {

ValidationError::ValidationError(std::vector<ValidationIssue> issues)
    : Error([&] {
        std::string msg = "validation failed";
        for (const auto& i : issues) msg += "\n  [" + i.code + "] " + i.message;
        return msg;
      }()),
      issues_(std::move(issues)) {}

DivergenceError::DivergenceError(std::uint64_t iteration, const std::string& what)
    : Error("diverged at iteration " + std::to_string(iteration) + ": " + what),
      iteration_(iteration) {}

ValidationError::ValidationError(std::string code, std::string message)
    : ValidationError(std::vector<ValidationIssue>{{std::move(code), std::move(message)}}) {}

}  // namespace ciest
