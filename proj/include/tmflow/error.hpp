#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tmflow {

// Raised when an argument lies outside the mathematical domain of an operation.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Raised when a configuration violates one or more preconditions.
// Every violated precondition is listed, not just the first.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const { return violations_; }

private:
    std::vector<std::string> violations_;
};

// Raised when a run produces non-finite values or otherwise cannot continue.
class NumericalAbort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace tmflow
