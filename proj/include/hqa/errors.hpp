#pragma once

#include <stdexcept>
#include <string>

namespace hqa {

// Caller broke a documented precondition (length mismatch, out-of-range input).
class ContractViolation : public std::invalid_argument {
public:
  explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

// Invalid configuration values or an unusable configuration combination.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file. Messages carry line/record context.
class ParseError : public std::runtime_error {
public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// AUC requested for a label set containing a single class.
class UndefinedAucError : public std::domain_error {
public:
  explicit UndefinedAucError(const std::string& what) : std::domain_error(what) {}
};

// Training produced something unusable (e.g. a non-finite gradient).
class TrainingError : public std::runtime_error {
public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hqa
