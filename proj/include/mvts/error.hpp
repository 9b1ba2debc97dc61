#pragma once

#include <stdexcept>
#include <string>

namespace mvts {

// Process exit codes mirror these categories (0 is success).
enum class ErrorCategory : int {
  runtime = 1,
  input = 2,
  config = 3,
};

const char* category_name(ErrorCategory category) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

/// Tensor shapes that do not compose.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& message)
      : Error(ErrorCategory::runtime, message) {}
};

/// A parameter outside its documented domain.
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& message)
      : Error(ErrorCategory::config, message) {}
};

/// Malformed or unreadable input file.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message)
      : Error(ErrorCategory::input, message) {}
};

/// A metric that is undefined for the given input (e.g. single-class AUC).
class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& message)
      : Error(ErrorCategory::input, message) {}
};

}  // namespace mvts
