#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ace {

/// Bad input data or arguments (shapes, ranges, empty collections).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or unsupported configuration. May carry several itemized problems.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& message)
      : std::runtime_error(message), problems_{message} {}
  explicit ConfigError(std::vector<std::string> problems);

  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// A referenced asset (model, dataset, run) does not exist.
class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation failed at run time (non-finite gradients, IO failures).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws ValidationError with `message` unless `condition` holds.
inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace ace
