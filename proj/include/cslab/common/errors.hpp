#pragma once

#include <stdexcept>
#include <string>

namespace cslab {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input data that violates a documented precondition (e.g. soft targets
// that do not sum to one).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// API misuse such as stepping a finished episode.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite losses or gradients during optimization.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PlanningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingArtifactError : public std::runtime_error {
 public:
  explicit MissingArtifactError(const std::string& path)
      : std::runtime_error("missing artifact: " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace cslab
