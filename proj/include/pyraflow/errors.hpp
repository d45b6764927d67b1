#pragma once

#include <stdexcept>
#include <string>

namespace pyraflow {

/// Shape or dimension mismatch between tensors and what an operation expects.
class ShapeError : public std::runtime_error {
public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// File access / malformed file contents.
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Bad configuration value or unknown configuration key.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Training diverged (NaN loss) or could not proceed.
class TrainingError : public std::runtime_error {
public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace pyraflow
