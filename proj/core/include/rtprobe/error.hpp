#pragma once

#include <stdexcept>
#include <string>

namespace rtprobe {

/// Base for all errors raised by the toolkit. `kind()` is a stable short tag
/// used in machine-readable error records emitted by the CLI.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message) : Error("format", message) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message) : Error("validation", message) {}
};

class CorpusError : public Error {
 public:
  explicit CorpusError(const std::string& message) : Error("corpus", message) {}
};

class AlignmentError : public Error {
 public:
  explicit AlignmentError(const std::string& message) : Error("alignment", message) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& message) : Error("dimension", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config", message) {}
};

}  // namespace rtprobe
