#pragma once

#include <stdexcept>
#include <string>

namespace rqrf {

/// Base of every exception the library throws. The kind maps onto the CLI exit codes.
class Error : public std::runtime_error {
 public:
  enum class Kind { kConfig, kArtifact, kNumeric, kGeneration, kInvalidArgument, kInternal };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Invalid configuration. `field` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(Kind::kConfig, field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Missing, unreadable or mismatched input artifact.
class ArtifactError : public Error {
 public:
  explicit ArtifactError(const std::string& what) : Error(Kind::kArtifact, what) {}
};

/// Non-finite values or divergence.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(Kind::kNumeric, what) {}
};

class GenerationError : public Error {
 public:
  explicit GenerationError(const std::string& what) : Error(Kind::kGeneration, what) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(Kind::kInvalidArgument, what) {}
};

/// Broken internal contract: shape mismatch, id out of range.
class InternalError : public Error {
 public:
  explicit InternalError(const std::string& what) : Error(Kind::kInternal, what) {}
};

}  // namespace rqrf
