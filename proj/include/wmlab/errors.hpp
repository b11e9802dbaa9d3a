#pragma once

#include <stdexcept>
#include <string>

namespace wmlab {

enum class ErrorCode {
  kInvalidArgument,
  kName,
  kConfig,
  kInsufficientText,
  kTypeMismatch,
  kAttackUnavailable,
  kData,
  kIo,
};

const char* error_code_name(ErrorCode code);

// Base of every error the library throws. The code drives CLI exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

class NameError : public Error {
 public:
  explicit NameError(const std::string& name)
      : Error(ErrorCode::kName, "unknown algorithm: " + name) {}
};

// Carries the dotted path of the offending config key.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(ErrorCode::kConfig, key + ": " + what), key_(std::move(key)) {}

  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class InsufficientText : public Error {
 public:
  explicit InsufficientText(const std::string& what)
      : Error(ErrorCode::kInsufficientText, what) {}
};

class TypeMismatch : public Error {
 public:
  explicit TypeMismatch(const std::string& what)
      : Error(ErrorCode::kTypeMismatch, what) {}
};

class AttackUnavailable : public Error {
 public:
  explicit AttackUnavailable(const std::string& what)
      : Error(ErrorCode::kAttackUnavailable, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCode::kData, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::kIo, what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorCode::kInvalidArgument, what);
}

}  // namespace wmlab
