#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace kgqa {

// Process exit codes used by the command-line front end.
enum class ErrorCode : int {
  kConfig = 2,
  kData = 3,
  kRemote = 4,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error(ErrorCode::kConfig, message) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& message)
      : Error(ErrorCode::kData, message) {}
};

class NotFoundError : public DataError {
 public:
  explicit NotFoundError(const std::string& message) : DataError(message) {}
};

// Transport failures, HTTP error statuses and malformed remote payloads.
class RemoteError : public Error {
 public:
  RemoteError(const std::string& message, int status = 0)
      : Error(ErrorCode::kRemote, message), status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace kgqa
