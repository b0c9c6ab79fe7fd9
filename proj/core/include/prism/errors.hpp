#pragma once

#include <stdexcept>
#include <string>

namespace prism {

// Error taxonomy shared by the library and the CLI. Exit-code contract:
// 0 success, 2 config error, 3 data error, 4 numeric error, 5 I/O error.
class Error : public std::runtime_error {
 public:
  Error(const std::string& msg, int exit_code)
      : std::runtime_error(msg), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg, 2) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg, 3) {}
};

// Shape mismatches surface as data errors at the CLI boundary.
class DimError : public Error {
 public:
  explicit DimError(const std::string& msg) : Error(msg, 3) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg, 4) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg, 5) {}
};

}  // namespace prism
