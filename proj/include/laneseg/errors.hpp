#pragma once

#include <stdexcept>
#include <string>

namespace laneseg {

// Error categories map 1:1 onto CLI exit codes:
//   1 usage/config, 2 data/shape, 3 numeric/state, 4 network
class Error : public std::runtime_error {
 public:
  Error(int exit_code, const std::string& what)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& w) : Error(1, w) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& w) : Error(1, w) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& w) : Error(2, w) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& w) : Error(2, w) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& w) : Error(3, w) {}
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& w) : Error(3, w) {}
};

class NetError : public Error {
 public:
  explicit NetError(const std::string& w) : Error(4, w) {}
};

}  // namespace laneseg
