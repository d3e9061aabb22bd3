#pragma once

#include <stdexcept>
#include <string>

namespace msv {

/// Invalid configuration or arguments. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unusable input data. CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure inside a named sampler block. CLI exit code 4.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(std::string block, const std::string& what)
      : std::runtime_error(block + ": " + what), block_(std::move(block)) {}
  const std::string& block() const { return block_; }

 private:
  std::string block_;
};

}  // namespace msv
