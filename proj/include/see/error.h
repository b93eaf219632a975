#pragma once

#include <stdexcept>
#include <string>

namespace see {

// Base class for every runtime failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data (datasets, manifests, registry files, configs) failed validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// An expert or base backend could not be reached or answered abnormally.
class TransportError : public Error {
 public:
  enum class Kind { Connection, Timeout, Status, Protocol };

  TransportError(Kind kind, std::string target, const std::string& detail)
      : Error(target + ": " + detail), kind_(kind), target_(std::move(target)) {}

  Kind kind() const noexcept { return kind_; }
  const std::string& target() const noexcept { return target_; }

 private:
  Kind kind_;
  std::string target_;
};

const char* to_string(TransportError::Kind kind);

}  // namespace see
