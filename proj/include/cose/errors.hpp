#pragma once

#include <stdexcept>
#include <string>

namespace cose {

// Error taxonomy shared by all modules. Every failure mode named in the
// operation contracts maps to exactly one of these types so callers can
// discriminate without string matching.

struct InvalidInputError : std::invalid_argument {
  explicit InvalidInputError(const std::string& what) : std::invalid_argument(what) {}
};

struct OutOfRangeError : std::out_of_range {
  explicit OutOfRangeError(const std::string& what) : std::out_of_range(what) {}
};

struct DuplicateIdError : std::runtime_error {
  explicit DuplicateIdError(const std::string& what) : std::runtime_error(what) {}
};

struct MissingRecordError : std::runtime_error {
  explicit MissingRecordError(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyBufferError : std::runtime_error {
  explicit EmptyBufferError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericalFaultError : std::runtime_error {
  explicit NumericalFaultError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cose
