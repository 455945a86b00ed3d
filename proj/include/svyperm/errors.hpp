#pragma once

#include <stdexcept>
#include <string>

namespace svyperm {

// Input shape problems: missing columns, malformed cells, bad config keys.
// The CLI maps these to exit code 1.
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failures the caller may want to catch and report. Exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

class SingularMatrixError : public NumericalError {
 public:
  SingularMatrixError(const std::string& what, double gram_condition)
      : NumericalError(what), gram_condition(gram_condition) {}
  double gram_condition;
};

class EnumerationCapError : public std::runtime_error {
 public:
  EnumerationCapError(const std::string& what, unsigned long long space_size)
      : std::runtime_error(what), space_size(space_size) {}
  // saturates at 2^64 - 1 when the true size overflows
  unsigned long long space_size;
};

}  // namespace svyperm
