#pragma once

#include <stdexcept>
#include <string>

namespace gramdyn {

/// Base of every error raised by the library. `kind()` is the stable,
/// machine-readable name printed by the CLI.
class Error : public std::runtime_error {
 public:
  Error(const char* kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  const char* kind() const noexcept { return kind_; }

 private:
  const char* kind_;
};

#define GRAMDYN_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  };

GRAMDYN_DEFINE_ERROR(NotFound)
GRAMDYN_DEFINE_ERROR(SchemaError)
GRAMDYN_DEFINE_ERROR(FormatError)
GRAMDYN_DEFINE_ERROR(ValidationError)
GRAMDYN_DEFINE_ERROR(IoError)
GRAMDYN_DEFINE_ERROR(NumericalError)
GRAMDYN_DEFINE_ERROR(ContractViolation)
GRAMDYN_DEFINE_ERROR(DegenerateAttention)

#undef GRAMDYN_DEFINE_ERROR

}  // namespace gramdyn
