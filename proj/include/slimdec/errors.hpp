#pragma once

#include <stdexcept>
#include <string>

namespace slimdec {

// Base for every error the library raises. category() is a stable,
// machine-parsable token used by the CLI for its one-line error reports.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string &what)
      : std::runtime_error(what), category_(std::move(category)) {}

  const std::string &category() const noexcept { return category_; }

 private:
  std::string category_;
};

#define SLIMDEC_DEFINE_ERROR(Name, token)                                  \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string &what) : Error(token, what) {}         \
  };

SLIMDEC_DEFINE_ERROR(ShapeError, "shape")
SLIMDEC_DEFINE_ERROR(DomainError, "domain")
SLIMDEC_DEFINE_ERROR(ConfigError, "config")
SLIMDEC_DEFINE_ERROR(CapacityError, "capacity")
SLIMDEC_DEFINE_ERROR(StateError, "state")
SLIMDEC_DEFINE_ERROR(DivergenceError, "divergence")
SLIMDEC_DEFINE_ERROR(IoError, "io")
SLIMDEC_DEFINE_ERROR(UnsupportedFormatError, "unsupported_format")
SLIMDEC_DEFINE_ERROR(CorruptionError, "corruption")
SLIMDEC_DEFINE_ERROR(ValidationError, "validation")
SLIMDEC_DEFINE_ERROR(SchemaError, "schema")

#undef SLIMDEC_DEFINE_ERROR

}  // namespace slimdec
