#pragma once

#include <stdexcept>
#include <string>

namespace seishet {

// Base of every error the library throws. kind() is a stable, machine-readable
// tag used by the CLI when it reports failures on stderr.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

#define SEISHET_DEFINE_ERROR(Name, tag)                             \
  class Name : public Error {                                       \
   public:                                                          \
    using Error::Error;                                             \
    const char* kind() const noexcept override { return tag; }      \
  };

SEISHET_DEFINE_ERROR(DimensionError, "dimension")
SEISHET_DEFINE_ERROR(LabelError, "label")
SEISHET_DEFINE_ERROR(ConfigError, "config")
SEISHET_DEFINE_ERROR(FormatError, "format")
SEISHET_DEFINE_ERROR(IntegrityError, "integrity")
SEISHET_DEFINE_ERROR(EvaluationError, "evaluation")
SEISHET_DEFINE_ERROR(NotFoundError, "not-found")
SEISHET_DEFINE_ERROR(IoError, "io")
SEISHET_DEFINE_ERROR(SizeError, "size")
SEISHET_DEFINE_ERROR(TrainingError, "training")

#undef SEISHET_DEFINE_ERROR

}  // namespace seishet
