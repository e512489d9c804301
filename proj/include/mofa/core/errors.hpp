#pragma once

#include <stdexcept>
#include <string>

namespace mofa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MOFA_DEFINE_ERROR(Name)            \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

MOFA_DEFINE_ERROR(IoError);
MOFA_DEFINE_ERROR(FormatError);
MOFA_DEFINE_ERROR(CorruptionError);
MOFA_DEFINE_ERROR(DomainError);
MOFA_DEFINE_ERROR(GeometryError);
MOFA_DEFINE_ERROR(RenderError);
MOFA_DEFINE_ERROR(ConfigError);
MOFA_DEFINE_ERROR(NumericError);
MOFA_DEFINE_ERROR(LookupError);
MOFA_DEFINE_ERROR(TrainingError);
MOFA_DEFINE_ERROR(CapabilityError);

#undef MOFA_DEFINE_ERROR

}  // namespace mofa
