#pragma once

#include <stdexcept>
#include <string>

namespace wdpose {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define WDPOSE_DEFINE_ERROR(Name)          \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

WDPOSE_DEFINE_ERROR(InvalidInputError);
WDPOSE_DEFINE_ERROR(InvalidParameterError);
WDPOSE_DEFINE_ERROR(BehindCameraError);
WDPOSE_DEFINE_ERROR(FormatError);
WDPOSE_DEFINE_ERROR(IoError);
WDPOSE_DEFINE_ERROR(ShapeError);
WDPOSE_DEFINE_ERROR(NumericError);
WDPOSE_DEFINE_ERROR(UsageError);
WDPOSE_DEFINE_ERROR(DegeneratePoseError);
WDPOSE_DEFINE_ERROR(ConfigError);

#undef WDPOSE_DEFINE_ERROR

}  // namespace wdpose
