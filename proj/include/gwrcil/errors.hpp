#pragma once

#include <stdexcept>
#include <string>

namespace gwrcil {

// Base of every error raised by the library. Callers that only need a
// diagnostic can catch this; tests catch the concrete kinds.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define GWRCIL_DEFINE_ERROR(Name)                  \
    class Name : public Error {                    \
    public:                                        \
        using Error::Error;                        \
    }

GWRCIL_DEFINE_ERROR(NormalizationError);
GWRCIL_DEFINE_ERROR(DimensionError);
GWRCIL_DEFINE_ERROR(NumericError);
GWRCIL_DEFINE_ERROR(StateError);
GWRCIL_DEFINE_ERROR(ContractError);
GWRCIL_DEFINE_ERROR(InputError);
GWRCIL_DEFINE_ERROR(PairingError);
GWRCIL_DEFINE_ERROR(FormatError);
GWRCIL_DEFINE_ERROR(IoError);
GWRCIL_DEFINE_ERROR(ConfigError);

#undef GWRCIL_DEFINE_ERROR

}  // namespace gwrcil
