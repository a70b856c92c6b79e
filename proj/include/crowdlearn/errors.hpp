#pragma once

#include <stdexcept>
#include <string>

namespace crowdlearn {

// Base for every error the library raises on bad input or degenerate data.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define CROWDLEARN_ERROR(Name)                                        \
    class Name : public Error {                                       \
    public:                                                           \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
    }

CROWDLEARN_ERROR(EmptyResult);
CROWDLEARN_ERROR(UnknownUser);
CROWDLEARN_ERROR(NoContributions);
CROWDLEARN_ERROR(DimensionMismatch);
CROWDLEARN_ERROR(LengthMismatch);
CROWDLEARN_ERROR(DegenerateInput);
CROWDLEARN_ERROR(IndexMismatch);
CROWDLEARN_ERROR(NoPairs);
CROWDLEARN_ERROR(ConfigInvalid);
CROWDLEARN_ERROR(FormatError);

#undef CROWDLEARN_ERROR

} // namespace crowdlearn
