#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace loadslip {

enum class ErrorCode {
    EmptyTrajectory,
    NonMonotoneTime,
    NonFinite,
    NonUniformGrid,
    TooFewSamples,
    GridMismatch,
    DegenerateScan,
    NoLoadingSegments,
    InvalidRange,
    InvalidConfig,
    ExecutorFault,
    CalibrationInvalid,
    InvalidPitch,
    OutOfBounds,
    FlatFrame,
    RegistrationFailure,
    UnderConstrained,
    SchemaMismatch,
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure in the library is reported through this type; `code()` lets
// callers dispatch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace loadslip
