#include "loadslip/error.hpp"

namespace loadslip {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::EmptyTrajectory: return "EmptyTrajectory";
        case ErrorCode::NonMonotoneTime: return "NonMonotoneTime";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::NonUniformGrid: return "NonUniformGrid";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::GridMismatch: return "GridMismatch";
        case ErrorCode::DegenerateScan: return "DegenerateScan";
        case ErrorCode::NoLoadingSegments: return "NoLoadingSegments";
        case ErrorCode::InvalidRange: return "InvalidRange";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::ExecutorFault: return "ExecutorFault";
        case ErrorCode::CalibrationInvalid: return "CalibrationInvalid";
        case ErrorCode::InvalidPitch: return "InvalidPitch";
        case ErrorCode::OutOfBounds: return "OutOfBounds";
        case ErrorCode::FlatFrame: return "FlatFrame";
        case ErrorCode::RegistrationFailure: return "RegistrationFailure";
        case ErrorCode::UnderConstrained: return "UnderConstrained";
        case ErrorCode::SchemaMismatch: return "SchemaMismatch";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace loadslip
