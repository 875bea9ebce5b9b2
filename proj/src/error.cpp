#include "kprobe/error.hpp"

namespace kprobe {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::UnknownEstimator: return "UnknownEstimator";
    case ErrorCode::InvalidLength: return "InvalidLength";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ModelMismatch: return "ModelMismatch";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::DegenerateFeatures: return "DegenerateFeatures";
    case ErrorCode::UnknownType: return "UnknownType";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidSpan: return "InvalidSpan";
    case ErrorCode::Unsupported: return "Unsupported";
    case ErrorCode::CorruptData: return "CorruptData";
    case ErrorCode::ParseError: return "ParseError";
    }
    return "Unknown";
}

} // namespace kprobe
