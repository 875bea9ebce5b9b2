#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kprobe {

enum class ErrorCode {
    EmptyInput,
    UnknownEstimator,
    InvalidLength,
    InvalidConfig,
    ModelMismatch,
    InsufficientSamples,
    DegenerateFeatures,
    UnknownType,
    IoError,
    InvalidSpec,
    InvalidSpan,
    Unsupported,
    CorruptData,
    ParseError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so the
/// CLI can map it onto a stable exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace kprobe
