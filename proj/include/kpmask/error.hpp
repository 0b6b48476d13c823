#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kpmask {

enum class ErrorCategory {
    NotFound,
    EmptyVideo,
    InconsistentFrames,
    InvalidTarget,
    DatasetTooSmall,
    ConfigMismatch,
    InvalidTemperature,
    InvalidVariance,
    UnsupportedCheckpoint,
    IncompatibleMode,
    ShapeMismatch,
    NonFiniteLoss,
    Undefined,
    InvalidArgument,
    IoError,
    UsageError,
};

std::string_view category_name(ErrorCategory category);

/// Every failure surfaced by the library carries one category so the CLI can
/// report it as a single `ERROR <Category>: <message>` line.
class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
    throw Error(category, message);
}

}  // namespace kpmask
