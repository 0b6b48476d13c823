#include "kpmask/error.hpp"

namespace kpmask {

std::string_view category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::NotFound: return "NotFound";
        case ErrorCategory::EmptyVideo: return "EmptyVideo";
        case ErrorCategory::InconsistentFrames: return "InconsistentFrames";
        case ErrorCategory::InvalidTarget: return "InvalidTarget";
        case ErrorCategory::DatasetTooSmall: return "DatasetTooSmall";
        case ErrorCategory::ConfigMismatch: return "ConfigMismatch";
        case ErrorCategory::InvalidTemperature: return "InvalidTemperature";
        case ErrorCategory::InvalidVariance: return "InvalidVariance";
        case ErrorCategory::UnsupportedCheckpoint: return "UnsupportedCheckpoint";
        case ErrorCategory::IncompatibleMode: return "IncompatibleMode";
        case ErrorCategory::ShapeMismatch: return "ShapeMismatch";
        case ErrorCategory::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCategory::Undefined: return "Undefined";
        case ErrorCategory::InvalidArgument: return "InvalidArgument";
        case ErrorCategory::IoError: return "IoError";
        case ErrorCategory::UsageError: return "UsageError";
    }
    return "Unknown";
}

}  // namespace kpmask
