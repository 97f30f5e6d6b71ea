#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace alp {

enum class ErrorCode {
    InvalidArgument,
    BehindCamera,
    InvalidResolution,
    InvalidMesh,
    DegenerateTriangle,
    EmptyMask,
    ObjectNotVisible,
    DimensionMismatch,
    NonFiniteLoss,
    TooFewViews,
    DegenerateReference,
    MalformedHeader,
    TruncatedPayload,
    UnsupportedBitDepth,
    UnsupportedColorType,
    IoError,
    ConfigError,
};

std::string_view to_string(ErrorCode code);

// Every module reports failures through this type. what() is a single line so
// the CLI can print it verbatim.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string &message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Configuration validation failure; carries the offending field name.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string &message)
        : Error(ErrorCode::ConfigError, field + ": " + message), field_(std::move(field)) {}

    const std::string &field() const noexcept { return field_; }

private:
    std::string field_;
};

} // namespace alp
