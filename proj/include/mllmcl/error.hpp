#pragma once

#include <stdexcept>
#include <string>

namespace mllmcl {

enum class ErrorKind {
    dimension_mismatch,
    zero_norm,
    non_positive_temperature,
    insufficient_points,
    invalid_config,
    empty_corpus,
    batch_too_small,
    parse_error,
    missing_field,
    token_id_out_of_range,
    position_out_of_range,
    shape_mismatch,
    invalid_margin,
    label_out_of_range,
    empty_targets,
    length_mismatch,
    schema_mismatch,
    io_error,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::dimension_mismatch: return "DimensionMismatch";
    case ErrorKind::zero_norm: return "ZeroNorm";
    case ErrorKind::non_positive_temperature: return "NonPositiveTemperature";
    case ErrorKind::insufficient_points: return "InsufficientPoints";
    case ErrorKind::invalid_config: return "InvalidConfig";
    case ErrorKind::empty_corpus: return "EmptyCorpus";
    case ErrorKind::batch_too_small: return "BatchTooSmall";
    case ErrorKind::parse_error: return "ParseError";
    case ErrorKind::missing_field: return "MissingField";
    case ErrorKind::token_id_out_of_range: return "TokenIdOutOfRange";
    case ErrorKind::position_out_of_range: return "PositionOutOfRange";
    case ErrorKind::shape_mismatch: return "ShapeMismatch";
    case ErrorKind::invalid_margin: return "InvalidMargin";
    case ErrorKind::label_out_of_range: return "LabelOutOfRange";
    case ErrorKind::empty_targets: return "EmptyTargets";
    case ErrorKind::length_mismatch: return "LengthMismatch";
    case ErrorKind::schema_mismatch: return "SchemaMismatch";
    case ErrorKind::io_error: return "IOError";
    }
    return "Unknown";
}

/// All library failures are reported as `Error`; `kind()` lets callers
/// branch without parsing the message.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

}  // namespace mllmcl
