#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace decif {

/// Typed failure taxonomy for the whole pipeline. Parsers and the backend
/// never abort the process: every failure surfaces as one of these.
enum class ErrorCode {
    // transport
    Network,
    RateLimited,
    MalformedResponse,
    Auth,
    // parsing
    EmptyOutput,
    MissingPlaceholder,
    UnknownPlaceholder,
    MissingField,
    BadBoolean,
    CountMismatch,
    UnparseableLine,
    // storage
    Io,
    DuplicateId,
    CorruptManifest,
    MissingCheckpoint,
    UnknownFormat,
    // configuration / contract
    Config,
    Precondition,
    ExhaustedPool,
    AllIterationsFailed,
    StageFailed,
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::Network: return "Network";
        case ErrorCode::RateLimited: return "RateLimited";
        case ErrorCode::MalformedResponse: return "MalformedResponse";
        case ErrorCode::Auth: return "Auth";
        case ErrorCode::EmptyOutput: return "EmptyOutput";
        case ErrorCode::MissingPlaceholder: return "MissingPlaceholder";
        case ErrorCode::UnknownPlaceholder: return "UnknownPlaceholder";
        case ErrorCode::MissingField: return "MissingField";
        case ErrorCode::BadBoolean: return "BadBoolean";
        case ErrorCode::CountMismatch: return "CountMismatch";
        case ErrorCode::UnparseableLine: return "UnparseableLine";
        case ErrorCode::Io: return "Io";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::CorruptManifest: return "CorruptManifest";
        case ErrorCode::MissingCheckpoint: return "MissingCheckpoint";
        case ErrorCode::UnknownFormat: return "UnknownFormat";
        case ErrorCode::Config: return "Config";
        case ErrorCode::Precondition: return "Precondition";
        case ErrorCode::ExhaustedPool: return "ExhaustedPool";
        case ErrorCode::AllIterationsFailed: return "AllIterationsFailed";
        case ErrorCode::StageFailed: return "StageFailed";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string message, std::string detail = {})
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code),
          detail_(std::move(detail)) {}

    ErrorCode code() const { return code_; }

    /// Extra payload: offending line, raw body, field name, ...
    const std::string& detail() const { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

/// Structured-output parse failure.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Transport-layer failure; carries HTTP status where applicable.
class BackendError : public Error {
public:
    BackendError(ErrorCode code, std::string message, int http_status = 0,
                 std::string body = {}, int retry_after_ms = -1)
        : Error(code, std::move(message), std::move(body)),
          http_status_(http_status),
          retry_after_ms_(retry_after_ms) {}

    int http_status() const { return http_status_; }
    const std::string& body() const { return detail(); }

    /// Server backoff hint from a 429, in milliseconds; -1 when absent.
    int retry_after_ms() const { return retry_after_ms_; }

    bool retryable() const {
        return code() == ErrorCode::Network || code() == ErrorCode::RateLimited;
    }

private:
    int http_status_ = 0;
    int retry_after_ms_ = -1;
};

} // namespace decif
