#pragma once

#include <stdexcept>
#include <string>

namespace ckpt_arbiter {

// Input data is malformed, incomplete or fails an integrity check.
// The CLI maps every DataError to exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IngestError : public DataError {
public:
    using DataError::DataError;
};

class InsufficientSamplesError : public DataError {
public:
    InsufficientSamplesError(std::size_t kept, std::size_t min_samples)
        : DataError("insufficient samples after curation: kept " + std::to_string(kept) +
                    " < min_samples " + std::to_string(min_samples)),
          kept_(kept), min_samples_(min_samples) {}

    std::size_t kept() const noexcept { return kept_; }
    std::size_t min_samples() const noexcept { return min_samples_; }

private:
    std::size_t kept_;
    std::size_t min_samples_;
};

class ArtifactCollisionError : public DataError {
public:
    using DataError::DataError;
};

class IntegrityError : public DataError {
public:
    using DataError::DataError;
};

// Judge outputs were too unreliable to trust the stage.
class DataQualityError : public DataError {
public:
    using DataError::DataError;
};

// Judge request could not be built (wrong arity, foreign responses).
class RequestError : public DataError {
public:
    using DataError::DataError;
};

enum class VerdictErrorKind { unparseable, incomplete_ranking, unknown_label, out_of_range };

class VerdictParseError : public DataError {
public:
    VerdictParseError(VerdictErrorKind kind, const std::string& what)
        : DataError(what), kind_(kind) {}
    VerdictErrorKind kind() const noexcept { return kind_; }

private:
    VerdictErrorKind kind_;
};

// Transport-level failure talking to a judge backend (exit code 3).
enum class BackendFailureKind { timeout, transport, bad_status };

class JudgeBackendError : public std::runtime_error {
public:
    JudgeBackendError(BackendFailureKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    BackendFailureKind kind() const noexcept { return kind_; }

private:
    BackendFailureKind kind_;
};

class UnknownTicketError : public DataError {
public:
    using DataError::DataError;
};

class ConflictError : public DataError {
public:
    using DataError::DataError;
};

}  // namespace ckpt_arbiter
