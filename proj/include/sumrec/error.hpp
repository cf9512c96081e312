#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sumrec {

enum class Errc {
    // corpus
    MissingFile,
    SchemaViolation,
    DanglingSpotReference,
    ScoreOutOfRange,
    EmptyDataset,
    // prompts
    TemplateMismatch,
    WrongExemplarCount,
    InsufficientExemplars,
    InvalidExemplar,
    ContextOverflow,
    // llm gateway
    AuthError,
    RateLimited,
    TransportError,
    EmptyCompletion,
    UnscriptedRequest,
    // scoring
    UnparseableScore,
    SummarySplitError,
    MissingArtifact,
    RemoteScorerUnavailable,
    FailureReport,
    // metrics
    CoverageGap,
    // pipeline
    InvalidConfig,
};

std::string_view to_string(Errc code) noexcept;

/// Single exception type for the library; `code()` identifies the failure class.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message);

    Errc code() const noexcept { return code_; }

    /// Same code, message prefixed with `context`.
    Error with_context(std::string_view context) const;

private:
    Errc code_;
};

}  // namespace sumrec
