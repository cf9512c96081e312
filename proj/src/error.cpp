#include "sumrec/error.hpp"

#include <fmt/core.h>

namespace sumrec {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
    case Errc::MissingFile: return "MissingFile";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::DanglingSpotReference: return "DanglingSpotReference";
    case Errc::ScoreOutOfRange: return "ScoreOutOfRange";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::TemplateMismatch: return "TemplateMismatch";
    case Errc::WrongExemplarCount: return "WrongExemplarCount";
    case Errc::InsufficientExemplars: return "InsufficientExemplars";
    case Errc::InvalidExemplar: return "InvalidExemplar";
    case Errc::ContextOverflow: return "ContextOverflow";
    case Errc::AuthError: return "AuthError";
    case Errc::RateLimited: return "RateLimited";
    case Errc::TransportError: return "TransportError";
    case Errc::EmptyCompletion: return "EmptyCompletion";
    case Errc::UnscriptedRequest: return "UnscriptedRequest";
    case Errc::UnparseableScore: return "UnparseableScore";
    case Errc::SummarySplitError: return "SummarySplitError";
    case Errc::MissingArtifact: return "MissingArtifact";
    case Errc::RemoteScorerUnavailable: return "RemoteScorerUnavailable";
    case Errc::FailureReport: return "FailureReport";
    case Errc::CoverageGap: return "CoverageGap";
    case Errc::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(fmt::format("{}: {}", to_string(code), message)), code_(code) {}

Error Error::with_context(std::string_view context) const {
    std::string_view msg = what();
    // strip our own "<Code>: " prefix so it is not repeated
    auto prefix = to_string(code_);
    if (msg.substr(0, prefix.size()) == prefix && msg.size() >= prefix.size() + 2) {
        msg.remove_prefix(prefix.size() + 2);
    }
    return Error(code_, fmt::format("{}: {}", context, msg));
}

}  // namespace sumrec
