#pragma once

// Chat-completion access with a content-addressed disk cache, exponential
// backoff retries and an in-flight limit for live traffic. A Gateway handle is
// safe to share across threads.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "sumrec/error.hpp"
#include "sumrec/prompts.hpp"

namespace sumrec {

inline constexpr const char* kDefaultModelId = "gpt-3.5-turbo-16k-0613";

struct CompletionRequest {
    std::string model_id = kDefaultModelId;
    double temperature = 0.0;
    PromptMessages messages;
    int max_output_units = 512;
};

struct CompletionResult {
    std::string text;
    bool cached = false;
    std::chrono::milliseconds latency{0};
    int attempts = 0;  // backend invocations made for this call
    std::optional<nlohmann::json> provider_usage;
};

/// Canonical JSON of (model_id, temperature, messages); the cache key hashes this.
nlohmann::json canonical_request(const CompletionRequest& request);

/// Hex SHA-256 of the canonical request. Message order is significant.
std::string cache_key(const CompletionRequest& request);

/// Wire body for an OpenAI-style chat-completions endpoint.
nlohmann::json wire_body(const CompletionRequest& request);

/// Text of the first choice's message content; throws EmptyCompletion if absent.
std::string extract_completion_text(const nlohmann::json& response);

// ---------------------------------------------------------------------------
// Backends

class Backend {
public:
    virtual ~Backend() = default;

    struct Reply {
        std::string text;
        std::optional<nlohmann::json> usage;
    };

    /// One round trip. Throws Error with AuthError, RateLimited, TransportError,
    /// EmptyCompletion or UnscriptedRequest.
    virtual Reply send(const CompletionRequest& request) = 0;

    /// Live backends are subject to the gateway's in-flight limit.
    virtual bool is_live() const { return true; }
};

/// Scripted backend for tests and offline runs. Rules are tried in order; the
/// first match answers. A rule may script a sequence of outcomes (errors or
/// texts); the last outcome repeats once the sequence is exhausted.
class MockBackend : public Backend {
public:
    using Outcome = std::variant<std::string, Errc>;

    struct Rule {
        enum class Match { Digest, Substring, Any };
        Match match = Match::Any;
        std::string pattern;
        std::vector<Outcome> outcomes;
    };

    MockBackend() = default;
    explicit MockBackend(std::vector<Rule> rules);

    static Rule on_digest(std::string digest, std::string text);
    static Rule on_substring(std::string needle, std::string text);
    static Rule on_substring(std::string needle, std::vector<Outcome> outcomes);
    static Rule fallback(std::string text);

    /// Script file: {"rules": [{"digest"|"contains"|"any": ..., "reply": "..."} | {..., "replies": [...]}]}.
    /// A reply of the form "!ErrorName" scripts that error.
    static std::shared_ptr<MockBackend> from_file(const std::filesystem::path& file);

    Reply send(const CompletionRequest& request) override;
    bool is_live() const override { return false; }

    std::size_t calls() const noexcept { return calls_.load(); }

private:
    std::vector<Rule> rules_;
    std::vector<std::unique_ptr<std::atomic<std::size_t>>> cursor_;
    std::atomic<std::size_t> calls_{0};
};

/// OpenAI-compatible HTTP backend. Base URL like "https://api.openai.com/v1";
/// requests go to <base>/chat/completions.
class HttpBackend : public Backend {
public:
    HttpBackend(std::string base_url, std::string api_key,
                std::chrono::seconds timeout = std::chrono::seconds(120));

    /// Reads SUMREC_LLM_BASE_URL and SUMREC_LLM_API_KEY; AuthError when the key is unset.
    static std::shared_ptr<HttpBackend> from_environment();

    Reply send(const CompletionRequest& request) override;

private:
    std::string scheme_host_;
    std::string path_prefix_;
    std::string api_key_;
    std::chrono::seconds timeout_;
};

// ---------------------------------------------------------------------------
// Cache

struct CacheEntry {
    std::string key;
    std::string value;
    std::string created_at;  // ISO-8601 UTC
};

/// One JSON file per digest under <root>/<first-2-hex>/<digest>.json. Writes go
/// to a temporary file and are renamed into place.
class DiskCache {
public:
    explicit DiskCache(std::filesystem::path root);

    std::optional<CacheEntry> get(const std::string& key) const;
    void put(const CacheEntry& entry, const nlohmann::json& request);
    std::filesystem::path path_for(const std::string& key) const;
    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
    std::mutex write_mutex_;
    std::atomic<std::uint64_t> tmp_counter_{0};
};

// ---------------------------------------------------------------------------

struct GatewayOptions {
    std::filesystem::path cache_dir = "cache";
    bool use_cache = true;
    int max_attempts = 5;
    std::chrono::milliseconds initial_backoff{1000};
    double backoff_factor = 2.0;
    std::size_t max_in_flight = 4;
    /// Replaceable for tests.
    std::function<void(std::chrono::milliseconds)> sleep;
};

struct GatewayStats {
    std::size_t requests = 0;
    std::size_t cache_hits = 0;
    std::size_t backend_calls = 0;
    std::size_t retries = 0;
};

class Gateway {
public:
    Gateway(std::shared_ptr<Backend> backend, GatewayOptions options);

    /// Cache hit: cached=true, no backend call. Miss: backend call with retries
    /// on RateLimited/TransportError/EmptyCompletion, result persisted before return.
    CompletionResult complete(const CompletionRequest& request);

    GatewayStats stats() const;
    const GatewayOptions& options() const { return options_; }

private:
    std::optional<CompletionResult> lookup(const std::string& key) const;
    Backend::Reply call_backend(const CompletionRequest& request);

    std::shared_ptr<Backend> backend_;
    GatewayOptions options_;
    std::unique_ptr<DiskCache> cache_;

    mutable std::mutex stats_mutex_;
    GatewayStats stats_;

    std::mutex slot_mutex_;
    std::condition_variable slot_cv_;
    std::size_t in_flight_ = 0;
};

}  // namespace sumrec
