#include "sumrec/llm_gateway.hpp"

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include <unistd.h>

#include <httplib.h>

#include <fmt/core.h>

#include "sumrec/digest.hpp"

namespace sumrec {

namespace fs = std::filesystem;
using nlohmann::json;

json canonical_request(const CompletionRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages.messages) {
        messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    }
    return json{{"model", request.model_id}, {"temperature", request.temperature}, {"messages", std::move(messages)}};
}

std::string cache_key(const CompletionRequest& request) { return digest_json(canonical_request(request)); }

json wire_body(const CompletionRequest& request) {
    json body = canonical_request(request);
    body["max_tokens"] = request.max_output_units;
    return body;
}

std::string extract_completion_text(const json& response) {
    const json* content = nullptr;
    if (response.is_object()) {
        auto choices = response.find("choices");
        if (choices != response.end() && choices->is_array() && !choices->empty()) {
            const json& first = (*choices)[0];
            auto msg = first.find("message");
            if (msg != first.end() && msg->is_object()) {
                auto c = msg->find("content");
                if (c != msg->end() && c->is_string()) content = &*c;
            }
        }
    }
    if (!content || content->get_ref<const std::string&>().empty()) {
        throw Error(Errc::EmptyCompletion, "response has no first-choice message content");
    }
    return content->get<std::string>();
}

namespace {

std::string utc_now_iso8601() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

bool retryable(Errc code) {
    return code == Errc::RateLimited || code == Errc::TransportError || code == Errc::EmptyCompletion;
}

}  // namespace

// ---------------------------------------------------------------------------
// MockBackend

MockBackend::MockBackend(std::vector<Rule> rules) : rules_(std::move(rules)) {
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        if (rules_[i].outcomes.empty()) throw Error(Errc::InvalidConfig, fmt::format("mock rule {} has no outcome", i));
        cursor_.push_back(std::make_unique<std::atomic<std::size_t>>(0));
    }
}

MockBackend::Rule MockBackend::on_digest(std::string digest, std::string text) {
    return Rule{Rule::Match::Digest, std::move(digest), {std::move(text)}};
}

MockBackend::Rule MockBackend::on_substring(std::string needle, std::string text) {
    return Rule{Rule::Match::Substring, std::move(needle), {std::move(text)}};
}

MockBackend::Rule MockBackend::on_substring(std::string needle, std::vector<Outcome> outcomes) {
    return Rule{Rule::Match::Substring, std::move(needle), std::move(outcomes)};
}

MockBackend::Rule MockBackend::fallback(std::string text) { return Rule{Rule::Match::Any, {}, {std::move(text)}}; }

namespace {

MockBackend::Outcome parse_outcome(const std::string& s) {
    if (!s.empty() && s[0] == '!') {
        for (Errc c : {Errc::AuthError, Errc::RateLimited, Errc::TransportError, Errc::EmptyCompletion,
                       Errc::UnscriptedRequest}) {
            if (to_string(c) == std::string_view(s).substr(1)) return c;
        }
    }
    return s;
}

}  // namespace

std::shared_ptr<MockBackend> MockBackend::from_file(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(Errc::MissingFile, file.string());
    std::vector<Rule> rules;
    try {
        json doc = json::parse(in);
        for (const json& r : doc.at("rules")) {
            Rule rule;
            if (r.contains("digest")) {
                rule.match = Rule::Match::Digest;
                rule.pattern = r.at("digest").get<std::string>();
            } else if (r.contains("contains")) {
                rule.match = Rule::Match::Substring;
                rule.pattern = r.at("contains").get<std::string>();
            } else {
                rule.match = Rule::Match::Any;
            }
            if (r.contains("replies")) {
                for (const json& x : r.at("replies")) rule.outcomes.push_back(parse_outcome(x.get<std::string>()));
            } else {
                rule.outcomes.push_back(parse_outcome(r.at("reply").get<std::string>()));
            }
            rules.push_back(std::move(rule));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidConfig, fmt::format("{}: {}", file.string(), e.what()));
    }
    return std::make_shared<MockBackend>(std::move(rules));
}

Backend::Reply MockBackend::send(const CompletionRequest& request) {
    calls_.fetch_add(1);
    const std::string text = request.messages.text();
    std::string digest;
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const Rule& rule = rules_[i];
        bool hit = false;
        switch (rule.match) {
        case Rule::Match::Any: hit = true; break;
        case Rule::Match::Substring: hit = text.find(rule.pattern) != std::string::npos; break;
        case Rule::Match::Digest:
            if (digest.empty()) digest = cache_key(request);
            hit = digest == rule.pattern;
            break;
        }
        if (!hit) continue;
        std::size_t n = cursor_[i]->fetch_add(1);
        const Outcome& out = rule.outcomes[std::min(n, rule.outcomes.size() - 1)];
        if (const Errc* code = std::get_if<Errc>(&out)) throw Error(*code, "scripted mock failure");
        const std::string& reply = std::get<std::string>(out);
        if (reply.empty()) throw Error(Errc::EmptyCompletion, "mock returned empty text");
        return Reply{reply, std::nullopt};
    }
    throw Error(Errc::UnscriptedRequest, "no mock rule matches request " + cache_key(request).substr(0, 12));
}

// ---------------------------------------------------------------------------
// HttpBackend

HttpBackend::HttpBackend(std::string base_url, std::string api_key, std::chrono::seconds timeout)
    : api_key_(std::move(api_key)), timeout_(timeout) {
    auto scheme = base_url.find("://");
    if (scheme == std::string::npos) throw Error(Errc::InvalidConfig, "base URL lacks a scheme: " + base_url);
    auto path = base_url.find('/', scheme + 3);
    scheme_host_ = base_url.substr(0, path);
    path_prefix_ = path == std::string::npos ? "" : base_url.substr(path);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::shared_ptr<HttpBackend> HttpBackend::from_environment() {
    const char* key = std::getenv("SUMREC_LLM_API_KEY");
    if (!key || !*key) throw Error(Errc::AuthError, "SUMREC_LLM_API_KEY is not set");
    const char* base = std::getenv("SUMREC_LLM_BASE_URL");
    return std::make_shared<HttpBackend>(base && *base ? base : "https://api.openai.com/v1", key);
}

Backend::Reply HttpBackend::send(const CompletionRequest& request) {
    httplib::Client client(scheme_host_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
    auto res = client.Post(path_prefix_ + "/chat/completions", headers, wire_body(request).dump(), "application/json");
    if (!res) {
        throw Error(Errc::TransportError, fmt::format("POST {}: {}", scheme_host_, httplib::to_string(res.error())));
    }
    if (res->status == 401 || res->status == 403) throw Error(Errc::AuthError, fmt::format("HTTP {}", res->status));
    if (res->status == 429) throw Error(Errc::RateLimited, "HTTP 429");
    if (res->status != 200) {
        throw Error(Errc::TransportError, fmt::format("HTTP {}: {}", res->status, res->body.substr(0, 200)));
    }
    json body;
    try {
        body = json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw Error(Errc::TransportError, std::string("malformed response body: ") + e.what());
    }
    Reply reply{extract_completion_text(body), std::nullopt};
    if (body.contains("usage")) reply.usage = body["usage"];
    return reply;
}

// ---------------------------------------------------------------------------
// DiskCache

DiskCache::DiskCache(fs::path root) : root_(std::move(root)) {}

fs::path DiskCache::path_for(const std::string& key) const { return root_ / key.substr(0, 2) / (key + ".json"); }

std::optional<CacheEntry> DiskCache::get(const std::string& key) const {
    std::ifstream in(path_for(key));
    if (!in) return std::nullopt;
    try {
        json doc = json::parse(in);
        if (doc.at("key").get<std::string>() != key) return std::nullopt;
        return CacheEntry{key, doc.at("value").get<std::string>(), doc.value("created_at", "")};
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

void DiskCache::put(const CacheEntry& entry, const json& request) {
    const fs::path target = path_for(entry.key);
    json doc{{"key", entry.key}, {"value", entry.value}, {"created_at", entry.created_at}, {"request", request}};
    std::lock_guard lock(write_mutex_);
    fs::create_directories(target.parent_path());
    const fs::path tmp = target.parent_path() /
                         fmt::format("{}.tmp.{}.{}", entry.key, ::getpid(), tmp_counter_.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << doc.dump(2) << '\n';
        if (!out) throw Error(Errc::TransportError, "failed writing cache entry " + tmp.string());
    }
    fs::rename(tmp, target);
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(std::move(options)) {
    if (!backend_) throw Error(Errc::InvalidConfig, "gateway needs a backend");
    if (options_.max_attempts < 1) options_.max_attempts = 1;
    if (options_.max_in_flight < 1) options_.max_in_flight = 1;
    if (!options_.sleep) options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    if (options_.use_cache) cache_ = std::make_unique<DiskCache>(options_.cache_dir);
}

GatewayStats Gateway::stats() const {
    std::lock_guard lock(stats_mutex_);
    return stats_;
}

std::optional<CompletionResult> Gateway::lookup(const std::string& key) const {
    if (!cache_) return std::nullopt;
    auto entry = cache_->get(key);
    if (!entry) return std::nullopt;
    CompletionResult r;
    r.text = std::move(entry->value);
    r.cached = true;
    return r;
}

Backend::Reply Gateway::call_backend(const CompletionRequest& request) {
    if (!backend_->is_live()) return backend_->send(request);
    {
        std::unique_lock lock(slot_mutex_);
        slot_cv_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
        ++in_flight_;
    }
    struct Release {
        Gateway* g;
        ~Release() {
            {
                std::lock_guard lock(g->slot_mutex_);
                --g->in_flight_;
            }
            g->slot_cv_.notify_one();
        }
    } release{this};
    return backend_->send(request);
}

CompletionResult Gateway::complete(const CompletionRequest& request) {
    const std::string key = cache_key(request);
    {
        std::lock_guard lock(stats_mutex_);
        ++stats_.requests;
    }
    if (auto hit = lookup(key)) {
        std::lock_guard lock(stats_mutex_);
        ++stats_.cache_hits;
        return *hit;
    }

    const auto start = std::chrono::steady_clock::now();
    auto backoff = options_.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        if (attempt > 1) {
            // another worker may have persisted this response meanwhile
            if (auto hit = lookup(key)) {
                std::lock_guard lock(stats_mutex_);
                ++stats_.cache_hits;
                hit->attempts = attempt - 1;
                return *hit;
            }
        }
        try {
            {
                std::lock_guard lock(stats_mutex_);
                ++stats_.backend_calls;
            }
            Backend::Reply reply = call_backend(request);
            if (reply.text.empty()) throw Error(Errc::EmptyCompletion, "backend returned empty text");
            if (cache_) cache_->put(CacheEntry{key, reply.text, utc_now_iso8601()}, canonical_request(request));
            CompletionResult r;
            r.text = std::move(reply.text);
            r.cached = false;
            r.attempts = attempt;
            r.provider_usage = std::move(reply.usage);
            r.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
            return r;
        } catch (const Error& e) {
            if (!retryable(e.code()) || attempt >= options_.max_attempts) {
                throw e.with_context(fmt::format("after {} attempt(s)", attempt));
            }
            {
                std::lock_guard lock(stats_mutex_);
                ++stats_.retries;
            }
            options_.sleep(backoff);
            backoff = std::chrono::milliseconds(
                static_cast<std::chrono::milliseconds::rep>(static_cast<double>(backoff.count()) * options_.backoff_factor));
        }
    }
}

}  // namespace sumrec
