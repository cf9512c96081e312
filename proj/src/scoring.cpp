#include "sumrec/scoring.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include <fmt/core.h>

#include "parallel.hpp"
#include "sumrec/digest.hpp"
#include "sumrec/error.hpp"
#include "sumrec/rng.hpp"

namespace sumrec {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(EstimatorKind kind) noexcept {
    switch (kind) {
    case EstimatorKind::SumRecLLM: return "SumRecLLM";
    case EstimatorKind::BaselineLLM: return "BaselineLLM";
    case EstimatorKind::Random: return "Random";
    case EstimatorKind::HumanPassthrough: return "HumanPassthrough";
    case EstimatorKind::RemoteBiencoder: return "RemoteBiencoder";
    case EstimatorKind::RemoteDialogue: return "RemoteDialogue";
    }
    return "?";
}

std::string_view to_string(Ablation ablation) noexcept {
    switch (ablation) {
    case Ablation::None: return "None";
    case Ablation::WithoutSummary: return "WithoutSummary";
    case Ablation::WithoutRecInfo: return "WithoutRecInfo";
    case Ablation::FiveTurns: return "FiveTurns";
    }
    return "?";
}

std::optional<EstimatorKind> parse_estimator_kind(std::string_view s) noexcept {
    for (auto k : {EstimatorKind::SumRecLLM, EstimatorKind::BaselineLLM, EstimatorKind::Random,
                   EstimatorKind::HumanPassthrough, EstimatorKind::RemoteBiencoder, EstimatorKind::RemoteDialogue}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

std::optional<Ablation> parse_ablation(std::string_view s) noexcept {
    for (auto a : {Ablation::None, Ablation::WithoutSummary, Ablation::WithoutRecInfo, Ablation::FiveTurns}) {
        if (to_string(a) == s) return a;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// EstimatorConfig

bool EstimatorConfig::sumrec_family() const noexcept {
    return kind == EstimatorKind::SumRecLLM || kind == EstimatorKind::RemoteBiencoder;
}

bool EstimatorConfig::uses_llm() const noexcept {
    return kind == EstimatorKind::SumRecLLM || kind == EstimatorKind::BaselineLLM;
}

bool EstimatorConfig::remote() const noexcept {
    return kind == EstimatorKind::RemoteBiencoder || kind == EstimatorKind::RemoteDialogue;
}

bool EstimatorConfig::discrete_output() const noexcept { return uses_llm(); }

void EstimatorConfig::validate() const {
    if (ablation != Ablation::None && !sumrec_family()) {
        throw Error(Errc::InvalidConfig,
                    fmt::format("ablation {} applies only to SumRec estimators, not {}", to_string(ablation),
                                to_string(kind)));
    }
}

std::string EstimatorConfig::label() const {
    std::string base;
    switch (kind) {
    case EstimatorKind::SumRecLLM: base = "SumRec (LLM)"; break;
    case EstimatorKind::BaselineLLM: base = "LLM"; break;
    case EstimatorKind::Random: base = "Random"; break;
    case EstimatorKind::HumanPassthrough: base = "Human"; break;
    case EstimatorKind::RemoteBiencoder: base = "SumRec (Encoder)"; break;
    case EstimatorKind::RemoteDialogue: base = "Encoder"; break;
    }
    switch (ablation) {
    case Ablation::None: break;
    case Ablation::WithoutSummary: base += " w/o Sum."; break;
    case Ablation::WithoutRecInfo: base += " w/o Rec."; break;
    case Ablation::FiveTurns: base += " 5 turns"; break;
    }
    return base;
}

json EstimatorConfig::to_json() const {
    return json{{"kind", std::string(to_string(kind))},
                {"ablation", std::string(to_string(ablation))},
                {"seed", seed},
                {"exemplar_seed", exemplar_seed}};
}

EstimatorConfig EstimatorConfig::from_json(const json& j) {
    EstimatorConfig c;
    try {
        auto kind = parse_estimator_kind(j.at("kind").get<std::string>());
        if (!kind) throw Error(Errc::InvalidConfig, "unknown estimator kind " + j.at("kind").dump());
        c.kind = *kind;
        if (j.contains("ablation")) {
            auto a = parse_ablation(j.at("ablation").get<std::string>());
            if (!a) throw Error(Errc::InvalidConfig, "unknown ablation " + j.at("ablation").dump());
            c.ablation = *a;
        }
        c.seed = j.value("seed", std::uint64_t{0});
        c.exemplar_seed = j.value("exemplar_seed", std::uint64_t{0});
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidConfig, std::string("estimator: ") + e.what());
    }
    c.validate();
    return c;
}

std::string EstimatorConfig::digest() const { return digest_json(to_json()); }

json to_json(const ScorePrediction& p) {
    return json{{"dialogue_id", p.dialogue_id},
                {"speaker", std::string(to_string(p.speaker))},
                {"spot_id", p.spot_id},
                {"value", p.value},
                {"estimator", p.estimator.to_json()}};
}

ScorePrediction prediction_from_json(const json& j) {
    ScorePrediction p;
    p.dialogue_id = j.at("dialogue_id").get<std::string>();
    auto sp = parse_speaker(j.at("speaker").get<std::string>());
    if (!sp) throw Error(Errc::SchemaViolation, "prediction speaker must be A or B");
    p.speaker = *sp;
    p.spot_id = j.at("spot_id").get<std::string>();
    p.value = j.at("value").get<double>();
    p.estimator = EstimatorConfig::from_json(j.at("estimator"));
    return p;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

// Codepoint view over UTF-8 text, enough for digit/label scanning.
struct Cp {
    char32_t cp;
    std::size_t begin;
    std::size_t end;
};

std::vector<Cp> decode(std::string_view s) {
    std::vector<Cp> out;
    std::size_t i = 0;
    while (i < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        int len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
        if (i + len > s.size()) len = 1;
        char32_t cp = len == 1 ? c : c & (0x7F >> len);
        for (int k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
        out.push_back({cp, i, i + len});
        i += len;
    }
    return out;
}

int digit_value(char32_t cp) {
    if (cp >= '0' && cp <= '9') return static_cast<int>(cp - '0');
    if (cp >= 0xFF10 && cp <= 0xFF19) return static_cast<int>(cp - 0xFF10);
    return -1;
}

bool is_word_letter(char32_t cp) { return (cp >= 'A' && cp <= 'Z') || (cp >= 'a' && cp <= 'z') || cp == '_'; }

bool is_dash(char32_t cp) { return cp == '-' || cp == 0x2013 || cp == 0x2014 || cp == 0x301C || cp == 0xFF5E || cp == '~'; }

std::string trim(std::string_view s) {
    const char* ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

// Length of a speaker label "<X>\s*[:：]" at the start of `line`, or 0.
std::size_t label_length(std::string_view line, char speaker) {
    if (line.empty() || line[0] != speaker) return 0;
    std::size_t i = 1;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i < line.size() && line[i] == ':') return i + 1;
    if (line.substr(i, 3) == "\xEF\xBC\x9A") return i + 3;  // full-width colon
    return 0;
}

}  // namespace

int parse_score(std::string_view text) {
    const auto cps = decode(text);
    for (std::size_t i = 0; i < cps.size();) {
        if (digit_value(cps[i].cp) < 0) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < cps.size() && digit_value(cps[j].cp) >= 0) ++j;
        const bool single = j - i == 1;
        const bool letter_before = i > 0 && is_word_letter(cps[i - 1].cp);
        const bool letter_after = j < cps.size() && is_word_letter(cps[j].cp);
        // "3.5" or "3,5"
        const bool fraction = j + 1 < cps.size() && (cps[j].cp == '.' || cps[j].cp == ',') &&
                              digit_value(cps[j + 1].cp) >= 0;
        const bool fraction_tail = i >= 2 && (cps[i - 1].cp == '.' || cps[i - 1].cp == ',') &&
                                   digit_value(cps[i - 2].cp) >= 0;
        // "1-5"
        const bool range = (j + 1 < cps.size() && is_dash(cps[j].cp) && digit_value(cps[j + 1].cp) >= 0) ||
                           (i >= 2 && is_dash(cps[i - 1].cp) && digit_value(cps[i - 2].cp) >= 0);
        if (single && !letter_before && !letter_after && !fraction && !fraction_tail && !range) {
            int v = digit_value(cps[i].cp);
            if (v >= 1 && v <= 5) return v;
        }
        i = j;
    }
    std::string shown(text.substr(0, 80));
    throw Error(Errc::UnparseableScore, fmt::format("no standalone score 1-5 in \"{}\"", shown));
}

std::pair<std::string, std::string> split_summary(std::string_view completion) {
    std::vector<std::string_view> lines;
    for (std::size_t start = 0; start <= completion.size();) {
        auto nl = completion.find('\n', start);
        if (nl == std::string_view::npos) nl = completion.size();
        std::string_view line = completion.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = nl + 1;
    }
    std::optional<std::size_t> b_line;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (label_length(lines[i], 'B')) b_line = i;
    }
    if (!b_line) throw Error(Errc::SummarySplitError, "completion has no line starting with a B: label");

    std::string a_part;
    bool seen_label = false;
    for (std::size_t i = 0; i < *b_line; ++i) {
        std::string_view line = lines[i];
        if (!seen_label) {
            if (std::size_t n = label_length(line, 'A')) {
                line.remove_prefix(n);
                seen_label = true;
            }
        }
        a_part += line;
        a_part += '\n';
    }
    std::string b_part(lines[*b_line].substr(label_length(lines[*b_line], 'B')));
    for (std::size_t i = *b_line + 1; i < lines.size(); ++i) {
        b_part += '\n';
        b_part += lines[i];
    }
    auto a = trim(a_part);
    auto b = trim(b_part);
    if (a.empty()) throw Error(Errc::SummarySplitError, "speaker A part of the summary is empty");
    if (b.empty()) throw Error(Errc::SummarySplitError, "speaker B part of the summary is empty");
    return {a, b};
}

// ---------------------------------------------------------------------------
// ArtifactStore

namespace {

template <typename Fn>
void read_jsonl(const fs::path& file, Fn&& fn) {
    std::ifstream in(file);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            fn(json::parse(line));
        } catch (const json::exception&) {
            // torn write from an interrupted run
        } catch (const Error&) {
        }
    }
}

void append_line(const fs::path& file, const json& j) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    // An interrupted run can leave a final line without its newline.
    bool torn_tail = false;
    if (std::ifstream in(file, std::ios::binary); in && in.seekg(0, std::ios::end) && in.tellg() > 0) {
        in.seekg(-1, std::ios::end);
        torn_tail = in.get() != '\n';
    }
    std::ofstream out(file, std::ios::app | std::ios::binary);
    if (torn_tail) out << '\n';
    out << j.dump() << '\n';
    out.flush();
    if (!out) throw Error(Errc::TransportError, "failed appending to " + file.string());
}

}  // namespace

ArtifactStore::ArtifactStore(fs::path dir) : dir_(std::move(dir)) {
    read_jsonl(dir_ / "summaries.jsonl", [&](const json& j) {
        auto sp = parse_speaker(j.at("speaker").get<std::string>());
        if (!sp) return;
        summaries_[{j.at("dialogue_id").get<std::string>(), *sp, j.at("source_turns").get<int>()}] =
            j.at("text").get<std::string>();
    });
    read_jsonl(dir_ / "recinfo.jsonl", [&](const json& j) {
        recommendations_[j.at("spot_id").get<std::string>()] = j.at("text").get<std::string>();
    });
}

std::optional<std::string> ArtifactStore::summary(const std::string& dialogue_id, Speaker speaker,
                                                  int source_turns) const {
    std::lock_guard lock(mutex_);
    auto it = summaries_.find({dialogue_id, speaker, source_turns});
    if (it == summaries_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::string> ArtifactStore::recommendation(const std::string& spot_id) const {
    std::lock_guard lock(mutex_);
    auto it = recommendations_.find(spot_id);
    if (it == recommendations_.end()) return std::nullopt;
    return it->second;
}

void ArtifactStore::put(const SpeakerSummary& s) {
    if (s.text.empty()) throw Error(Errc::SummarySplitError, "empty summary for " + s.dialogue_id);
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(s.dialogue_id, s.speaker, s.source_turns);
    if (summaries_.count(key)) return;
    if (!dir_.empty()) {
        append_line(dir_ / "summaries.jsonl", json{{"dialogue_id", s.dialogue_id},
                                                   {"speaker", std::string(to_string(s.speaker))},
                                                   {"source_turns", s.source_turns},
                                                   {"text", s.text}});
    }
    summaries_.emplace(std::move(key), s.text);
}

void ArtifactStore::put(const RecommendationInfo& r) {
    if (r.text.empty()) throw Error(Errc::EmptyCompletion, "empty recommendation info for " + r.spot_id);
    std::lock_guard lock(mutex_);
    if (recommendations_.count(r.spot_id)) return;
    if (!dir_.empty()) append_line(dir_ / "recinfo.jsonl", json{{"spot_id", r.spot_id}, {"text", r.text}});
    recommendations_.emplace(r.spot_id, r.text);
}

std::size_t ArtifactStore::summary_count() const {
    std::lock_guard lock(mutex_);
    return summaries_.size();
}

std::size_t ArtifactStore::recommendation_count() const {
    std::lock_guard lock(mutex_);
    return recommendations_.size();
}

// ---------------------------------------------------------------------------
// Generation

CompletionRequest make_request(const GenerationConfig& config, PromptMessages messages) {
    CompletionRequest r;
    r.model_id = config.model_id;
    r.temperature = config.temperature;
    r.max_output_units = config.max_output_units;
    r.messages = std::move(messages);
    return r;
}

std::vector<SpeakerSummary> generate_summaries(std::span<const DialogueCase> dialogues, int source_turns,
                                               Gateway& gateway, const TemplateSet& templates,
                                               std::span<const Exemplar> exemplars, ArtifactStore& store,
                                               const GenerationConfig& config) {
    std::vector<std::optional<Error>> errors(dialogues.size());
    detail::parallel_for(dialogues.size(), config.concurrency, [&](std::size_t i) {
        const DialogueCase& d = dialogues[i];
        if (store.summary(d.dialogue_id, Speaker::A, source_turns) &&
            store.summary(d.dialogue_id, Speaker::B, source_turns)) {
            return;
        }
        try {
            const DialogueCase source = source_turns > 0 ? truncate_dialogue(d, source_turns) : d;
            auto prompt = build_summary_prompt(source, exemplars, templates, config.render);
            auto result = gateway.complete(make_request(config, std::move(prompt)));
            auto [a, b] = split_summary(result.text);
            store.put(SpeakerSummary{d.dialogue_id, Speaker::A, std::move(a), source_turns});
            store.put(SpeakerSummary{d.dialogue_id, Speaker::B, std::move(b), source_turns});
        } catch (const Error& e) {
            errors[i] = e.with_context("summary of dialogue " + d.dialogue_id);
        }
    });
    for (auto& e : errors) {
        if (e) throw *e;
    }
    std::vector<SpeakerSummary> out;
    for (const auto& d : dialogues) {
        for (Speaker s : kSpeakers) {
            out.push_back(SpeakerSummary{d.dialogue_id, s, *store.summary(d.dialogue_id, s, source_turns),
                                         source_turns});
        }
    }
    return out;
}

std::vector<RecommendationInfo> generate_recommendation_info(std::span<const TouristSpot> spots, Gateway& gateway,
                                                             const TemplateSet& templates,
                                                             std::span<const Exemplar> exemplars,
                                                             ArtifactStore& store, const GenerationConfig& config) {
    std::vector<std::optional<Error>> errors(spots.size());
    detail::parallel_for(spots.size(), config.concurrency, [&](std::size_t i) {
        const TouristSpot& spot = spots[i];
        if (store.recommendation(spot.spot_id)) return;
        try {
            auto prompt = build_recommendation_prompt(spot, exemplars, templates, config.render);
            auto result = gateway.complete(make_request(config, std::move(prompt)));
            store.put(RecommendationInfo{spot.spot_id, trim(result.text)});
        } catch (const Error& e) {
            errors[i] = e.with_context("recommendation info of spot " + spot.spot_id);
        }
    });
    for (auto& e : errors) {
        if (e) throw *e;
    }
    std::vector<RecommendationInfo> out;
    for (const auto& spot : spots) out.push_back({spot.spot_id, *store.recommendation(spot.spot_id)});
    return out;
}

// ---------------------------------------------------------------------------
// RemoteScorer

RemoteScorer::RemoteScorer(std::string base_url, std::size_t max_batch)
    : base_url_(std::move(base_url)), max_batch_(std::max<std::size_t>(max_batch, 1)) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

json RemoteScorer::predict_body(std::string_view variant, std::span<const ScorerPair> pairs) {
    json list = json::array();
    for (const auto& p : pairs) {
        json item{{"left_text", p.left_text}, {"right_text", p.right_text}};
        if (p.speaker) item["speaker"] = std::string(to_string(*p.speaker));
        list.push_back(std::move(item));
    }
    return json{{"variant", std::string(variant)}, {"pairs", std::move(list)}};
}

json RemoteScorer::post(const std::string& path, const json& body, int expected_status) const {
    auto scheme = base_url_.find("://");
    auto slash = scheme == std::string::npos ? std::string::npos : base_url_.find('/', scheme + 3);
    const std::string host = base_url_.substr(0, slash);
    const std::string prefix = slash == std::string::npos ? "" : base_url_.substr(slash);
    httplib::Client client(host);
    client.set_read_timeout(std::chrono::seconds(300));
    auto res = body.is_null() ? client.Get(prefix + path) : client.Post(prefix + path, body.dump(), "application/json");
    if (!res) {
        throw Error(Errc::RemoteScorerUnavailable,
                    fmt::format("{}{}: {}", base_url_, path, httplib::to_string(res.error())));
    }
    if (res->status != expected_status) {
        throw Error(Errc::RemoteScorerUnavailable,
                    fmt::format("{}{}: HTTP {} {}", base_url_, path, res->status, res->body.substr(0, 200)));
    }
    try {
        return json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw Error(Errc::RemoteScorerUnavailable, std::string("malformed scorer response: ") + e.what());
    }
}

std::vector<double> RemoteScorer::predict(std::string_view variant, std::span<const ScorerPair> pairs) const {
    std::vector<double> scores;
    scores.reserve(pairs.size());
    for (std::size_t off = 0; off < pairs.size(); off += max_batch_) {
        auto chunk = pairs.subspan(off, std::min(max_batch_, pairs.size() - off));
        json res = post("/predict", predict_body(variant, chunk));
        const json& list = res.is_object() && res.contains("scores") ? res["scores"] : res;
        if (!list.is_array() || list.size() != chunk.size()) {
            throw Error(Errc::RemoteScorerUnavailable,
                        fmt::format("scorer returned {} scores for {} pairs", list.is_array() ? list.size() : 0,
                                    chunk.size()));
        }
        for (const json& v : list) {
            if (!v.is_number()) throw Error(Errc::RemoteScorerUnavailable, "non-numeric score from scorer");
            double x = v.get<double>();
            if (!(x >= 1.0 && x <= 5.0)) {
                throw Error(Errc::RemoteScorerUnavailable, fmt::format("scorer returned {} outside [1,5]", x));
            }
            scores.push_back(x);
        }
    }
    return scores;
}

json RemoteScorer::health() const { return post("/health", nullptr); }

std::string RemoteScorer::train(const json& spec) const {
    json res = post("/train", spec, 202);
    if (res.is_object() && res.contains("job_id")) {
        const json& id = res["job_id"];
        return id.is_string() ? id.get<std::string>() : id.dump();
    }
    throw Error(Errc::RemoteScorerUnavailable, "train response has no job_id");
}

json RemoteScorer::train_status(const std::string& job_id) const { return post("/train/" + job_id, nullptr); }

// ---------------------------------------------------------------------------
// Estimation

namespace {

[[noreturn]] void missing(const std::string& what) { throw Error(Errc::MissingArtifact, what); }

std::string summary_or_throw(const EstimationContext& ctx, const std::string& dialogue_id, Speaker speaker,
                             int source_turns) {
    auto s = ctx.artifacts ? ctx.artifacts->summary(dialogue_id, speaker, source_turns) : std::nullopt;
    if (!s) {
        missing(fmt::format("summary of dialogue {} speaker {} ({})", dialogue_id, to_string(speaker),
                            source_turns == kFullDialogue ? std::string("full") : fmt::format("{} turns", source_turns)));
    }
    return *s;
}

std::string recinfo_or_throw(const EstimationContext& ctx, const std::string& spot_id) {
    auto r = ctx.artifacts ? ctx.artifacts->recommendation(spot_id) : std::nullopt;
    if (!r) missing("recommendation info of spot " + spot_id);
    return *r;
}

// What the SumRec estimators put in the speaker slot.
std::string speaker_text(const DialogueCase& d, Speaker speaker, const EstimatorConfig& est,
                         const EstimationContext& ctx) {
    if (est.ablation == Ablation::WithoutSummary) {
        return render_dialogue(ctx.templates->get(PromptKind::BaselineScore), d.utterances);
    }
    return summary_or_throw(ctx, d.dialogue_id, speaker, est.source_turns());
}

const DialogueCase& dialogue_or_throw(const EstimationContext& ctx, const std::string& id) {
    for (const auto& d : ctx.train) {
        if (d.dialogue_id == id) return d;
    }
    if (ctx.dataset) {
        if (const auto* d = ctx.dataset->find(id)) return *d;
    }
    missing("dialogue " + id);
}

int llm_score(const PromptMessages& prompt, const EstimationContext& ctx) {
    if (!ctx.gateway) throw Error(Errc::InvalidConfig, "LLM estimator needs a gateway");
    auto first = ctx.gateway->complete(make_request(ctx.generation, prompt));
    try {
        return parse_score(first.text);
    } catch (const Error& e) {
        if (e.code() != Errc::UnparseableScore) throw;
    }
    PromptMessages retry = prompt;
    retry.messages.push_back(Message{Role::User, "Answer with a single digit 1\xE2\x80\x93" "5."});
    auto second = ctx.gateway->complete(make_request(ctx.generation, std::move(retry)));
    return parse_score(second.text);
}

}  // namespace

std::vector<Exemplar> score_exemplars(const EstimatorConfig& estimator, Topic topic, const EstimationContext& ctx) {
    const PromptKind kind = estimator.kind == EstimatorKind::BaselineLLM ? PromptKind::BaselineScore
                                                                          : PromptKind::SumRecScore;
    auto picks = select_exemplars(ctx.train, kind, topic, kScoreShots, estimator.exemplar_seed);
    std::vector<Exemplar> out;
    for (const auto& p : picks) {
        const DialogueCase& d = dialogue_or_throw(ctx, p.dialogue_id);
        const TouristSpot& spot = ctx.dataset->spot(p.spot_id);
        if (kind == PromptKind::BaselineScore) {
            out.emplace_back(BaselineScoreExemplar(d.utterances, spot.description, p.speaker, p.gold_score));
        } else {
            std::optional<std::string> rec;
            if (estimator.ablation != Ablation::WithoutRecInfo) rec = recinfo_or_throw(ctx, p.spot_id);
            out.emplace_back(SumRecScoreExemplar(speaker_text(d, p.speaker, estimator, ctx), spot.description,
                                                 std::move(rec), p.gold_score));
        }
    }
    return out;
}

ScorerPair remote_pair(const DialogueCase& dialogue, Speaker speaker, const TouristSpot& spot,
                       const EstimatorConfig& estimator, const EstimationContext& ctx) {
    ScorerPair pair;
    const bool direct = estimator.kind == EstimatorKind::RemoteDialogue || estimator.ablation == Ablation::WithoutSummary;
    if (direct) {
        pair.left_text = render_dialogue(ctx.templates->get(PromptKind::BaselineScore), dialogue.utterances);
        pair.speaker = speaker;
    } else {
        pair.left_text = summary_or_throw(ctx, dialogue.dialogue_id, speaker, estimator.source_turns());
    }
    pair.right_text = spot.description;
    const bool with_rec = estimator.kind == EstimatorKind::RemoteBiencoder && estimator.ablation != Ablation::WithoutRecInfo;
    if (with_rec) pair.right_text += std::string(kSpotTextSeparator) + recinfo_or_throw(ctx, spot.spot_id);
    return pair;
}

namespace {

std::string_view remote_variant(const EstimatorConfig& est) {
    return est.kind == EstimatorKind::RemoteDialogue || est.ablation == Ablation::WithoutSummary
               ? kVariantDialogueDirect
               : kVariantBiEncoder;
}

}  // namespace

double random_score(std::uint64_t seed, std::string_view dialogue_id, Speaker speaker, std::string_view spot_id) {
    std::uint64_t h = fnv1a64(dialogue_id);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(to_string(speaker), h);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(spot_id, h);
    Rng rng(splitmix64(h ^ splitmix64(seed)));
    return 1.0 + 4.0 * uniform_unit(rng);
}

ScorePrediction estimate(const DialogueCase& dialogue, Speaker speaker, const std::string& spot_id,
                         const EstimatorConfig& estimator, const EstimationContext& ctx) {
    estimator.validate();
    ScorePrediction p{dialogue.dialogue_id, speaker, spot_id, 0.0, estimator};
    switch (estimator.kind) {
    case EstimatorKind::Random:
        p.value = random_score(estimator.seed, dialogue.dialogue_id, speaker, spot_id);
        break;
    case EstimatorKind::HumanPassthrough: {
        auto it = dialogue.human_predictions.find(spot_id);
        if (it == dialogue.human_predictions.end() || it->second.empty()) {
            missing(fmt::format("human predictions for ({}, {})", dialogue.dialogue_id, spot_id));
        }
        double sum = 0;
        for (double v : it->second) sum += v;
        p.value = sum / static_cast<double>(it->second.size());
        break;
    }
    case EstimatorKind::SumRecLLM: {
        const TouristSpot& spot = ctx.dataset->spot(spot_id);
        std::optional<std::string> rec;
        if (estimator.ablation != Ablation::WithoutRecInfo) rec = recinfo_or_throw(ctx, spot_id);
        auto exemplars = score_exemplars(estimator, dialogue.topic, ctx);
        auto prompt = build_sumrec_score_prompt(speaker_text(dialogue, speaker, estimator, ctx), spot.description,
                                                rec, exemplars, *ctx.templates, ctx.generation.render);
        p.value = llm_score(prompt, ctx);
        break;
    }
    case EstimatorKind::BaselineLLM: {
        const TouristSpot& spot = ctx.dataset->spot(spot_id);
        auto exemplars = score_exemplars(estimator, dialogue.topic, ctx);
        auto prompt = build_baseline_score_prompt(dialogue.utterances, spot.description, speaker, exemplars,
                                                  *ctx.templates, ctx.generation.render);
        p.value = llm_score(prompt, ctx);
        break;
    }
    case EstimatorKind::RemoteBiencoder:
    case EstimatorKind::RemoteDialogue: {
        if (!ctx.remote) throw Error(Errc::RemoteScorerUnavailable, "no scorer service configured");
        ScorerPair pair = remote_pair(dialogue, speaker, ctx.dataset->spot(spot_id), estimator, ctx);
        p.value = ctx.remote->predict(remote_variant(estimator), std::span<const ScorerPair>(&pair, 1)).at(0);
        break;
    }
    }
    if (!(p.value >= 1.0 && p.value <= 5.0)) {
        throw Error(Errc::ScoreOutOfRange, fmt::format("estimate {} outside [1,5]", p.value));
    }
    return p;
}

// ---------------------------------------------------------------------------
// PredictionStore / batch driver

PredictionStore::PredictionStore(fs::path file) : file_(std::move(file)) {
    read_jsonl(file_, [&](const json& j) {
        auto p = prediction_from_json(j);
        entries_.insert_or_assign(p.key(), std::move(p));
    });
}

bool PredictionStore::contains(const TripleKey& key) const {
    std::lock_guard lock(mutex_);
    return entries_.count(key) > 0;
}

std::optional<double> PredictionStore::get(const TripleKey& key) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second.value;
}

void PredictionStore::append(const ScorePrediction& p) {
    std::lock_guard lock(mutex_);
    if (entries_.count(p.key())) return;
    append_line(file_, to_json(p));
    entries_.emplace(p.key(), p);
}

std::size_t PredictionStore::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

PredictionTable PredictionSet::table(std::string label) const {
    PredictionTable t;
    t.label = std::move(label);
    t.discrete_output = estimator.discrete_output();
    for (const auto& p : predictions) t.values[p.key()] = p.value;
    return t;
}

void PredictionSet::throw_if_failed() const {
    if (failures.empty()) return;
    std::string detail;
    for (std::size_t i = 0; i < failures.size() && i < 5; ++i) {
        const auto& f = failures[i];
        detail += fmt::format("\n  ({}, {}, {}): {}", f.key.dialogue_id, to_string(f.key.speaker), f.key.spot_id,
                              f.error);
    }
    if (failures.size() > 5) detail += fmt::format("\n  ... and {} more", failures.size() - 5);
    throw Error(Errc::FailureReport, fmt::format("{} of {} triples failed for {}{}", failures.size(),
                                                 failures.size() + predictions.size(), estimator.label(), detail));
}

PredictionSet run_estimator(std::span<const DialogueCase> cases, const EstimatorConfig& estimator,
                            const EstimationContext& ctx, PredictionStore* store) {
    estimator.validate();
    struct Unit {
        const DialogueCase* dialogue;
        Speaker speaker;
        std::vector<std::string> spots;  // still to compute
    };
    std::vector<TripleKey> all;
    std::vector<Unit> units;
    PredictionSet out;
    out.estimator = estimator;
    for (const auto& d : cases) {
        for (Speaker s : kSpeakers) {
            Unit unit{&d, s, {}};
            for (const auto& spot : d.spot_file.spot_ids) {
                TripleKey key{d.dialogue_id, s, spot};
                all.push_back(key);
                if (store && store->contains(key)) {
                    ++out.reused;
                } else {
                    unit.spots.push_back(spot);
                }
            }
            if (!unit.spots.empty()) units.push_back(std::move(unit));
        }
    }

    std::mutex mu;
    std::map<TripleKey, double> fresh;
    std::map<TripleKey, std::string> failed;
    auto record = [&](const ScorePrediction& p) {
        if (store) store->append(p);
        std::lock_guard lock(mu);
        fresh[p.key()] = p.value;
    };
    auto fail = [&](const TripleKey& key, const std::string& what) {
        std::lock_guard lock(mu);
        failed[key] = what;
    };

    const std::size_t threads =
        estimator.uses_llm() && ctx.gateway ? std::max<std::size_t>(ctx.generation.concurrency, 1) : 1;
    detail::parallel_for(units.size(), threads, [&](std::size_t u) {
        const Unit& unit = units[u];
        const DialogueCase& d = *unit.dialogue;
        if (estimator.remote()) {
            // one batched request per (dialogue, speaker)
            try {
                if (!ctx.remote) throw Error(Errc::RemoteScorerUnavailable, "no scorer service configured");
                std::vector<ScorerPair> pairs;
                for (const auto& spot : unit.spots) {
                    pairs.push_back(remote_pair(d, unit.speaker, ctx.dataset->spot(spot), estimator, ctx));
                }
                auto scores = ctx.remote->predict(remote_variant(estimator), pairs);
                for (std::size_t i = 0; i < unit.spots.size(); ++i) {
                    record(ScorePrediction{d.dialogue_id, unit.speaker, unit.spots[i], scores[i], estimator});
                }
            } catch (const Error& e) {
                for (const auto& spot : unit.spots) fail({d.dialogue_id, unit.speaker, spot}, e.what());
            }
            return;
        }
        for (const auto& spot : unit.spots) {
            try {
                record(estimate(d, unit.speaker, spot, estimator, ctx));
            } catch (const Error& e) {
                fail({d.dialogue_id, unit.speaker, spot}, e.what());
            }
        }
    });

    out.computed = fresh.size();
    for (const auto& key : all) {
        if (auto it = fresh.find(key); it != fresh.end()) {
            out.predictions.push_back({key.dialogue_id, key.speaker, key.spot_id, it->second, estimator});
        } else if (auto f = failed.find(key); f != failed.end()) {
            out.failures.push_back({key, f->second});
        } else if (store) {
            out.predictions.push_back({key.dialogue_id, key.speaker, key.spot_id, *store->get(key), estimator});
        }
    }
    return out;
}

}  // namespace sumrec
