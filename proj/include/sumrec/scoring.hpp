#pragma once

// Speaker summaries, recommendation information and per-(dialogue, speaker,
// spot) score estimation under every estimator and ablation.

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "sumrec/corpus.hpp"
#include "sumrec/llm_gateway.hpp"
#include "sumrec/metrics.hpp"
#include "sumrec/prompts.hpp"

namespace sumrec {

enum class EstimatorKind { SumRecLLM, BaselineLLM, Random, HumanPassthrough, RemoteBiencoder, RemoteDialogue };
enum class Ablation { None, WithoutSummary, WithoutRecInfo, FiveTurns };

std::string_view to_string(EstimatorKind kind) noexcept;
std::string_view to_string(Ablation ablation) noexcept;
std::optional<EstimatorKind> parse_estimator_kind(std::string_view s) noexcept;
std::optional<Ablation> parse_ablation(std::string_view s) noexcept;

/// Turns kept for the FiveTurns ablation.
inline constexpr int kAblationTurns = 5;
/// source_turns value meaning "whole dialogue".
inline constexpr int kFullDialogue = 0;

struct EstimatorConfig {
    EstimatorKind kind = EstimatorKind::Random;
    Ablation ablation = Ablation::None;
    std::uint64_t seed = 0;
    std::uint64_t exemplar_seed = 0;

    /// Throws Error(InvalidConfig) for an ablation on a non-SumRec estimator.
    void validate() const;
    bool sumrec_family() const noexcept;
    bool uses_llm() const noexcept;
    bool remote() const noexcept;
    /// LLM estimators emit integers; their NDCG is not reported.
    bool discrete_output() const noexcept;
    int source_turns() const noexcept { return ablation == Ablation::FiveTurns ? kAblationTurns : kFullDialogue; }

    /// Row label, e.g. "SumRec (LLM)" or "SumRec (Encoder) w/o Rec.".
    std::string label() const;
    nlohmann::json to_json() const;
    static EstimatorConfig from_json(const nlohmann::json& j);
    /// Digest naming predictions/<digest>.jsonl.
    std::string digest() const;

    bool operator==(const EstimatorConfig&) const = default;
};

struct SpeakerSummary {
    std::string dialogue_id;
    Speaker speaker = Speaker::A;
    std::string text;
    int source_turns = kFullDialogue;
};

struct RecommendationInfo {
    std::string spot_id;
    std::string text;
};

struct ScorePrediction {
    std::string dialogue_id;
    Speaker speaker = Speaker::A;
    std::string spot_id;
    double value = 0;
    EstimatorConfig estimator;

    TripleKey key() const { return {dialogue_id, speaker, spot_id}; }
};

nlohmann::json to_json(const ScorePrediction& p);
ScorePrediction prediction_from_json(const nlohmann::json& j);

/// First standalone digit 1-5 (ASCII or full-width), optionally after a speaker
/// label. Throws Error(UnparseableScore).
int parse_score(std::string_view text);

/// Splits an "A: ... B: ..." completion at the last line starting with a B
/// label. Throws Error(SummarySplitError).
std::pair<std::string, std::string> split_summary(std::string_view completion);

// ---------------------------------------------------------------------------
// Artifacts

/// Generated texts, kept in memory and appended to summaries.jsonl /
/// recinfo.jsonl under `dir` (when non-empty). Thread-safe.
class ArtifactStore {
public:
    ArtifactStore() = default;
    explicit ArtifactStore(std::filesystem::path dir);

    std::optional<std::string> summary(const std::string& dialogue_id, Speaker speaker, int source_turns) const;
    std::optional<std::string> recommendation(const std::string& spot_id) const;
    void put(const SpeakerSummary& s);
    void put(const RecommendationInfo& r);

    std::size_t summary_count() const;
    std::size_t recommendation_count() const;
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    mutable std::mutex mutex_;
    std::map<std::tuple<std::string, Speaker, int>, std::string> summaries_;
    std::map<std::string, std::string> recommendations_;
};

struct GenerationConfig {
    std::string model_id = kDefaultModelId;
    double temperature = 0.0;
    int max_output_units = 512;
    RenderOptions render;
    std::size_t concurrency = 1;
};

CompletionRequest make_request(const GenerationConfig& config, PromptMessages messages);

/// One summary per (dialogue, speaker). `source_turns` > 0 truncates each
/// dialogue to that many turns first. Already-stored summaries are reused.
std::vector<SpeakerSummary> generate_summaries(std::span<const DialogueCase> dialogues, int source_turns,
                                               Gateway& gateway, const TemplateSet& templates,
                                               std::span<const Exemplar> exemplars, ArtifactStore& store,
                                               const GenerationConfig& config);

std::vector<RecommendationInfo> generate_recommendation_info(std::span<const TouristSpot> spots, Gateway& gateway,
                                                             const TemplateSet& templates,
                                                             std::span<const Exemplar> exemplars,
                                                             ArtifactStore& store, const GenerationConfig& config);

// ---------------------------------------------------------------------------
// Remote encoder scorer client

inline constexpr const char* kSpotTextSeparator = "[SEP]";

struct ScorerPair {
    std::string left_text;
    std::string right_text;
    std::optional<Speaker> speaker;  // DialogueDirect: whose utterances are flagged
};

/// JSON client for the encoder scoring service (/predict, /health, /train).
class RemoteScorer {
public:
    explicit RemoteScorer(std::string base_url, std::size_t max_batch = 64);

    static nlohmann::json predict_body(std::string_view variant, std::span<const ScorerPair> pairs);

    /// Scores aligned with `pairs`; throws Error(RemoteScorerUnavailable).
    std::vector<double> predict(std::string_view variant, std::span<const ScorerPair> pairs) const;
    nlohmann::json health() const;
    /// Starts a training job; returns the job id from the 202 response.
    std::string train(const nlohmann::json& spec) const;
    nlohmann::json train_status(const std::string& job_id) const;

private:
    // GET when `body` is null.
    nlohmann::json post(const std::string& path, const nlohmann::json& body, int expected_status = 200) const;

    std::string base_url_;
    std::size_t max_batch_;
};

inline constexpr const char* kVariantBiEncoder = "BiEncoderSumRec";
inline constexpr const char* kVariantDialogueDirect = "DialogueDirect";

// ---------------------------------------------------------------------------
// Estimation

struct EstimationContext {
    const Dataset* dataset = nullptr;
    std::span<const DialogueCase> train;  // exemplar pool
    Gateway* gateway = nullptr;
    const TemplateSet* templates = nullptr;
    const ArtifactStore* artifacts = nullptr;
    GenerationConfig generation;
    const RemoteScorer* remote = nullptr;
};

/// Materialized five-shot exemplars for a score prompt of `estimator` on `topic`.
std::vector<Exemplar> score_exemplars(const EstimatorConfig& estimator, Topic topic, const EstimationContext& ctx);

/// Left/right texts sent to the encoder service, ablation-aware.
ScorerPair remote_pair(const DialogueCase& dialogue, Speaker speaker, const TouristSpot& spot,
                       const EstimatorConfig& estimator, const EstimationContext& ctx);

/// Deterministic uniform real in [1,5) for a Random estimator triple.
double random_score(std::uint64_t seed, std::string_view dialogue_id, Speaker speaker, std::string_view spot_id);

/// Errors: MissingArtifact, UnparseableScore, RemoteScorerUnavailable, gateway errors.
ScorePrediction estimate(const DialogueCase& dialogue, Speaker speaker, const std::string& spot_id,
                         const EstimatorConfig& estimator, const EstimationContext& ctx);

/// Append-only JSONL of predictions; lines that fail to parse (a torn final
/// write) are ignored on load.
class PredictionStore {
public:
    explicit PredictionStore(std::filesystem::path file);

    bool contains(const TripleKey& key) const;
    std::optional<double> get(const TripleKey& key) const;
    void append(const ScorePrediction& p);
    std::size_t size() const;
    const std::filesystem::path& file() const { return file_; }

private:
    std::filesystem::path file_;
    mutable std::mutex mutex_;
    std::map<TripleKey, ScorePrediction> entries_;
};

struct TripleFailure {
    TripleKey key;
    std::string error;
};

struct PredictionSet {
    EstimatorConfig estimator;
    std::vector<ScorePrediction> predictions;  // triple order
    std::vector<TripleFailure> failures;
    std::size_t computed = 0;
    std::size_t reused = 0;

    PredictionTable table(std::string label) const;
    /// Throws Error(FailureReport) summarizing failures, if any.
    void throw_if_failed() const;
};

/// Scores every (dialogue, speaker, spot) triple. Stored triples are skipped;
/// per-triple failures are collected, not thrown.
PredictionSet run_estimator(std::span<const DialogueCase> cases, const EstimatorConfig& estimator,
                            const EstimationContext& ctx, PredictionStore* store = nullptr);

}  // namespace sumrec
