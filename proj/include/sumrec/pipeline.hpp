#pragma once

// Run configuration, manifests and the stage driver behind the sumrec CLI.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sumrec/corpus.hpp"
#include "sumrec/llm_gateway.hpp"
#include "sumrec/metrics.hpp"
#include "sumrec/scoring.hpp"

namespace sumrec {

enum class BackendMode { Live, Mock };

struct GatewaySettings {
    std::string model_id = kDefaultModelId;
    double temperature = 0.0;
    int max_output_units = 512;
    std::size_t concurrency = 4;
    std::filesystem::path cache_dir = "cache";
    int max_attempts = 5;
    int initial_backoff_ms = 1000;
    std::size_t context_budget = RenderOptions{}.context_budget;
};

/// Relative paths in the file are resolved against the file's directory.
struct RunConfig {
    std::filesystem::path dataset;
    std::uint64_t split_seed = 0;
    SplitRatios ratios;
    std::vector<EstimatorConfig> estimators;
    GatewaySettings gateway;
    std::optional<std::filesystem::path> templates;  // compiled-in defaults when unset
    std::optional<std::filesystem::path> exemplars;
    std::uint64_t exemplar_seed = 0;                // for estimators that leave it 0
    std::string tokenizer = "default";
    std::filesystem::path runs_dir = "runs";
    std::optional<std::filesystem::path> mock_script;
    std::string scorer_url;

    BackendMode backend = BackendMode::Mock;
    bool use_cache = true;

    static RunConfig load(const std::filesystem::path& file);
    static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    /// Everything that shapes results; excludes backend mode, cache use and runs_dir.
    nlohmann::json snapshot() const;
    /// Throws Error(MissingFile / InvalidConfig).
    void check_paths() const;
};

/// Maps CLI names (random, human, llm, sumrec-llm, encoder, sumrec-encoder).
EstimatorConfig estimator_from_name(std::string_view name);
std::vector<EstimatorConfig> estimators_from_names(std::string_view comma_list);

struct StageRecord {
    std::string name;
    std::map<std::string, std::string> digests;  // artifact file -> sha256
};

struct RunManifest {
    std::string run_id;
    nlohmann::json config;
    std::string dataset_digest;
    std::map<std::string, std::string> template_digests;
    std::string exemplar_digest;
    std::vector<StageRecord> stages;
    std::string tool_version = SUMREC_VERSION;
    std::string started_at;
    std::string finished_at;
    std::string status = "running";
    GatewayStats gateway;

    nlohmann::json to_json() const;
};

/// sha256 over the three dataset files.
std::string dataset_digest(const std::filesystem::path& root);

/// Content digest of the dataset files, the templates, the exemplar bank, the
/// backend (and mock script) and the config snapshot. Names runs/<run_id>/.
std::string compute_run_id(const RunConfig& config);

/// Shared state for one CLI invocation.
class Pipeline {
public:
    explicit Pipeline(RunConfig config, std::ostream& log);
    ~Pipeline();

    const RunConfig& config() const { return config_; }
    const Dataset& dataset() const { return dataset_; }
    const std::string& run_id() const { return run_id_; }
    std::filesystem::path run_dir() const;

    /// Loads split.json from the run directory or computes and saves it.
    const SplitAssignment& split();
    std::vector<DialogueCase> dialogues_in(SplitName name);

    /// Summaries and recommendation info needed by the roster.
    void generate_artifacts();
    /// Scores the test split with every estimator.
    std::vector<PredictionSet> score();
    ReportTable report(const std::vector<PredictionSet>& sets, bool per_topic) const;
    void write_report(const ReportTable& table) const;
    /// Train/valid pairs with gold scores for the encoder service.
    void export_scorer_pairs();

    /// Gateway counters for this invocation (zero when no LLM stage ran).
    GatewayStats gateway_stats() const;

    RunManifest& manifest() { return manifest_; }
    void finish_stage(StageRecord record);
    void write_manifest();

private:
    Gateway& gateway();
    EstimationContext context(std::span<const DialogueCase> train);

    RunConfig config_;
    std::ostream& log_;
    Dataset dataset_;
    std::string run_id_;
    TemplateSet templates_;
    ExemplarBank bank_;
    std::optional<SplitAssignment> split_;
    std::unique_ptr<Gateway> gateway_;
    std::unique_ptr<ArtifactStore> artifacts_;
    std::unique_ptr<RemoteScorer> remote_;
    RunManifest manifest_;
};

// ---------------------------------------------------------------------------
// Commands. Each returns a process exit code.

int cmd_validate(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_split(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_run(const RunConfig& config, std::ostream& out, std::ostream& err);
/// Runs every SumRec-family estimator of the roster under all four ablations.
int cmd_ablate(const RunConfig& config, std::ostream& out, std::ostream& err);
/// Rebuilds report.csv/report.txt from stored predictions, without a gateway.
int cmd_report(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Roster for cmd_ablate.
std::vector<EstimatorConfig> ablation_roster(const std::vector<EstimatorConfig>& roster);

}  // namespace sumrec
