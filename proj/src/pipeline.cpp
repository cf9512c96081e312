#include "sumrec/pipeline.hpp"

#include <ctime>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/core.h>

#include "sumrec/digest.hpp"
#include "sumrec/error.hpp"

namespace sumrec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

std::string utc_now() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_file(const fs::path& file, const std::string& content) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    fs::path tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << content;
        if (!out) throw Error(Errc::TransportError, "cannot write " + tmp.string());
    }
    fs::rename(tmp, file);
}

Tokenizer tokenizer_for(const std::string& name) {
    if (name == "default") return default_tokenize;
    if (name == "whitespace") {
        return [](std::string_view text) {
            std::vector<std::string> out;
            std::istringstream in{std::string(text)};
            for (std::string tok; in >> tok;) out.push_back(tok);
            return out;
        };
    }
    throw Error(Errc::InvalidConfig, "unknown tokenizer " + name);
}

json gateway_stats_json(const GatewayStats& s) {
    return json{{"requests", s.requests},
                {"cache_hits", s.cache_hits},
                {"backend_calls", s.backend_calls},
                {"retries", s.retries}};
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

RunConfig RunConfig::load(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(Errc::MissingFile, file.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(Errc::InvalidConfig, fmt::format("{}: {}", file.string(), e.what()));
    }
    return from_json(j, file.parent_path().empty() ? fs::path(".") : file.parent_path());
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
    RunConfig c;
    try {
        c.dataset = resolve(base_dir, j.at("dataset").get<std::string>());
        if (j.contains("split")) {
            const json& s = j["split"];
            c.split_seed = s.value("seed", std::uint64_t{0});
            if (s.contains("ratios")) {
                auto r = s["ratios"].get<std::vector<unsigned>>();
                if (r.size() != 3 || r[0] + r[1] + r[2] == 0) {
                    throw Error(Errc::InvalidConfig, "split.ratios must be three non-negative integers, not all 0");
                }
                c.ratios = {r[0], r[1], r[2]};
            }
        }
        c.exemplar_seed = j.value("exemplar_seed", std::uint64_t{0});
        for (const json& e : j.value("estimators", json::array())) {
            c.estimators.push_back(e.is_string() ? estimator_from_name(e.get<std::string>())
                                                 : EstimatorConfig::from_json(e));
        }
        if (j.contains("gateway")) {
            const json& g = j["gateway"];
            GatewaySettings& s = c.gateway;
            s.model_id = g.value("model_id", s.model_id);
            s.temperature = g.value("temperature", s.temperature);
            s.max_output_units = g.value("max_output_units", s.max_output_units);
            s.concurrency = g.value("concurrency", s.concurrency);
            s.cache_dir = g.value("cache_dir", s.cache_dir.string());
            s.max_attempts = g.value("max_attempts", s.max_attempts);
            s.initial_backoff_ms = g.value("initial_backoff_ms", s.initial_backoff_ms);
            s.context_budget = g.value("context_budget", s.context_budget);
        }
        c.gateway.cache_dir = resolve(base_dir, c.gateway.cache_dir);
        if (j.contains("templates")) c.templates = resolve(base_dir, j["templates"].get<std::string>());
        if (j.contains("exemplars")) c.exemplars = resolve(base_dir, j["exemplars"].get<std::string>());
        c.tokenizer = j.value("tokenizer", c.tokenizer);
        c.runs_dir = resolve(base_dir, j.value("runs_dir", std::string("runs")));
        if (j.contains("mock_script")) c.mock_script = resolve(base_dir, j["mock_script"].get<std::string>());
        c.scorer_url = j.value("scorer_url", std::string());
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidConfig, std::string("config: ") + e.what());
    }
    if (c.gateway.concurrency < 1) throw Error(Errc::InvalidConfig, "gateway.concurrency must be >= 1");
    if (c.gateway.max_attempts < 1) throw Error(Errc::InvalidConfig, "gateway.max_attempts must be >= 1");
    tokenizer_for(c.tokenizer);
    return c;
}

json RunConfig::snapshot() const {
    json est = json::array();
    for (auto e : estimators) {
        if (e.exemplar_seed == 0) e.exemplar_seed = exemplar_seed;
        est.push_back(e.to_json());
    }
    return json{{"split", {{"seed", split_seed}, {"ratios", {ratios.train, ratios.validation, ratios.test}}}},
                {"estimators", est},
                {"exemplar_seed", exemplar_seed},
                {"tokenizer", tokenizer},
                {"gateway",
                 {{"model_id", gateway.model_id},
                  {"temperature", gateway.temperature},
                  {"max_output_units", gateway.max_output_units},
                  {"context_budget", gateway.context_budget}}}};
}

void RunConfig::check_paths() const {
    auto need = [](const fs::path& p, const char* what) {
        if (!fs::exists(p)) throw Error(Errc::MissingFile, fmt::format("{} {} does not exist", what, p.string()));
    };
    need(dataset, "dataset");
    if (templates) need(*templates, "template directory");
    if (exemplars) need(*exemplars, "exemplar bank");
    if (mock_script) need(*mock_script, "mock script");
    for (const auto& e : estimators) {
        e.validate();
        if (e.remote() && scorer_url.empty()) {
            throw Error(Errc::InvalidConfig, e.label() + " needs scorer_url");
        }
    }
}

EstimatorConfig estimator_from_name(std::string_view name) {
    EstimatorConfig c;
    if (name == "random") c.kind = EstimatorKind::Random;
    else if (name == "human") c.kind = EstimatorKind::HumanPassthrough;
    else if (name == "llm") c.kind = EstimatorKind::BaselineLLM;
    else if (name == "sumrec-llm") c.kind = EstimatorKind::SumRecLLM;
    else if (name == "encoder") c.kind = EstimatorKind::RemoteDialogue;
    else if (name == "sumrec-encoder") c.kind = EstimatorKind::RemoteBiencoder;
    else throw Error(Errc::InvalidConfig, fmt::format("unknown estimator \"{}\"", name));
    return c;
}

std::vector<EstimatorConfig> estimators_from_names(std::string_view comma_list) {
    std::vector<EstimatorConfig> out;
    while (!comma_list.empty()) {
        auto comma = comma_list.find(',');
        auto name = comma_list.substr(0, comma);
        while (!name.empty() && name.front() == ' ') name.remove_prefix(1);
        while (!name.empty() && name.back() == ' ') name.remove_suffix(1);
        if (!name.empty()) out.push_back(estimator_from_name(name));
        if (comma == std::string_view::npos) break;
        comma_list.remove_prefix(comma + 1);
    }
    if (out.empty()) throw Error(Errc::InvalidConfig, "empty estimator list");
    return out;
}

std::vector<EstimatorConfig> ablation_roster(const std::vector<EstimatorConfig>& roster) {
    std::vector<EstimatorConfig> out;
    for (const auto& e : roster) {
        if (!e.sumrec_family() || e.ablation != Ablation::None) continue;
        for (auto a : {Ablation::None, Ablation::WithoutSummary, Ablation::WithoutRecInfo, Ablation::FiveTurns}) {
            EstimatorConfig c = e;
            c.ablation = a;
            out.push_back(c);
        }
    }
    if (out.empty()) throw Error(Errc::InvalidConfig, "ablate needs a SumRec estimator in the roster");
    return out;
}

// ---------------------------------------------------------------------------
// Manifest

json RunManifest::to_json() const {
    json stage_list = json::array();
    for (const auto& s : stages) stage_list.push_back(json{{"name", s.name}, {"digests", s.digests}});
    return json{{"run_id", run_id},
                {"tool_version", tool_version},
                {"status", status},
                {"started_at", started_at},
                {"finished_at", finished_at},
                {"config", config},
                {"dataset_digest", dataset_digest},
                {"template_digests", template_digests},
                {"exemplar_digest", exemplar_digest},
                {"stages", stage_list},
                {"gateway", gateway_stats_json(gateway)}};
}

std::string dataset_digest(const fs::path& root) {
    std::string joined;
    for (const char* name : {"dialogues.jsonl", "spots.json", "spot_files.json"}) {
        joined += name;
        joined += ':';
        joined += sha256_file(root / name);
        joined += '\n';
    }
    return sha256_hex(joined);
}

namespace {

TemplateSet load_templates(const RunConfig& c) { return c.templates ? TemplateSet::load(*c.templates) : TemplateSet::defaults(); }

std::string exemplar_digest(const RunConfig& c) {
    return c.exemplars ? sha256_file(*c.exemplars) : sha256_hex(default_exemplar_bank_source());
}

}  // namespace

std::string compute_run_id(const RunConfig& config) {
    json id{{"config", config.snapshot()},
            {"dataset", dataset_digest(config.dataset)},
            {"templates", load_templates(config).digests()},
            {"exemplars", exemplar_digest(config)},
            {"backend", config.backend == BackendMode::Live ? "live" : "mock"}};
    if (config.backend == BackendMode::Mock && config.mock_script) id["mock_script"] = sha256_file(*config.mock_script);
    return digest_json(id).substr(0, 16);
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(RunConfig config, std::ostream& log) : config_(std::move(config)), log_(log) {
    for (auto& e : config_.estimators) {
        if (e.exemplar_seed == 0) e.exemplar_seed = config_.exemplar_seed;
    }
    config_.check_paths();
    dataset_ = load_dataset(config_.dataset);
    templates_ = load_templates(config_);
    bank_ = config_.exemplars ? load_exemplar_bank(*config_.exemplars) : default_exemplar_bank();
    run_id_ = compute_run_id(config_);
    artifacts_ = std::make_unique<ArtifactStore>(run_dir());
    if (!config_.scorer_url.empty()) remote_ = std::make_unique<RemoteScorer>(config_.scorer_url);

    manifest_.run_id = run_id_;
    manifest_.config = config_.snapshot();
    manifest_.dataset_digest = dataset_digest(config_.dataset);
    manifest_.template_digests = templates_.digests();
    manifest_.exemplar_digest = exemplar_digest(config_);
    manifest_.started_at = utc_now();
}

Pipeline::~Pipeline() = default;

fs::path Pipeline::run_dir() const { return config_.runs_dir / run_id_; }

const SplitAssignment& Pipeline::split() {
    if (split_) return *split_;
    const fs::path file = run_dir() / "split.json";
    if (fs::exists(file)) {
        split_ = load_split(file);
        if (split_->assignment.size() != dataset_.dialogues.size()) {
            throw Error(Errc::SchemaViolation, file.string() + " does not cover the dataset");
        }
    } else {
        split_ = split_dataset(dataset_, config_.ratios, config_.split_seed);
        save_split(*split_, file);
    }
    return *split_;
}

std::vector<DialogueCase> Pipeline::dialogues_in(SplitName name) {
    const auto& assignment = split().assignment;
    std::vector<DialogueCase> out;
    for (const auto& d : dataset_.dialogues) {
        if (assignment.at(d.dialogue_id) == name) out.push_back(d);
    }
    return out;
}

Gateway& Pipeline::gateway() {
    if (gateway_) return *gateway_;
    std::shared_ptr<Backend> backend;
    if (config_.backend == BackendMode::Live) {
        backend = HttpBackend::from_environment();
    } else {
        if (!config_.mock_script) throw Error(Errc::InvalidConfig, "mock backend needs mock_script in the config");
        backend = MockBackend::from_file(*config_.mock_script);
    }
    GatewayOptions opts;
    opts.cache_dir = config_.gateway.cache_dir;
    opts.use_cache = config_.use_cache;
    opts.max_attempts = config_.gateway.max_attempts;
    opts.initial_backoff = std::chrono::milliseconds(config_.gateway.initial_backoff_ms);
    opts.max_in_flight = config_.gateway.concurrency;
    gateway_ = std::make_unique<Gateway>(std::move(backend), std::move(opts));
    return *gateway_;
}

GatewayStats Pipeline::gateway_stats() const { return gateway_ ? gateway_->stats() : GatewayStats{}; }

EstimationContext Pipeline::context(std::span<const DialogueCase> train) {
    EstimationContext ctx;
    ctx.dataset = &dataset_;
    ctx.train = train;
    ctx.templates = &templates_;
    ctx.artifacts = artifacts_.get();
    ctx.remote = remote_.get();
    ctx.generation.model_id = config_.gateway.model_id;
    ctx.generation.temperature = config_.gateway.temperature;
    ctx.generation.max_output_units = config_.gateway.max_output_units;
    ctx.generation.render.context_budget = config_.gateway.context_budget;
    ctx.generation.concurrency = config_.gateway.concurrency;
    bool llm = false;
    for (const auto& e : config_.estimators) llm = llm || e.uses_llm();
    if (llm) ctx.gateway = &gateway();
    return ctx;
}

void Pipeline::generate_artifacts() {
    const auto train = dialogues_in(SplitName::Train);
    const auto test = dialogues_in(SplitName::Test);
    std::set<Topic> test_topics;
    for (const auto& d : test) test_topics.insert(d.topic);

    std::map<int, std::set<std::string>> summary_ids;  // source_turns -> dialogues
    std::set<std::string> rec_spots;
    for (const auto& e : config_.estimators) {
        if (!e.sumrec_family()) continue;
        std::set<std::string> dialogues;
        if (e.kind == EstimatorKind::RemoteBiencoder) {
            for (const auto& d : dataset_.dialogues) dialogues.insert(d.dialogue_id);
        } else {
            for (const auto& d : test) dialogues.insert(d.dialogue_id);
            for (Topic t : test_topics) {
                for (const auto& p : select_exemplars(train, PromptKind::SumRecScore, t, kScoreShots, e.exemplar_seed)) {
                    dialogues.insert(p.dialogue_id);
                    rec_spots.insert(p.spot_id);
                }
            }
        }
        if (e.ablation != Ablation::WithoutSummary) summary_ids[e.source_turns()].insert(dialogues.begin(), dialogues.end());
        if (e.ablation != Ablation::WithoutRecInfo) {
            for (const auto& id : dialogues) {
                const auto& spots = dataset_.find(id)->spot_file.spot_ids;
                rec_spots.insert(spots.begin(), spots.end());
            }
        }
    }
    if (summary_ids.empty() && rec_spots.empty()) return;

    EstimationContext ctx = context(train);
    json summary_digest = json::array();
    for (const auto& [turns, ids] : summary_ids) {
        std::vector<DialogueCase> cases;
        for (const auto& id : ids) cases.push_back(*dataset_.find(id));
        const std::size_t before = artifacts_->summary_count();
        std::vector<Exemplar> exemplars(bank_.summary.begin(), bank_.summary.end());
        auto summaries = generate_summaries(cases, turns, gateway(), templates_, exemplars, *artifacts_,
                                            ctx.generation);
        log_ << fmt::format("summaries ({}): {} dialogues, {} generated\n",
                            turns == kFullDialogue ? std::string("full") : fmt::format("{} turns", turns),
                            cases.size(), artifacts_->summary_count() - before);
        for (const auto& s : summaries) {
            summary_digest.push_back({s.dialogue_id, to_string(s.speaker), s.source_turns, s.text});
        }
    }
    if (!summary_ids.empty()) finish_stage({"summaries", {{"summaries", digest_json(summary_digest)}}});

    if (!rec_spots.empty()) {
        std::vector<TouristSpot> spots;
        for (const auto& id : rec_spots) spots.push_back(dataset_.spot(id));
        const std::size_t before = artifacts_->recommendation_count();
        auto infos = generate_recommendation_info(spots, gateway(), templates_, bank_.recommendation, *artifacts_,
                                                  ctx.generation);
        log_ << fmt::format("recommendation info: {} spots, {} generated\n", spots.size(),
                            artifacts_->recommendation_count() - before);
        json rec_digest = json::array();
        for (const auto& r : infos) rec_digest.push_back({r.spot_id, r.text});
        finish_stage({"recinfo", {{"recinfo", digest_json(rec_digest)}}});
    }
}

std::vector<PredictionSet> Pipeline::score() {
    const auto train = dialogues_in(SplitName::Train);
    const auto test = dialogues_in(SplitName::Test);
    EstimationContext ctx = context(train);
    std::vector<PredictionSet> sets;
    StageRecord stage{"scoring", {}};
    std::optional<Error> first_failure;
    for (const auto& e : config_.estimators) {
        PredictionStore store(run_dir() / "predictions" / (e.digest() + ".jsonl"));
        auto set = run_estimator(test, e, ctx, &store);
        log_ << fmt::format("{}: {} scored, {} reused, {} failed\n", e.label(), set.computed, set.reused,
                            set.failures.size());
        json values = json::array();
        for (const auto& p : set.predictions) values.push_back({p.dialogue_id, to_string(p.speaker), p.spot_id, p.value});
        stage.digests["predictions/" + e.digest() + ".jsonl"] = digest_json(values);
        if (!set.failures.empty() && !first_failure) {
            try {
                set.throw_if_failed();
            } catch (const Error& err) {
                first_failure = err;
            }
        }
        sets.push_back(std::move(set));
    }
    if (first_failure) throw *first_failure;
    finish_stage(std::move(stage));
    return sets;
}

ReportTable Pipeline::report(const std::vector<PredictionSet>& sets, bool per_topic) const {
    std::map<std::string, int> label_uses;
    for (const auto& s : sets) ++label_uses[s.estimator.label()];
    std::vector<PredictionTable> tables;
    for (const auto& s : sets) {
        std::string label = s.estimator.label();
        if (label_uses[label] > 1) label += fmt::format(" (seed {})", s.estimator.seed);
        tables.push_back(s.table(label));
    }
    std::vector<DialogueCase> test;
    for (const auto& d : dataset_.dialogues) {
        if (split_->assignment.at(d.dialogue_id) == SplitName::Test) test.push_back(d);
    }
    AggregateOptions opts;
    opts.per_topic = per_topic;
    return aggregate(tables, test, opts);
}

void Pipeline::write_report(const ReportTable& table) const {
    write_file(run_dir() / "report.csv", table.to_csv());
    write_file(run_dir() / "report.txt", table.to_text());
}

void Pipeline::export_scorer_pairs() {
    EstimationContext ctx = context({});
    StageRecord stage{"scorer_pairs", {}};
    for (const auto& e : config_.estimators) {
        if (!e.remote()) continue;
        for (SplitName split_name : {SplitName::Train, SplitName::Validation, SplitName::Test}) {
            std::string lines;
            for (const auto& d : dialogues_in(split_name)) {
                for (Speaker s : kSpeakers) {
                    for (const auto& spot : d.spot_file.spot_ids) {
                        ScorerPair pair = remote_pair(d, s, dataset_.spot(spot), e, ctx);
                        json j{{"dialogue_id", d.dialogue_id},
                               {"speaker", to_string(s)},
                               {"spot_id", spot},
                               {"left_text", pair.left_text},
                               {"right_text", pair.right_text},
                               {"score", d.scores(s).at(spot)}};
                        if (pair.speaker) j["speaker_flag"] = to_string(*pair.speaker);
                        lines += j.dump();
                        lines += '\n';
                    }
                }
            }
            const std::string rel = fmt::format("scorer_pairs/{}/{}.jsonl", e.digest().substr(0, 16), to_string(split_name));
            write_file(run_dir() / rel, lines);
            stage.digests[rel] = sha256_hex(lines);
        }
    }
    finish_stage(std::move(stage));
}

void Pipeline::finish_stage(StageRecord record) {
    manifest_.stages.push_back(std::move(record));
    write_manifest();
}

void Pipeline::write_manifest() {
    manifest_.gateway = gateway_stats();
    write_file(run_dir() / "manifest.json", manifest_.to_json().dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Commands

namespace {

int fail(std::ostream& err, const Error& e, int code = 1) {
    err << "error: " << e.what() << '\n';
    return code;
}

int run_pipeline(const RunConfig& config, std::ostream& out, std::ostream& err, bool per_topic) {
    std::unique_ptr<Pipeline> p;
    try {
        p = std::make_unique<Pipeline>(config, err);
    } catch (const Error& e) {
        return fail(err, e);
    }
    try {
        p->split();
        p->finish_stage({"split", {{"split.json", sha256_file(p->run_dir() / "split.json")}}});
        p->generate_artifacts();
        bool remote = false;
        for (const auto& e : p->config().estimators) remote = remote || e.remote();
        if (remote) p->export_scorer_pairs();
        auto sets = p->score();
        auto table = p->report(sets, per_topic);
        p->write_report(table);
        p->finish_stage({"metrics", {{"report.csv", sha256_hex(table.to_csv())}}});
        p->manifest().status = "complete";
        p->manifest().finished_at = utc_now();
        p->write_manifest();
        const auto stats = p->gateway_stats();
        out << table.to_text();
        out << fmt::format("run {}: {} gateway requests, {} cache hits, {} backend calls\n", p->run_id(),
                           stats.requests, stats.cache_hits, stats.backend_calls);
        out << "report: " << (p->run_dir() / "report.csv").string() << '\n';
        return 0;
    } catch (const Error& e) {
        p->manifest().status = std::string("failed: ") + e.what();
        p->manifest().finished_at = utc_now();
        try {
            p->write_manifest();
        } catch (const std::exception&) {
        }
        return fail(err, e);
    }
}

}  // namespace

int cmd_validate(const RunConfig& config, std::ostream& out, std::ostream& err) {
    try {
        config.check_paths();
    } catch (const Error& e) {
        return fail(err, e, 2);
    }
    Dataset dataset;
    try {
        dataset = load_dataset(config.dataset);
        if (config.templates) TemplateSet::load(*config.templates);
        if (config.exemplars) load_exemplar_bank(*config.exemplars);
    } catch (const Error& e) {
        return fail(err, e, 2);
    }
    out << format_statistics(compute_statistics(dataset, tokenizer_for(config.tokenizer)));
    return 0;
}

int cmd_split(const RunConfig& config, std::ostream& out, std::ostream& err) {
    try {
        Pipeline p(config, err);
        const auto& split = p.split();
        for (SplitName s : {SplitName::Train, SplitName::Validation, SplitName::Test}) {
            out << fmt::format("{}: {}\n", to_string(s), split.ids(s).size());
        }
        out << fmt::format("imbalance: {:.4f}\n", split_imbalance(p.dataset(), split));
        out << "split: " << (p.run_dir() / "split.json").string() << '\n';
        return 0;
    } catch (const Error& e) {
        return fail(err, e);
    }
}

int cmd_run(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return run_pipeline(config, out, err, true);
}

int cmd_ablate(const RunConfig& config, std::ostream& out, std::ostream& err) {
    RunConfig ablate = config;
    try {
        ablate.estimators = ablation_roster(config.estimators);
    } catch (const Error& e) {
        return fail(err, e);
    }
    return run_pipeline(ablate, out, err, false);
}

int cmd_report(const RunConfig& config, std::ostream& out, std::ostream& err) {
    try {
        Pipeline p(config, err);
        if (!fs::exists(p.run_dir() / "split.json")) {
            throw Error(Errc::MissingArtifact, "no split.json under " + p.run_dir().string() + "; run first");
        }
        const auto test = p.dialogues_in(SplitName::Test);
        std::vector<PredictionSet> sets;
        for (const auto& e : p.config().estimators) {
            PredictionStore store(p.run_dir() / "predictions" / (e.digest() + ".jsonl"));
            PredictionSet set;
            set.estimator = e;
            for (const auto& d : test) {
                for (Speaker s : kSpeakers) {
                    for (const auto& spot : d.spot_file.spot_ids) {
                        if (auto v = store.get({d.dialogue_id, s, spot})) {
                            set.predictions.push_back({d.dialogue_id, s, spot, *v, e});
                        }
                    }
                }
            }
            sets.push_back(std::move(set));
        }
        auto table = p.report(sets, true);
        p.write_report(table);
        out << table.to_text();
        return 0;
    } catch (const Error& e) {
        return fail(err, e);
    }
}

}  // namespace sumrec
