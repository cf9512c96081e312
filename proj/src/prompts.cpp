#include "sumrec/prompts.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/core.h>
#include <json.hpp>

#include "sumrec/digest.hpp"
#include "sumrec/error.hpp"
#include "sumrec/rng.hpp"

namespace sumrec {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(PromptKind kind) noexcept {
    switch (kind) {
    case PromptKind::Summary: return "Summary";
    case PromptKind::RecommendationInfo: return "RecommendationInfo";
    case PromptKind::SumRecScore: return "SumRecScore";
    case PromptKind::BaselineScore: return "BaselineScore";
    }
    return "?";
}

std::string_view template_file_stem(PromptKind kind) noexcept {
    switch (kind) {
    case PromptKind::Summary: return "summary";
    case PromptKind::RecommendationInfo: return "recommendation_info";
    case PromptKind::SumRecScore: return "sumrec_score";
    case PromptKind::BaselineScore: return "baseline_score";
    }
    return "?";
}

std::string_view to_string(Role role) noexcept { return role == Role::System ? "system" : "user"; }

namespace {

const std::set<std::string>& vocabulary(PromptKind kind) {
    static const std::map<PromptKind, std::set<std::string>> vocab{
        {PromptKind::Summary, {"index", "dialogue", "summary_a", "summary_b", "speaker", "text"}},
        {PromptKind::RecommendationInfo, {"index", "name", "description", "recommendation"}},
        {PromptKind::SumRecScore,
         {"index", "speaker_characteristics", "description", "recommended_person_block", "recommended_person",
          "score"}},
        {PromptKind::BaselineScore, {"index", "dialogue", "description", "speaker", "score", "text"}},
    };
    return vocab.at(kind);
}

// Calls fn(name) for every placeholder in `format`.
template <typename Fn>
void scan_placeholders(std::string_view format, Fn&& fn) {
    for (std::size_t i = 0; i < format.size(); ++i) {
        char c = format[i];
        if (c == '{') {
            if (i + 1 < format.size() && format[i + 1] == '{') {
                ++i;
                continue;
            }
            auto close = format.find('}', i + 1);
            if (close == std::string_view::npos) {
                throw Error(Errc::TemplateMismatch, fmt::format("unterminated placeholder at offset {}", i));
            }
            fn(format.substr(i + 1, close - i - 1), i, close);
            i = close;
        } else if (c == '}' && i + 1 < format.size() && format[i + 1] == '}') {
            ++i;
        }
    }
}

std::string rstrip_newlines(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

}  // namespace

std::string render_format(std::string_view format, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(format.size() * 2);
    for (std::size_t i = 0; i < format.size(); ++i) {
        char c = format[i];
        if (c == '{') {
            if (i + 1 < format.size() && format[i + 1] == '{') {
                out.push_back('{');
                ++i;
                continue;
            }
            auto close = format.find('}', i + 1);
            if (close == std::string_view::npos) {
                throw Error(Errc::TemplateMismatch, fmt::format("unterminated placeholder at offset {}", i));
            }
            std::string name(format.substr(i + 1, close - i - 1));
            auto it = values.find(name);
            if (it == values.end()) throw Error(Errc::TemplateMismatch, "no value for placeholder {" + name + "}");
            out += it->second;
            i = close;
        } else if (c == '}' && i + 1 < format.size() && format[i + 1] == '}') {
            out.push_back('}');
            ++i;
        } else {
            out.push_back(c);
        }
    }
    return out;
}

PromptTemplate parse_template(PromptKind kind, std::string_view text) {
    PromptTemplate tpl;
    tpl.kind = kind;
    tpl.source = std::string(text);

    std::map<std::string, std::string> sections;
    std::string* current = nullptr;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.rfind("@@ ", 0) == 0) {
            std::string name = line.substr(3);
            while (!name.empty() && name.back() == ' ') name.pop_back();
            if (sections.count(name)) throw Error(Errc::TemplateMismatch, "duplicate section '" + name + "'");
            current = &sections[name];
            continue;
        }
        if (!current) {
            if (line.find_first_not_of(" \t") != std::string::npos) {
                throw Error(Errc::TemplateMismatch, "text before the first '@@' section marker");
            }
            continue;
        }
        *current += line;
        *current += '\n';
    }

    static const std::set<std::string> known{"header", "exemplar", "target", "utterance", "recommended_person"};
    for (const char* required : {"header", "exemplar", "target"}) {
        if (!sections.count(required)) {
            throw Error(Errc::TemplateMismatch,
                        fmt::format("{} template lacks the '{}' section", to_string(kind), required));
        }
    }
    const auto& vocab = vocabulary(kind);
    for (const auto& [name, body] : sections) {
        if (!known.count(name)) throw Error(Errc::TemplateMismatch, "unknown section '" + name + "'");
        scan_placeholders(body, [&](std::string_view ph, std::size_t, std::size_t) {
            if (!vocab.count(std::string(ph))) {
                throw Error(Errc::TemplateMismatch, fmt::format("placeholder {{{}}} is not valid for {} templates",
                                                                ph, to_string(kind)));
            }
        });
    }
    tpl.task_header = sections["header"];
    tpl.exemplar_block_format = sections["exemplar"];
    tpl.target_block_format = sections["target"];
    if (sections.count("utterance")) tpl.sub_formats["utterance"] = rstrip_newlines(sections["utterance"]);
    if (sections.count("recommended_person")) tpl.sub_formats["recommended_person"] = sections["recommended_person"];
    return tpl;
}

namespace {
#include "sumrec/default_templates.inc"
}  // namespace

TemplateSet TemplateSet::defaults() {
    static const TemplateSet set = [] {
        TemplateSet s;
        for (const auto& [kind, text] : kDefaultTemplates) s.templates_[kind] = parse_template(kind, text);
        return s;
    }();
    return set;
}

TemplateSet TemplateSet::load(const fs::path& dir) {
    TemplateSet s;
    for (PromptKind kind : kPromptKinds) {
        fs::path file = dir / (std::string(template_file_stem(kind)) + ".txt");
        std::ifstream in(file, std::ios::binary);
        if (!in) throw Error(Errc::MissingFile, file.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        try {
            s.templates_[kind] = parse_template(kind, buf.str());
        } catch (const Error& e) {
            throw e.with_context(file.string());
        }
    }
    return s;
}

std::map<std::string, std::string> TemplateSet::digests() const {
    std::map<std::string, std::string> out;
    for (const auto& [kind, tpl] : templates_) out[std::string(template_file_stem(kind))] = sha256_hex(tpl.source);
    return out;
}

// ---------------------------------------------------------------------------
// Exemplars

namespace {
void check_gold(int score) {
    if (score < 1 || score > 5) {
        throw Error(Errc::InvalidExemplar, fmt::format("exemplar gold score {} not in 1..5", score));
    }
}
}  // namespace

SumRecScoreExemplar::SumRecScoreExemplar(std::string speaker_text_, std::string description_,
                                         std::optional<std::string> recommended_person_, int score_)
    : speaker_text(std::move(speaker_text_)),
      description(std::move(description_)),
      recommended_person(std::move(recommended_person_)),
      score(score_) {
    check_gold(score);
}

BaselineScoreExemplar::BaselineScoreExemplar(std::vector<Utterance> dialogue_, std::string description_,
                                             Speaker speaker_, int score_)
    : dialogue(std::move(dialogue_)), description(std::move(description_)), speaker(speaker_), score(score_) {
    check_gold(score);
}

PromptKind kind_of(const Exemplar& exemplar) noexcept {
    switch (exemplar.index()) {
    case 0: return PromptKind::Summary;
    case 1: return PromptKind::RecommendationInfo;
    case 2: return PromptKind::SumRecScore;
    default: return PromptKind::BaselineScore;
    }
}

ExemplarBank parse_exemplar_bank(const json& doc, const std::string& source) {
    ExemplarBank bank;
    try {
        for (const json& e : doc.at("summary")) {
            SummaryExemplar ex;
            int index = 1;
            for (const json& u : e.at("dialogue")) {
                auto sp = parse_speaker(u.at("speaker").get<std::string>());
                if (!sp) throw Error(Errc::SchemaViolation, source + ": bad speaker in summary exemplar");
                ex.dialogue.push_back(Utterance{index++, *sp, u.at("text").get<std::string>()});
            }
            ex.summary_a = e.at("summary_a").get<std::string>();
            ex.summary_b = e.at("summary_b").get<std::string>();
            bank.summary.emplace_back(std::move(ex));
        }
        for (const json& e : doc.at("recommendation_info")) {
            bank.recommendation.emplace_back(RecommendationExemplar{e.at("name").get<std::string>(),
                                                                    e.at("description").get<std::string>(),
                                                                    e.at("recommendation").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw Error(Errc::SchemaViolation, fmt::format("{}: {}", source, e.what()));
    }
    return bank;
}

ExemplarBank load_exemplar_bank(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(Errc::MissingFile, file.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(Errc::SchemaViolation, fmt::format("{}: {}", file.string(), e.what()));
    }
    return parse_exemplar_bank(doc, file.string());
}

const ExemplarBank& default_exemplar_bank() {
    static const ExemplarBank bank = parse_exemplar_bank(json::parse(kDefaultExemplars), "built-in exemplars");
    return bank;
}

const std::string& default_exemplar_bank_source() {
    static const std::string source = kDefaultExemplars;
    return source;
}

std::vector<ExemplarPick> select_exemplars(std::span<const DialogueCase> train, PromptKind kind, Topic topic,
                                           std::size_t n, std::uint64_t seed) {
    if (kind != PromptKind::SumRecScore && kind != PromptKind::BaselineScore) {
        throw Error(Errc::TemplateMismatch,
                    fmt::format("{} exemplars are author-prepared, not sampled", to_string(kind)));
    }
    std::vector<const DialogueCase*> candidates;
    for (const auto& d : train) {
        if (d.topic == topic) candidates.push_back(&d);
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const DialogueCase* a, const DialogueCase* b) { return a->dialogue_id < b->dialogue_id; });
    if (candidates.size() < n) {
        throw Error(Errc::InsufficientExemplars,
                    fmt::format("{} needs {} training dialogues, only {} available", to_string(topic), n,
                                candidates.size()));
    }

    Rng rng(splitmix64(seed ^ fnv1a64(topic_code(topic))));
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, candidates.size() - i));
        std::swap(candidates[i], candidates[j]);
    }
    std::vector<ExemplarPick> picks;
    picks.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const DialogueCase& d = *candidates[i];
        ExemplarPick p;
        p.dialogue_id = d.dialogue_id;
        p.speaker = uniform_below(rng, 2) == 0 ? Speaker::A : Speaker::B;
        p.spot_id = d.spot_file.spot_ids.at(uniform_below(rng, d.spot_file.spot_ids.size()));
        p.gold_score = d.scores(p.speaker).at(p.spot_id);
        picks.push_back(std::move(p));
    }
    return picks;
}

// ---------------------------------------------------------------------------
// Rendering

std::string PromptMessages::text() const {
    std::string out;
    for (std::size_t i = 0; i < messages.size(); ++i) {
        if (i) out += "\n\n";
        out += messages[i].content;
    }
    return out;
}

std::size_t estimate_units(std::string_view text) noexcept { return (text.size() + 3) / 4; }

std::string render_dialogue(const PromptTemplate& tpl, std::span<const Utterance> utterances) {
    auto it = tpl.sub_formats.find("utterance");
    const std::string_view line_format = it == tpl.sub_formats.end() ? std::string_view("{speaker}: {text}")
                                                                     : std::string_view(it->second);
    std::string out;
    for (const auto& u : utterances) {
        if (!out.empty()) out += '\n';
        out += render_format(line_format, {{"speaker", std::string(to_string(u.speaker))}, {"text", u.text}});
    }
    return out;
}

namespace {

using Values = std::map<std::string, std::string>;

PromptMessages assemble(const PromptTemplate& tpl, const std::vector<Values>& exemplars, Values target,
                        const RenderOptions& options) {
    std::string body;
    for (std::size_t i = 0; i < exemplars.size(); ++i) {
        Values v = exemplars[i];
        v["index"] = std::to_string(i + 1);
        body += render_format(tpl.exemplar_block_format, v);
    }
    target["index"] = std::to_string(exemplars.size() + 1);
    body += render_format(tpl.target_block_format, target);

    PromptMessages out;
    if (options.header_as_system) {
        out.messages.push_back({Role::System, rstrip_newlines(tpl.task_header)});
        out.messages.push_back({Role::User, rstrip_newlines(body)});
    } else {
        out.messages.push_back({Role::User, rstrip_newlines(tpl.task_header + body)});
    }
    return out;
}

std::size_t total_units(const PromptMessages& m) {
    std::size_t units = 0;
    for (const auto& msg : m.messages) units += estimate_units(msg.content);
    return units;
}

// Renders with `render(drops)`; while over budget, drops the oldest utterance of
// the exemplar dialogue that currently has the most utterances left.
template <typename Render>
PromptMessages fit_budget(const std::vector<std::size_t>& exemplar_lengths, const RenderOptions& options,
                          Render&& render) {
    std::vector<std::size_t> drops(exemplar_lengths.size(), 0);
    for (;;) {
        PromptMessages m = render(drops);
        const std::size_t units = total_units(m);
        if (units <= options.context_budget) return m;
        int victim = -1;
        std::size_t most = 0;
        for (std::size_t i = 0; i < drops.size(); ++i) {
            std::size_t left = exemplar_lengths[i] - drops[i];
            if (left > most) {
                most = left;
                victim = static_cast<int>(i);
            }
        }
        if (victim < 0) {
            throw Error(Errc::ContextOverflow, fmt::format("prompt needs {} units, budget is {}", units,
                                                           options.context_budget));
        }
        ++drops[victim];
    }
}

void require_kind(std::span<const Exemplar> exemplars, PromptKind kind) {
    for (const auto& e : exemplars) {
        if (kind_of(e) != kind) {
            throw Error(Errc::TemplateMismatch, fmt::format("expected {} exemplars, got a {} exemplar",
                                                            to_string(kind), to_string(kind_of(e))));
        }
    }
}

void require_count(std::span<const Exemplar> exemplars, std::size_t n, PromptKind kind) {
    if (exemplars.size() != n) {
        throw Error(Errc::WrongExemplarCount,
                    fmt::format("{} prompt takes exactly {} exemplars, got {}", to_string(kind), n, exemplars.size()));
    }
}

}  // namespace

PromptMessages build_summary_prompt(const DialogueCase& dialogue, std::span<const Exemplar> exemplars,
                                    const TemplateSet& templates, const RenderOptions& options) {
    if (exemplars.empty()) throw Error(Errc::TemplateMismatch, "summary prompt needs its one-shot exemplar");
    require_kind(exemplars, PromptKind::Summary);
    require_count(exemplars, kSummaryShots, PromptKind::Summary);
    const PromptTemplate& tpl = templates.get(PromptKind::Summary);

    std::vector<std::size_t> lengths;
    for (const auto& e : exemplars) lengths.push_back(std::get<SummaryExemplar>(e).dialogue.size());
    const std::string target_dialogue = render_dialogue(tpl, dialogue.utterances);

    return fit_budget(lengths, options, [&](const std::vector<std::size_t>& drops) {
        std::vector<Values> ex;
        for (std::size_t i = 0; i < exemplars.size(); ++i) {
            const auto& s = std::get<SummaryExemplar>(exemplars[i]);
            auto kept = std::span<const Utterance>(s.dialogue).subspan(drops[i]);
            ex.push_back({{"dialogue", render_dialogue(tpl, kept)},
                          {"summary_a", s.summary_a},
                          {"summary_b", s.summary_b}});
        }
        return assemble(tpl, ex, {{"dialogue", target_dialogue}}, options);
    });
}

PromptMessages build_recommendation_prompt(const TouristSpot& spot, std::span<const Exemplar> exemplars,
                                           const TemplateSet& templates, const RenderOptions& options) {
    require_count(exemplars, kRecommendationShots, PromptKind::RecommendationInfo);
    require_kind(exemplars, PromptKind::RecommendationInfo);
    const PromptTemplate& tpl = templates.get(PromptKind::RecommendationInfo);
    std::vector<Values> ex;
    for (const auto& e : exemplars) {
        const auto& r = std::get<RecommendationExemplar>(e);
        ex.push_back({{"name", r.name}, {"description", r.description}, {"recommendation", r.recommendation}});
    }
    return fit_budget({}, options, [&](const std::vector<std::size_t>&) {
        return assemble(tpl, ex, {{"name", spot.name}, {"description", spot.description}}, options);
    });
}

PromptMessages build_sumrec_score_prompt(std::string_view speaker_text, std::string_view spot_description,
                                         const std::optional<std::string>& rec_info,
                                         std::span<const Exemplar> exemplars, const TemplateSet& templates,
                                         const RenderOptions& options) {
    require_count(exemplars, kScoreShots, PromptKind::SumRecScore);
    require_kind(exemplars, PromptKind::SumRecScore);
    const PromptTemplate& tpl = templates.get(PromptKind::SumRecScore);

    auto block = [&](const std::optional<std::string>& person) -> std::string {
        if (!person) return "";
        auto it = tpl.sub_formats.find("recommended_person");
        if (it == tpl.sub_formats.end()) {
            throw Error(Errc::TemplateMismatch, "SumRecScore template lacks the 'recommended_person' section");
        }
        return render_format(it->second, {{"recommended_person", *person}});
    };

    std::vector<Values> ex;
    for (const auto& e : exemplars) {
        const auto& s = std::get<SumRecScoreExemplar>(e);
        // Exemplars follow the target's shape: no recommended-person block when the target has none.
        ex.push_back({{"speaker_characteristics", s.speaker_text},
                      {"description", s.description},
                      {"recommended_person_block", block(rec_info ? s.recommended_person : std::nullopt)},
                      {"score", std::to_string(s.score)}});
    }
    Values target{{"speaker_characteristics", std::string(speaker_text)},
                  {"description", std::string(spot_description)},
                  {"recommended_person_block", block(rec_info)}};
    return fit_budget({}, options, [&](const std::vector<std::size_t>&) { return assemble(tpl, ex, target, options); });
}

PromptMessages build_baseline_score_prompt(std::span<const Utterance> dialogue, std::string_view spot_description,
                                           Speaker target_speaker, std::span<const Exemplar> exemplars,
                                           const TemplateSet& templates, const RenderOptions& options) {
    require_count(exemplars, kScoreShots, PromptKind::BaselineScore);
    require_kind(exemplars, PromptKind::BaselineScore);
    const PromptTemplate& tpl = templates.get(PromptKind::BaselineScore);

    std::vector<std::size_t> lengths;
    for (const auto& e : exemplars) lengths.push_back(std::get<BaselineScoreExemplar>(e).dialogue.size());
    const std::string target_dialogue = render_dialogue(tpl, dialogue);

    return fit_budget(lengths, options, [&](const std::vector<std::size_t>& drops) {
        std::vector<Values> ex;
        for (std::size_t i = 0; i < exemplars.size(); ++i) {
            const auto& b = std::get<BaselineScoreExemplar>(exemplars[i]);
            auto kept = std::span<const Utterance>(b.dialogue).subspan(drops[i]);
            ex.push_back({{"dialogue", render_dialogue(tpl, kept)},
                          {"description", b.description},
                          {"speaker", std::string(to_string(b.speaker))},
                          {"score", std::to_string(b.score)}});
        }
        return assemble(tpl, ex,
                        {{"dialogue", target_dialogue},
                         {"description", std::string(spot_description)},
                         {"speaker", std::string(to_string(target_speaker))}},
                        options);
    });
}

}  // namespace sumrec
