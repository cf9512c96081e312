#pragma once

// Prompt construction for the four generation/scoring calls. Templates are
// data (templates/<kind>.txt) with `{placeholder}` slots; everything here is
// pure and thread-safe.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "sumrec/corpus.hpp"

namespace sumrec {

enum class PromptKind { Summary, RecommendationInfo, SumRecScore, BaselineScore };

inline constexpr std::array<PromptKind, 4> kPromptKinds{PromptKind::Summary, PromptKind::RecommendationInfo,
                                                        PromptKind::SumRecScore, PromptKind::BaselineScore};

std::string_view to_string(PromptKind kind) noexcept;
/// File stem under the template directory, e.g. "sumrec_score".
std::string_view template_file_stem(PromptKind kind) noexcept;

/// A parsed template file. Sections are introduced by lines of the form
/// `@@ <name>`; `header`, `exemplar` and `target` are required, `utterance`
/// and `recommended_person` are optional sub-formats.
struct PromptTemplate {
    PromptKind kind = PromptKind::Summary;
    std::string task_header;
    std::string exemplar_block_format;
    std::string target_block_format;
    std::map<std::string, std::string> sub_formats;
    std::string source;  // raw file text, used for digests

    bool operator==(const PromptTemplate&) const = default;
};

/// Parses template text; throws Error(TemplateMismatch) for missing sections or
/// placeholders outside the kind's vocabulary.
PromptTemplate parse_template(PromptKind kind, std::string_view text);

/// Substitutes `{name}` placeholders; `{{` and `}}` escape braces. Throws
/// Error(TemplateMismatch) on an unknown or unterminated placeholder.
std::string render_format(std::string_view format, const std::map<std::string, std::string>& values);

class TemplateSet {
public:
    /// The English templates shipped under templates/, compiled in.
    static TemplateSet defaults();
    /// Reads `<dir>/<stem>.txt` for every kind.
    static TemplateSet load(const std::filesystem::path& dir);

    const PromptTemplate& get(PromptKind kind) const { return templates_.at(kind); }
    /// kind name -> sha256 of the template source.
    std::map<std::string, std::string> digests() const;

private:
    std::map<PromptKind, PromptTemplate> templates_;
};

// ---------------------------------------------------------------------------
// Exemplars

struct SummaryExemplar {
    std::vector<Utterance> dialogue;
    std::string summary_a;
    std::string summary_b;
};

struct RecommendationExemplar {
    std::string name;
    std::string description;
    std::string recommendation;
};

/// One solved scoring example for the summary-based scorer. Gold score must be 1..5.
struct SumRecScoreExemplar {
    SumRecScoreExemplar(std::string speaker_text, std::string description,
                        std::optional<std::string> recommended_person, int score);

    std::string speaker_text;
    std::string description;
    std::optional<std::string> recommended_person;
    int score;
};

/// One solved scoring example for the dialogue-based baseline. Gold score must be 1..5.
struct BaselineScoreExemplar {
    BaselineScoreExemplar(std::vector<Utterance> dialogue, std::string description, Speaker speaker, int score);

    std::vector<Utterance> dialogue;
    std::string description;
    Speaker speaker;
    int score;
};

using Exemplar = std::variant<SummaryExemplar, RecommendationExemplar, SumRecScoreExemplar, BaselineScoreExemplar>;

PromptKind kind_of(const Exemplar& exemplar) noexcept;

/// Author-prepared exemplars (the one-shot summary and five-shot recommendation
/// examples). File layout: {"summary": [...], "recommendation_info": [...]}.
struct ExemplarBank {
    std::vector<Exemplar> summary;
    std::vector<Exemplar> recommendation;
};
ExemplarBank load_exemplar_bank(const std::filesystem::path& file);
ExemplarBank parse_exemplar_bank(const nlohmann::json& doc, const std::string& source);
/// The bank shipped as templates/exemplars.json, compiled in.
const ExemplarBank& default_exemplar_bank();
const std::string& default_exemplar_bank_source();

/// A training triple chosen as a scoring exemplar; texts are attached later
/// from generated artifacts.
struct ExemplarPick {
    std::string dialogue_id;
    Speaker speaker = Speaker::A;
    std::string spot_id;
    int gold_score = 0;

    bool operator==(const ExemplarPick&) const = default;
};

/// Seeded uniform sampling without replacement of `n` training dialogues of
/// `topic`, each paired with a seeded speaker and spot. Only score kinds
/// sample; Summary and RecommendationInfo exemplars come from the bank.
/// Throws Error(InsufficientExemplars) or Error(TemplateMismatch).
std::vector<ExemplarPick> select_exemplars(std::span<const DialogueCase> train, PromptKind kind, Topic topic,
                                           std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Rendering

enum class Role { System, User };
std::string_view to_string(Role role) noexcept;

struct Message {
    Role role = Role::User;
    std::string content;

    bool operator==(const Message&) const = default;
};

struct PromptMessages {
    std::vector<Message> messages;

    /// All message contents joined by a blank line.
    std::string text() const;
    bool operator==(const PromptMessages&) const = default;
};

struct RenderOptions {
    /// Budget in estimate units (one unit per 4 UTF-8 bytes, rounded up).
    std::size_t context_budget = 15'000;
    /// Put the task header in a system message instead of one user message.
    bool header_as_system = false;
};

std::size_t estimate_units(std::string_view text) noexcept;

/// "A: ..." / "B: ..." lines, formatted by the template's utterance sub-format.
std::string render_dialogue(const PromptTemplate& tpl, std::span<const Utterance> utterances);

inline constexpr std::size_t kSummaryShots = 1;
inline constexpr std::size_t kScoreShots = 5;
inline constexpr std::size_t kRecommendationShots = 5;

PromptMessages build_summary_prompt(const DialogueCase& dialogue, std::span<const Exemplar> exemplars,
                                    const TemplateSet& templates, const RenderOptions& options = {});

PromptMessages build_recommendation_prompt(const TouristSpot& spot, std::span<const Exemplar> exemplars,
                                           const TemplateSet& templates, const RenderOptions& options = {});

/// `rec_info` absent drops the recommended-person block from target and exemplars.
PromptMessages build_sumrec_score_prompt(std::string_view speaker_text, std::string_view spot_description,
                                         const std::optional<std::string>& rec_info,
                                         std::span<const Exemplar> exemplars, const TemplateSet& templates,
                                         const RenderOptions& options = {});

PromptMessages build_baseline_score_prompt(std::span<const Utterance> dialogue, std::string_view spot_description,
                                           Speaker target_speaker, std::span<const Exemplar> exemplars,
                                           const TemplateSet& templates, const RenderOptions& options = {});

}  // namespace sumrec
