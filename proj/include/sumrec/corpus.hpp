#pragma once

// Chat-dialogue corpus: loading, validation, balanced splitting, statistics and
// turn truncation. A Dataset is immutable after load and may be shared freely
// across threads.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sumrec {

enum class Speaker { A, B };
enum class Topic { Travel, ExceptForTravel, NoRestriction };
enum class SplitName { Train, Validation, Test };

inline constexpr std::array<Speaker, 2> kSpeakers{Speaker::A, Speaker::B};
inline constexpr std::array<Topic, 3> kTopics{Topic::Travel, Topic::ExceptForTravel,
                                              Topic::NoRestriction};

std::string_view to_string(Speaker s) noexcept;
std::string_view to_string(Topic t) noexcept;       // "Travel", "ExceptForTravel", "NoRestriction"
std::string_view topic_code(Topic t) noexcept;      // "T", "E", "N"
std::string_view to_string(SplitName s) noexcept;   // "train", "valid", "test"
std::optional<Speaker> parse_speaker(std::string_view s) noexcept;
std::optional<Topic> parse_topic_code(std::string_view s) noexcept;
std::optional<SplitName> parse_split_name(std::string_view s) noexcept;

struct Utterance {
    int index = 0;  // 1-based
    Speaker speaker = Speaker::A;
    std::string text;

    bool operator==(const Utterance&) const = default;
};

struct TouristSpot {
    std::string spot_id;
    std::string name;
    std::string description;
    std::optional<std::string> category;
    std::optional<std::string> prefecture;

    bool operator==(const TouristSpot&) const = default;
};

struct SpotFile {
    std::string file_id;
    std::vector<std::string> spot_ids;

    bool operator==(const SpotFile&) const = default;
};

inline constexpr std::size_t kMinSpotsPerFile = 10;
inline constexpr std::size_t kMaxSpotsPerFile = 20;
inline constexpr std::size_t kMinUtterances = 20;

struct DialogueCase {
    std::string dialogue_id;
    Topic topic = Topic::NoRestriction;
    std::vector<Utterance> utterances;
    SpotFile spot_file;
    std::map<std::string, int> scores_a;
    std::map<std::string, int> scores_b;
    std::map<std::string, std::vector<double>> human_predictions;

    const std::map<std::string, int>& scores(Speaker s) const {
        return s == Speaker::A ? scores_a : scores_b;
    }

    bool operator==(const DialogueCase&) const = default;
};

struct Dataset {
    std::vector<DialogueCase> dialogues;  // sorted by dialogue_id
    std::map<std::string, TouristSpot> spots;
    std::map<std::string, SpotFile> spot_files;

    const TouristSpot& spot(const std::string& spot_id) const;
    const DialogueCase* find(std::string_view dialogue_id) const;

    bool operator==(const Dataset&) const = default;
};

/// Loads `<root>/dialogues.jsonl`, `spots.json` and `spot_files.json`, validating
/// every invariant. Throws Error with MissingFile, SchemaViolation,
/// DanglingSpotReference or ScoreOutOfRange.
Dataset load_dataset(const std::filesystem::path& root);

/// Writes the same three files; load_dataset(save_dataset(d)) == d.
void save_dataset(const Dataset& dataset, const std::filesystem::path& root);

/// Checks all invariants of an in-memory dataset (load_dataset calls this).
void validate_dataset(const Dataset& dataset);

// ---------------------------------------------------------------------------
// Splitting

struct SplitAssignment {
    std::map<std::string, SplitName> assignment;
    std::uint64_t seed = 0;

    std::vector<std::string> ids(SplitName split) const;
    bool operator==(const SplitAssignment&) const = default;
};

struct SplitRatios {
    unsigned train = 8;
    unsigned validation = 1;
    unsigned test = 1;
};

/// Split capacities for `n` items: floor of the ratio share, remainder handed out
/// by largest fractional part (ties to the earlier split).
std::array<std::size_t, 3> split_sizes(std::size_t n, SplitRatios ratios);

/// Category key used for balancing: spot category, else prefecture, else "unknown".
std::string balance_key(const TouristSpot& spot);

/// Per-dialogue category histogram (one count per spot occurrence in its spot file).
std::map<std::string, double> category_histogram(const Dataset& dataset, const DialogueCase& d);

/// Greedy category-balanced split. Dialogues are visited in a seeded shuffle and
/// each goes to the open split whose placement least increases the summed L1
/// distance between split histograms and the global category distribution.
/// Throws Error(EmptyDataset) when there are no dialogues.
SplitAssignment split_dataset(const Dataset& dataset, SplitRatios ratios, std::uint64_t seed);

/// Sum over non-empty splits of L1(normalized split histogram, global distribution).
double split_imbalance(const Dataset& dataset, const SplitAssignment& split);

void save_split(const SplitAssignment& split, const std::filesystem::path& file);
SplitAssignment load_split(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// Statistics

using Tokenizer = std::function<std::vector<std::string>(std::string_view)>;

/// Whitespace split; inside a chunk each maximal run of CJK codepoints is one
/// token and each maximal run of other codepoints is another.
std::vector<std::string> default_tokenize(std::string_view text);

struct TopicStats {
    std::size_t dialogues = 0;
    std::size_t utterances = 0;
    std::size_t tokens = 0;
    std::size_t spots = 0;
    std::optional<double> words_per_utterance;
    std::optional<double> spots_per_dialogue;
};

struct CorpusStats {
    std::map<Topic, TopicStats> per_topic;  // every topic present, possibly zero
    TopicStats all;
};

CorpusStats compute_statistics(const Dataset& dataset, const Tokenizer& tokenizer = default_tokenize);
CorpusStats compute_statistics(const std::vector<DialogueCase>& dialogues,
                               const Tokenizer& tokenizer = default_tokenize);

/// Table-style text rendering of the statistics block.
std::string format_statistics(const CorpusStats& stats);

// ---------------------------------------------------------------------------

/// Copy holding the first 2*turns utterances; scores untouched. turns >= 1.
DialogueCase truncate_dialogue(const DialogueCase& dialogue, int turns);

}  // namespace sumrec
