#pragma once

// Ranking metrics over per-speaker spot lists: NDCG@k with exponential gain,
// thresholded Recall@k and tie-corrected Spearman, plus per-topic aggregation
// into a results table. All functions are pure.

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "sumrec/corpus.hpp"

namespace sumrec {

enum class MetricName { NDCG, Recall, Spearman };
enum class TiePolicy {
    Strict,       // a predicted tie touching the top-k makes NDCG undefined
    StableIndex,  // ties keep input order
};

std::string_view to_string(MetricName name) noexcept;

struct RankedItem {
    std::string spot_id;
    double predicted = 0;
    int truth = 0;
};

struct RankedCase {
    std::string dialogue_id;
    Speaker speaker = Speaker::A;
    std::vector<RankedItem> items;
};

struct MetricValue {
    MetricName name = MetricName::NDCG;
    std::optional<int> k;
    std::optional<double> value;
    std::string reason_if_undefined;

    bool defined() const noexcept { return value.has_value(); }
};

/// sum_{i=1}^{min(k,n)} (2^rel_i - 1) / log2(i + 1)
double dcg_at_k(std::span<const int> rels, int k);

/// Item indices ordered by predicted score, descending; ties keep input order.
std::vector<std::size_t> rank_order(const RankedCase& c);

MetricValue ndcg_at_k(const RankedCase& c, int k, TiePolicy ties = TiePolicy::Strict);
MetricValue recall_at_k(const RankedCase& c, int k, int relevance_threshold = 4);
MetricValue spearman(const RankedCase& c);

/// Fractional (average) ranks, 1-based, ascending by value.
std::vector<double> average_ranks(std::span<const double> values);

// ---------------------------------------------------------------------------
// Aggregation

enum class Column { N1, N3, N5, R1, R3, R5, Coef };
inline constexpr std::size_t kColumns = 7;
inline constexpr std::array<const char*, kColumns> kColumnHeaders{"N@1", "N@3", "N@5", "R@1", "R@3", "R@5", "Coef."};
inline constexpr std::array<const char*, kColumns> kCsvColumns{"n1", "n3", "n5", "r1", "r3", "r5", "coef"};

struct MetricConfig {
    TiePolicy ndcg_ties = TiePolicy::Strict;
    int relevance_threshold = 4;
};

/// The seven table metrics for one case, in Column order.
std::array<MetricValue, kColumns> evaluate_case(const RankedCase& c, const MetricConfig& config = {});

struct TripleKey {
    std::string dialogue_id;
    Speaker speaker = Speaker::A;
    std::string spot_id;

    auto operator<=>(const TripleKey&) const = default;
};

/// One estimator's predictions, keyed by (dialogue, speaker, spot).
struct PredictionTable {
    std::string label;
    bool discrete_output = false;  // NDCG columns rendered "-"
    std::map<TripleKey, double> values;
};

struct Cell {
    std::optional<double> mean;
    std::size_t defined = 0;
    std::size_t undefined = 0;
    bool suppressed = false;
};

struct ReportRow {
    std::string topic;  // "ALL" or a topic name
    std::string estimator;
    std::array<Cell, kColumns> cells;
};

struct ReportTable {
    std::vector<ReportRow> rows;

    const ReportRow* find(std::string_view topic, std::string_view estimator) const;
    /// report.csv: topic,estimator,n1,n3,n5,r1,r3,r5,coef,undefined_counts
    std::string to_csv() const;
    /// Fixed-width text table, three decimals.
    std::string to_text() const;
};

struct AggregateOptions {
    MetricConfig metrics;
    /// Emit per-topic rows after ALL. Skipped when the cases span a single topic.
    bool per_topic = true;
};

/// Builds the RankedCase of (dialogue, speaker) from a prediction table; throws
/// Error(CoverageGap) when a spot has no prediction.
RankedCase ranked_case(const DialogueCase& d, Speaker speaker, const PredictionTable& table);

/// Cells are unweighted means over the (dialogue, speaker) cases where the
/// metric is defined. Throws Error(CoverageGap) listing missing triples.
ReportTable aggregate(std::span<const PredictionTable> estimators, std::span<const DialogueCase> cases,
                      const AggregateOptions& options = {});

}  // namespace sumrec
