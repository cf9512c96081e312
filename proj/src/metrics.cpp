#include "sumrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/core.h>

#include "sumrec/error.hpp"

namespace sumrec {

std::string_view to_string(MetricName name) noexcept {
    switch (name) {
    case MetricName::NDCG: return "NDCG";
    case MetricName::Recall: return "Recall";
    case MetricName::Spearman: return "Spearman";
    }
    return "?";
}

double dcg_at_k(std::span<const int> rels, int k) {
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), rels.size());
    double dcg = 0;
    for (std::size_t i = 0; i < n; ++i) {
        dcg += (std::exp2(static_cast<double>(rels[i])) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg;
}

std::vector<std::size_t> rank_order(const RankedCase& c) {
    std::vector<std::size_t> order(c.items.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return c.items[a].predicted > c.items[b].predicted; });
    return order;
}

namespace {

MetricValue undefined(MetricName name, std::optional<int> k, std::string reason) {
    return MetricValue{name, k, std::nullopt, std::move(reason)};
}

}  // namespace

MetricValue ndcg_at_k(const RankedCase& c, int k, TiePolicy ties) {
    if (k < 1) throw Error(Errc::InvalidConfig, "ndcg_at_k: k must be >= 1");
    if (c.items.empty()) return undefined(MetricName::NDCG, k, "no items");
    const auto order = rank_order(c);
    const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());

    if (ties == TiePolicy::Strict) {
        for (std::size_t i = 0; i < top && i + 1 < order.size(); ++i) {
            if (c.items[order[i]].predicted == c.items[order[i + 1]].predicted) {
                return undefined(MetricName::NDCG, k, "tied predictions within the top-k");
            }
        }
    }

    std::vector<int> ranked;
    ranked.reserve(order.size());
    for (std::size_t idx : order) ranked.push_back(c.items[idx].truth);
    std::vector<int> ideal = ranked;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());

    const double idcg = dcg_at_k(ideal, k);
    if (idcg <= 0) return undefined(MetricName::NDCG, k, "ideal DCG is zero");
    return MetricValue{MetricName::NDCG, k, dcg_at_k(ranked, k) / idcg, {}};
}

MetricValue recall_at_k(const RankedCase& c, int k, int relevance_threshold) {
    if (k < 1) throw Error(Errc::InvalidConfig, "recall_at_k: k must be >= 1");
    std::size_t relevant = 0;
    for (const auto& item : c.items) relevant += item.truth >= relevance_threshold;
    if (relevant == 0) return undefined(MetricName::Recall, k, "no relevant items");

    const auto order = rank_order(c);
    const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < top; ++i) hits += c.items[order[i]].truth >= relevance_threshold;
    return MetricValue{MetricName::Recall, k, static_cast<double>(hits) / static_cast<double>(relevant), {}};
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        // positions i..j (0-based) share the mean of ranks i+1..j+1
        const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
        i = j + 1;
    }
    return ranks;
}

MetricValue spearman(const RankedCase& c) {
    if (c.items.size() < 2) return undefined(MetricName::Spearman, std::nullopt, "fewer than two items");
    std::vector<double> pred, truth;
    for (const auto& item : c.items) {
        pred.push_back(item.predicted);
        truth.push_back(static_cast<double>(item.truth));
    }
    const auto rp = average_ranks(pred);
    const auto rt = average_ranks(truth);
    const double n = static_cast<double>(rp.size());
    const double mp = std::accumulate(rp.begin(), rp.end(), 0.0) / n;
    const double mt = std::accumulate(rt.begin(), rt.end(), 0.0) / n;
    double cov = 0, vp = 0, vt = 0;
    for (std::size_t i = 0; i < rp.size(); ++i) {
        cov += (rp[i] - mp) * (rt[i] - mt);
        vp += (rp[i] - mp) * (rp[i] - mp);
        vt += (rt[i] - mt) * (rt[i] - mt);
    }
    if (vp == 0 || vt == 0) return undefined(MetricName::Spearman, std::nullopt, "zero rank variance");
    return MetricValue{MetricName::Spearman, std::nullopt, cov / std::sqrt(vp * vt), {}};
}

// ---------------------------------------------------------------------------

std::array<MetricValue, kColumns> evaluate_case(const RankedCase& c, const MetricConfig& config) {
    return {ndcg_at_k(c, 1, config.ndcg_ties),
            ndcg_at_k(c, 3, config.ndcg_ties),
            ndcg_at_k(c, 5, config.ndcg_ties),
            recall_at_k(c, 1, config.relevance_threshold),
            recall_at_k(c, 3, config.relevance_threshold),
            recall_at_k(c, 5, config.relevance_threshold),
            spearman(c)};
}

RankedCase ranked_case(const DialogueCase& d, Speaker speaker, const PredictionTable& table) {
    RankedCase c{d.dialogue_id, speaker, {}};
    const auto& truth = d.scores(speaker);
    for (const auto& spot : d.spot_file.spot_ids) {
        auto it = table.values.find(TripleKey{d.dialogue_id, speaker, spot});
        if (it == table.values.end()) {
            throw Error(Errc::CoverageGap, fmt::format("{}: no prediction for ({}, {}, {})", table.label,
                                                       d.dialogue_id, to_string(speaker), spot));
        }
        c.items.push_back(RankedItem{spot, it->second, truth.at(spot)});
    }
    return c;
}

namespace {

struct Accumulator {
    std::array<double, kColumns> sum{};
    std::array<std::size_t, kColumns> defined{};
    std::array<std::size_t, kColumns> undefined{};

    void add(const std::array<MetricValue, kColumns>& m) {
        for (std::size_t i = 0; i < kColumns; ++i) {
            if (m[i].defined()) {
                sum[i] += *m[i].value;
                ++defined[i];
            } else {
                ++undefined[i];
            }
        }
    }
    void merge(const Accumulator& o) {
        for (std::size_t i = 0; i < kColumns; ++i) {
            sum[i] += o.sum[i];
            defined[i] += o.defined[i];
            undefined[i] += o.undefined[i];
        }
    }
    ReportRow row(std::string topic, const PredictionTable& table) const {
        ReportRow r{std::move(topic), table.label, {}};
        for (std::size_t i = 0; i < kColumns; ++i) {
            Cell& cell = r.cells[i];
            cell.defined = defined[i];
            cell.undefined = undefined[i];
            if (defined[i]) cell.mean = sum[i] / static_cast<double>(defined[i]);
            cell.suppressed = table.discrete_output && i <= static_cast<std::size_t>(Column::N5);
        }
        return r;
    }
};

}  // namespace

ReportTable aggregate(std::span<const PredictionTable> estimators, std::span<const DialogueCase> cases,
                      const AggregateOptions& options) {
    // Coverage first, so the error lists every gap at once.
    std::vector<std::string> missing;
    std::size_t missing_count = 0;
    for (const auto& table : estimators) {
        for (const auto& d : cases) {
            for (Speaker s : kSpeakers) {
                for (const auto& spot : d.spot_file.spot_ids) {
                    if (!table.values.count(TripleKey{d.dialogue_id, s, spot})) {
                        if (missing.size() < 20) {
                            missing.push_back(
                                fmt::format("{}:({},{},{})", table.label, d.dialogue_id, to_string(s), spot));
                        }
                        ++missing_count;
                    }
                }
            }
        }
    }
    if (missing_count) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        throw Error(Errc::CoverageGap, fmt::format("{} missing prediction(s): {}{}", missing_count, list,
                                                   missing_count > missing.size() ? ", ..." : ""));
    }

    std::set<Topic> topics_present;
    for (const auto& d : cases) topics_present.insert(d.topic);
    const bool breakdown = options.per_topic && topics_present.size() > 1;

    ReportTable report;
    std::vector<std::map<Topic, Accumulator>> per_estimator(estimators.size());
    for (std::size_t e = 0; e < estimators.size(); ++e) {
        for (const auto& d : cases) {
            for (Speaker s : kSpeakers) {
                per_estimator[e][d.topic].add(evaluate_case(ranked_case(d, s, estimators[e]), options.metrics));
            }
        }
    }
    for (std::size_t e = 0; e < estimators.size(); ++e) {
        Accumulator all;
        for (Topic t : kTopics) {
            if (auto it = per_estimator[e].find(t); it != per_estimator[e].end()) all.merge(it->second);
        }
        report.rows.push_back(all.row("ALL", estimators[e]));
    }
    if (breakdown) {
        for (Topic t : kTopics) {
            if (!topics_present.count(t)) continue;
            for (std::size_t e = 0; e < estimators.size(); ++e) {
                report.rows.push_back(per_estimator[e][t].row(std::string(to_string(t)), estimators[e]));
            }
        }
    }
    return report;
}

const ReportRow* ReportTable::find(std::string_view topic, std::string_view estimator) const {
    for (const auto& r : rows) {
        if (r.topic == topic && r.estimator == estimator) return &r;
    }
    return nullptr;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::string cell_text(const Cell& cell, int decimals) {
    if (cell.suppressed) return "-";
    if (!cell.mean) return "NA";
    // avoid "-0.000"
    double v = *cell.mean;
    std::string s = fmt::format("{:.{}f}", v, decimals);
    if (s.find_first_not_of("-0.") == std::string::npos && s[0] == '-') s.erase(0, 1);
    return s;
}

}  // namespace

std::string ReportTable::to_csv() const {
    std::string out = "topic,estimator";
    for (const char* c : kCsvColumns) out += fmt::format(",{}", c);
    out += ",undefined_counts\n";
    for (const auto& r : rows) {
        out += csv_field(r.topic) + "," + csv_field(r.estimator);
        std::string undefined;
        for (std::size_t i = 0; i < kColumns; ++i) {
            out += "," + cell_text(r.cells[i], 6);
            undefined += (i ? "/" : "") + std::to_string(r.cells[i].undefined);
        }
        out += "," + undefined + "\n";
    }
    return out;
}

std::string ReportTable::to_text() const {
    std::size_t topic_w = 5, est_w = 6;
    for (const auto& r : rows) {
        topic_w = std::max(topic_w, r.topic.size());
        est_w = std::max(est_w, r.estimator.size());
    }
    std::string out = fmt::format("{:<{}}  {:<{}}", "Topic", topic_w, "Method", est_w);
    for (const char* h : kColumnHeaders) out += fmt::format(" {:>7}", h);
    out += '\n';
    std::string last_topic;
    for (const auto& r : rows) {
        out += fmt::format("{:<{}}  {:<{}}", r.topic == last_topic ? "" : r.topic, topic_w, r.estimator, est_w);
        last_topic = r.topic;
        for (const auto& cell : r.cells) out += fmt::format(" {:>7}", cell_text(cell, 3));
        out += '\n';
    }
    return out;
}

}  // namespace sumrec
