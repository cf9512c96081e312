#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracle/ranking_oracle.hpp"
#include "sumrec/error.hpp"
#include "sumrec/metrics.hpp"
#include "support/fixtures.hpp"

using namespace sumrec;

namespace {

RankedCase make_case(const std::vector<double>& pred, const std::vector<int>& truth) {
    RankedCase c{"D", Speaker::A, {}};
    for (std::size_t i = 0; i < pred.size(); ++i) c.items.push_back({"s" + std::to_string(i), pred[i], truth[i]});
    return c;
}

std::vector<oracle::Item> as_oracle(const RankedCase& c) {
    std::vector<oracle::Item> out;
    for (const auto& it : c.items) out.push_back({it.predicted, it.truth});
    return out;
}

void check_same(const MetricValue& got, const std::optional<double>& want) {
    REQUIRE(got.defined() == want.has_value());
    if (want) CHECK(std::abs(*got.value - *want) < 1e-9);
}

}  // namespace

TEST_CASE("dcg_at_k spot values") {
    CHECK(dcg_at_k(std::vector<int>{0}, 1) == 0.0);
    CHECK(dcg_at_k(std::vector<int>{5}, 1) == 31.0);
    // 1 + 7/log2(3) + 31/2
    CHECK(dcg_at_k(std::vector<int>{1, 3, 5}, 3) == doctest::Approx(20.9165).epsilon(1e-5));
    CHECK(dcg_at_k(std::vector<int>{1, 3, 5}, 10) == dcg_at_k(std::vector<int>{1, 3, 5}, 3));
}

TEST_CASE("ndcg examples") {
    auto perfect = make_case({5, 4, 3, 2, 1}, {5, 4, 3, 2, 1});
    for (int k : {1, 3, 5}) CHECK(*ndcg_at_k(perfect, k).value == 1.0);

    auto reversed = make_case({1, 2, 3}, {5, 3, 1});
    CHECK(*ndcg_at_k(reversed, 3).value == doctest::Approx(20.9165 / 35.9165).epsilon(1e-4));
    CHECK(*ndcg_at_k(reversed, 3).value == doctest::Approx(0.5823).epsilon(1e-4));

    auto flat = make_case({3, 3, 3}, {5, 3, 1});
    CHECK_FALSE(ndcg_at_k(flat, 3).defined());
    CHECK_FALSE(ndcg_at_k(flat, 3).reason_if_undefined.empty());
    CHECK(ndcg_at_k(flat, 3, TiePolicy::StableIndex).defined());

    auto zero = make_case({1, 2}, {0, 0});
    CHECK_FALSE(ndcg_at_k(zero, 1).defined());
    CHECK_THROWS_AS(ndcg_at_k(perfect, 0), Error);
}

TEST_CASE("strict ties only matter when they reach the top-k") {
    auto tail_tie = make_case({5, 4, 1, 1}, {5, 4, 2, 1});
    CHECK(ndcg_at_k(tail_tie, 1).defined());
    CHECK(ndcg_at_k(tail_tie, 2).defined());
    CHECK_FALSE(ndcg_at_k(tail_tie, 3).defined());
    // A tie straddling the k boundary still makes the top-k ambiguous.
    auto boundary = make_case({5, 4, 4, 1}, {5, 4, 2, 1});
    CHECK(ndcg_at_k(boundary, 1).defined());
    CHECK_FALSE(ndcg_at_k(boundary, 2).defined());
}

TEST_CASE("recall examples") {
    auto perfect = make_case({5, 4, 3, 2, 1}, {5, 4, 3, 2, 1});
    CHECK(*recall_at_k(perfect, 3).value == 1.0);
    auto last = make_case({1, 2, 3, 4, 5}, {5, 4, 3, 2, 1});
    CHECK(*recall_at_k(last, 1).value == 0.0);
    auto none = make_case({1, 2, 3}, {1, 2, 3});
    CHECK_FALSE(recall_at_k(none, 3).defined());
    // Ties break by input order.
    auto tie = make_case({2, 2, 2}, {1, 5, 1});
    CHECK(*recall_at_k(tie, 1).value == 0.0);
    CHECK(*recall_at_k(tie, 2).value == 1.0);
}

TEST_CASE("recall of random rankings matches the hypergeometric expectation") {
    // 8 relevant of 16, k = 5: expected hits 5 * 8/16 = 2.5, recall 2.5/8.
    std::vector<int> truth(16, 1);
    std::fill(truth.begin(), truth.begin() + 8, 5);
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(1.0, 5.0);
    double sum = 0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        std::vector<double> pred(16);
        for (auto& p : pred) p = u(rng);
        sum += *recall_at_k(make_case(pred, truth), 5).value;
    }
    CHECK(sum / trials == doctest::Approx(0.3125).epsilon(0.005 / 0.3125));
}

TEST_CASE("spearman examples") {
    CHECK(*spearman(make_case({1, 2, 3, 4}, {1, 2, 3, 4})).value == doctest::Approx(1.0));
    CHECK(*spearman(make_case({4, 3, 2, 1}, {1, 2, 3, 4})).value == doctest::Approx(-1.0));
    auto tied = make_case({1, 2, 2, 4}, {1, 2, 3, 4});
    // ranks (1, 2.5, 2.5, 4) vs (1, 2, 3, 4): cov 4.5, var 4.5 and 5
    CHECK(*spearman(tied).value == doctest::Approx(4.5 / std::sqrt(4.5 * 5.0)));
    check_same(spearman(tied), oracle::spearman(as_oracle(tied)));
    CHECK_FALSE(spearman(make_case({1, 1, 1}, {1, 2, 3})).defined());
    CHECK_FALSE(spearman(make_case({1, 2, 3}, {2, 2, 2})).defined());
    CHECK_FALSE(spearman(make_case({1}, {1})).defined());
}

TEST_CASE("average ranks") {
    std::vector<double> v{10, 20, 20, 5, 20};
    auto r = average_ranks(v);
    CHECK(r == std::vector<double>{2, 4, 4, 1, 4});
}

TEST_CASE("randomized agreement with the brute-force oracle") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> size(3, 20), truth(1, 5), coarse(1, 4);
    std::uniform_real_distribution<double> real(1.0, 5.0);
    for (int iter = 0; iter < 1000; ++iter) {
        const int n = size(rng);
        const bool ties = iter % 4 == 0;  // quarter of the cases use coarse predictions with ties
        std::vector<double> pred(n);
        std::vector<int> tr(n);
        for (int i = 0; i < n; ++i) {
            pred[i] = ties ? coarse(rng) : real(rng);
            tr[i] = truth(rng);
        }
        auto c = make_case(pred, tr);
        auto o = as_oracle(c);
        for (int k : {1, 3, 5}) {
            check_same(ndcg_at_k(c, k, TiePolicy::Strict), oracle::ndcg(o, k, true));
            check_same(ndcg_at_k(c, k, TiePolicy::StableIndex), oracle::ndcg(o, k, false));
            check_same(recall_at_k(c, k), oracle::recall(o, k));
        }
        check_same(spearman(c), oracle::spearman(o));
    }
}

TEST_CASE("metric properties") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> size(3, 20), truth(1, 5);
    std::uniform_real_distribution<double> real(1.0, 5.0);
    for (int iter = 0; iter < 300; ++iter) {
        const int n = size(rng);
        std::vector<double> pred(n);
        std::vector<int> tr(n);
        for (int i = 0; i < n; ++i) {
            pred[i] = real(rng);
            tr[i] = truth(rng);
        }
        auto c = make_case(pred, tr);

        // strictly monotone transform leaves every metric unchanged
        std::vector<double> warped;
        for (double p : pred) warped.push_back(std::exp(3 * p) - 7);
        auto w = make_case(warped, tr);
        // negated predictions flip spearman
        std::vector<double> neg;
        for (double p : pred) neg.push_back(-p);
        auto ng = make_case(neg, tr);

        std::optional<double> prev_recall;
        for (int k = 1; k <= n; ++k) {
            auto nd = ndcg_at_k(c, k);
            if (nd.defined()) {
                CHECK(*nd.value >= 0.0);
                CHECK(*nd.value <= 1.0 + 1e-12);
                CHECK(*ndcg_at_k(w, k).value == doctest::Approx(*nd.value));
            }
            auto r = recall_at_k(c, k);
            CHECK(r.defined() == recall_at_k(w, k).defined());
            if (r.defined()) {
                CHECK(*recall_at_k(w, k).value == *r.value);
                if (prev_recall) CHECK(*r.value >= *prev_recall);
                prev_recall = r.value;
            }
        }
        if (prev_recall) CHECK(*recall_at_k(c, n).value == 1.0);
        auto s = spearman(c);
        if (s.defined()) {
            CHECK(*spearman(w).value == doctest::Approx(*s.value));
            CHECK(*spearman(ng).value == doctest::Approx(-*s.value));
        }
    }
}

TEST_CASE("ndcg is one exactly when the top-k truths are ideal") {
    auto c = make_case({9, 8, 7, 6}, {5, 5, 2, 4});
    CHECK(*ndcg_at_k(c, 2).value == 1.0);
    CHECK(*ndcg_at_k(c, 3).value < 1.0);
}

// ---------------------------------------------------------------------------

namespace {

DialogueCase tiny_dialogue(std::string id, Topic topic, std::vector<int> a, std::vector<int> b) {
    DialogueCase d;
    d.dialogue_id = std::move(id);
    d.topic = topic;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const std::string spot = "s" + std::to_string(i);
        d.spot_file.spot_ids.push_back(spot);
        d.scores_a[spot] = a[i];
        d.scores_b[spot] = b[i];
    }
    return d;
}

PredictionTable table_for(const std::vector<DialogueCase>& ds, const std::string& label,
                          const std::vector<double>& pred_a, const std::vector<double>& pred_b) {
    PredictionTable t;
    t.label = label;
    for (const auto& d : ds) {
        for (std::size_t i = 0; i < d.spot_file.spot_ids.size(); ++i) {
            t.values[{d.dialogue_id, Speaker::A, d.spot_file.spot_ids[i]}] = pred_a[i];
            t.values[{d.dialogue_id, Speaker::B, d.spot_file.spot_ids[i]}] = pred_b[i];
        }
    }
    return t;
}

}  // namespace

TEST_CASE("aggregate echoes a single case") {
    std::vector<DialogueCase> ds{tiny_dialogue("D1", Topic::Travel, {5, 3, 1, 4, 2}, {1, 2, 3, 4, 5})};
    auto t = table_for(ds, "est", {1, 2, 3, 4, 5}, {1, 2, 3, 4, 5});
    auto report = aggregate(std::span<const PredictionTable>(&t, 1), ds);
    REQUIRE(report.rows.size() == 1);  // single topic: no per-topic rows
    const auto& row = report.rows[0];
    CHECK(row.topic == "ALL");
    auto ca = evaluate_case(ranked_case(ds[0], Speaker::A, t));
    auto cb = evaluate_case(ranked_case(ds[0], Speaker::B, t));
    for (std::size_t i = 0; i < kColumns; ++i) {
        std::vector<double> vals;
        if (ca[i].defined()) vals.push_back(*ca[i].value);
        if (cb[i].defined()) vals.push_back(*cb[i].value);
        REQUIRE(row.cells[i].mean.has_value() == !vals.empty());
        if (!vals.empty()) {
            double mean = 0;
            for (double v : vals) mean += v / vals.size();
            CHECK(*row.cells[i].mean == doctest::Approx(mean));
        }
    }
}

TEST_CASE("aggregate weights cases equally across topics") {
    std::vector<DialogueCase> ds{tiny_dialogue("D1", Topic::Travel, {5, 1, 1}, {5, 1, 1}),
                                 tiny_dialogue("D2", Topic::NoRestriction, {1, 1, 5}, {1, 1, 5})};
    auto t = table_for(ds, "est", {3, 2, 1}, {3, 2, 1});
    auto report = aggregate(std::span<const PredictionTable>(&t, 1), ds);
    const auto* all = report.find("ALL", "est");
    const auto* travel = report.find("Travel", "est");
    const auto* norestr = report.find("NoRestriction", "est");
    REQUIRE(all);
    REQUIRE(travel);
    REQUIRE(norestr);
    CHECK(report.find("ExceptForTravel", "est") == nullptr);
    const auto r1 = static_cast<std::size_t>(Column::R1);
    CHECK(*travel->cells[r1].mean == 1.0);
    CHECK(*norestr->cells[r1].mean == 0.0);
    CHECK(*all->cells[r1].mean == doctest::Approx(0.5));
    for (std::size_t i = 0; i < kColumns; ++i) {
        if (travel->cells[i].mean && norestr->cells[i].mean) {
            CHECK(*all->cells[i].mean == doctest::Approx((*travel->cells[i].mean + *norestr->cells[i].mean) / 2));
        }
    }
}

TEST_CASE("discrete estimators render NDCG as a dash") {
    std::vector<DialogueCase> ds{tiny_dialogue("D1", Topic::Travel, {5, 3, 1}, {1, 3, 5})};
    auto t = table_for(ds, "LLM", {5, 3, 1}, {1, 3, 5});
    t.discrete_output = true;
    auto report = aggregate(std::span<const PredictionTable>(&t, 1), ds);
    const auto& row = report.rows.at(0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(row.cells[i].suppressed);
    for (std::size_t i = 3; i < kColumns; ++i) CHECK_FALSE(row.cells[i].suppressed);
    const std::string csv = report.to_csv();
    CHECK(csv.find("ALL,LLM,-,-,-,") != std::string::npos);
    CHECK(report.to_text().find('-') != std::string::npos);
}

TEST_CASE("csv layout and undefined counts") {
    std::vector<DialogueCase> ds{tiny_dialogue("D1", Topic::Travel, {1, 2, 3}, {5, 4, 1})};
    auto t = table_for(ds, "Random", {0.5, 0.2, 0.9}, {0.5, 0.2, 0.9});
    auto csv = aggregate(std::span<const PredictionTable>(&t, 1), ds).to_csv();
    CHECK(csv.rfind("topic,estimator,n1,n3,n5,r1,r3,r5,coef,undefined_counts\n", 0) == 0);
    // Speaker A has no relevant spot: recall undefined once per k.
    CHECK(csv.find(",0/0/0/1/1/1/0\n") != std::string::npos);
}

TEST_CASE("coverage gaps are reported") {
    std::vector<DialogueCase> ds{tiny_dialogue("D1", Topic::Travel, {1, 2, 3}, {5, 4, 1})};
    auto t = table_for(ds, "est", {1, 2, 3}, {1, 2, 3});
    t.values.erase({"D1", Speaker::B, "s2"});
    try {
        aggregate(std::span<const PredictionTable>(&t, 1), ds);
        FAIL("expected CoverageGap");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::CoverageGap);
        CHECK(std::string(e.what()).find("s2") != std::string::npos);
    }
}

TEST_CASE("random predictions approach the analytic baseline") {
    testing::CorpusShape shape;
    shape.dialogues_per_topic = 40;
    auto ds = testing::synthetic_dataset(shape);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(1.0, 5.0);
    const int reps = 30;
    double recall5 = 0, ndcg3 = 0, expected_recall5 = 0, expected_ndcg3 = 0, rho = 0;
    std::size_t cases = 0, rho_cases = 0;
    for (int rep = 0; rep < reps; ++rep) {
        for (const auto& d : ds.dialogues) {
            for (Speaker s : kSpeakers) {
                RankedCase c{d.dialogue_id, s, {}};
                std::vector<int> truths;
                for (const auto& spot : d.spot_file.spot_ids) {
                    c.items.push_back({spot, u(rng), d.scores(s).at(spot)});
                    truths.push_back(d.scores(s).at(spot));
                }
                auto r = recall_at_k(c, 5);
                if (!r.defined()) continue;
                ++cases;
                recall5 += *r.value;
                ndcg3 += *ndcg_at_k(c, 3).value;
                expected_recall5 += 5.0 / static_cast<double>(truths.size());
                expected_ndcg3 += oracle::expected_random_ndcg(truths, 3);
                if (auto sp = spearman(c); sp.defined()) {
                    rho += *sp.value;
                    ++rho_cases;
                }
            }
        }
    }
    CHECK(recall5 / cases == doctest::Approx(expected_recall5 / cases).epsilon(0.02));
    CHECK(ndcg3 / cases == doctest::Approx(expected_ndcg3 / cases).epsilon(0.02));
    CHECK(std::abs(rho / rho_cases) < 0.02);
}
