#pragma once

// Builders for small in-memory corpora and scratch directories.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "sumrec/corpus.hpp"

namespace sumrec::testing {

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / fmt::format("sumrec-test-{:016x}", (std::uint64_t{rd()} << 32) | rd());
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::vector<Utterance> make_utterances(int n, const std::string& tag = "u") {
    std::vector<Utterance> out;
    for (int i = 1; i <= n; ++i) {
        out.push_back(Utterance{i, i % 2 == 1 ? Speaker::A : Speaker::B, fmt::format("{} line {}", tag, i)});
    }
    return out;
}

struct CorpusShape {
    std::size_t dialogues_per_topic = 4;
    std::size_t spots = 30;
    std::size_t spots_per_file = 15;
    std::size_t files = 4;
    std::size_t categories = 3;
    int utterances = 20;
    std::uint64_t seed = 1;
};

/// Valid dataset with uniformly random gold scores and five human predictions per spot.
inline Dataset synthetic_dataset(const CorpusShape& shape = {}) {
    std::mt19937_64 rng(shape.seed);
    std::uniform_int_distribution<int> score(1, 5);
    Dataset ds;
    for (std::size_t i = 0; i < shape.spots; ++i) {
        TouristSpot s;
        s.spot_id = fmt::format("S{:03}", i);
        s.name = fmt::format("Spot {}", i);
        s.description = fmt::format("Description of spot {}.", i);
        s.category = fmt::format("cat{}", i % shape.categories);
        ds.spots.emplace(s.spot_id, s);
    }
    for (std::size_t f = 0; f < shape.files; ++f) {
        SpotFile file{fmt::format("F{:02}", f), {}};
        for (std::size_t j = 0; j < shape.spots_per_file; ++j) {
            file.spot_ids.push_back(fmt::format("S{:03}", (f * 7 + j) % shape.spots));
        }
        ds.spot_files.emplace(file.file_id, file);
    }
    std::size_t n = 0;
    for (Topic topic : kTopics) {
        for (std::size_t i = 0; i < shape.dialogues_per_topic; ++i, ++n) {
            DialogueCase d;
            d.dialogue_id = fmt::format("D{:04}", n);
            d.topic = topic;
            d.utterances = make_utterances(shape.utterances, d.dialogue_id);
            d.spot_file = ds.spot_files.at(fmt::format("F{:02}", n % shape.files));
            for (const auto& spot : d.spot_file.spot_ids) {
                d.scores_a[spot] = score(rng);
                d.scores_b[spot] = score(rng);
                auto& h = d.human_predictions[spot];
                for (int k = 0; k < 5; ++k) h.push_back(score(rng));
            }
            ds.dialogues.push_back(std::move(d));
        }
    }
    return ds;
}

}  // namespace sumrec::testing
