#include "sumrec/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/core.h>
#include <json.hpp>

#include "sumrec/error.hpp"
#include "sumrec/rng.hpp"

namespace sumrec {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Speaker s) noexcept { return s == Speaker::A ? "A" : "B"; }

std::string_view to_string(Topic t) noexcept {
    switch (t) {
    case Topic::Travel: return "Travel";
    case Topic::ExceptForTravel: return "ExceptForTravel";
    case Topic::NoRestriction: return "NoRestriction";
    }
    return "?";
}

std::string_view topic_code(Topic t) noexcept {
    switch (t) {
    case Topic::Travel: return "T";
    case Topic::ExceptForTravel: return "E";
    case Topic::NoRestriction: return "N";
    }
    return "?";
}

std::string_view to_string(SplitName s) noexcept {
    switch (s) {
    case SplitName::Train: return "train";
    case SplitName::Validation: return "valid";
    case SplitName::Test: return "test";
    }
    return "?";
}

std::optional<Speaker> parse_speaker(std::string_view s) noexcept {
    if (s == "A") return Speaker::A;
    if (s == "B") return Speaker::B;
    return std::nullopt;
}

std::optional<Topic> parse_topic_code(std::string_view s) noexcept {
    if (s == "T") return Topic::Travel;
    if (s == "E") return Topic::ExceptForTravel;
    if (s == "N") return Topic::NoRestriction;
    return std::nullopt;
}

std::optional<SplitName> parse_split_name(std::string_view s) noexcept {
    if (s == "train") return SplitName::Train;
    if (s == "valid") return SplitName::Validation;
    if (s == "test") return SplitName::Test;
    return std::nullopt;
}

const TouristSpot& Dataset::spot(const std::string& spot_id) const {
    auto it = spots.find(spot_id);
    if (it == spots.end()) throw Error(Errc::DanglingSpotReference, "unknown spot '" + spot_id + "'");
    return it->second;
}

const DialogueCase* Dataset::find(std::string_view dialogue_id) const {
    auto it = std::lower_bound(dialogues.begin(), dialogues.end(), dialogue_id,
                               [](const DialogueCase& d, std::string_view id) { return d.dialogue_id < id; });
    if (it == dialogues.end() || it->dialogue_id != dialogue_id) return nullptr;
    return &*it;
}

namespace {

[[noreturn]] void schema(const std::string& record, const std::string& field, const std::string& what) {
    throw Error(Errc::SchemaViolation, fmt::format("{}: field '{}' {}", record, field, what));
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::MissingFile, path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(Errc::SchemaViolation, fmt::format("{}: {}", path.string(), e.what()));
    }
}

const json& require(const json& obj, const std::string& record, const char* field) {
    auto it = obj.find(field);
    if (it == obj.end()) schema(record, field, "is missing");
    return *it;
}

std::string require_string(const json& obj, const std::string& record, const char* field) {
    const json& v = require(obj, record, field);
    if (!v.is_string()) schema(record, field, "must be a string");
    return v.get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const std::string& record, const char* field) {
    auto it = obj.find(field);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) schema(record, field, "must be a string");
    return it->get<std::string>();
}

std::map<std::string, int> parse_scores(const json& obj, const std::string& record, const char* field) {
    const json& v = require(obj, record, field);
    if (!v.is_object()) schema(record, field, "must be an object");
    std::map<std::string, int> out;
    for (const auto& [spot, score] : v.items()) {
        if (score.is_number_integer()) {
            out[spot] = score.get<int>();
        } else if (score.is_number_float()) {
            double x = score.get<double>();
            if (x != std::floor(x)) {
                throw Error(Errc::ScoreOutOfRange,
                            fmt::format("{}: {}[{}] = {} is not an integer score", record, field, spot, x));
            }
            out[spot] = static_cast<int>(x);
        } else {
            schema(record, std::string(field) + "." + spot, "must be an integer");
        }
    }
    return out;
}

DialogueCase parse_dialogue(const json& obj, const std::string& where) {
    if (!obj.is_object()) throw Error(Errc::SchemaViolation, where + ": record must be an object");
    DialogueCase d;
    d.dialogue_id = require_string(obj, where, "dialogue_id");
    const std::string record = "dialogue " + d.dialogue_id;

    std::string topic = require_string(obj, record, "topic");
    auto parsed = parse_topic_code(topic);
    if (!parsed) schema(record, "topic", "must be one of T, E, N (got '" + topic + "')");
    d.topic = *parsed;

    const json& utts = require(obj, record, "utterances");
    if (!utts.is_array()) schema(record, "utterances", "must be an array");
    int index = 1;
    for (const json& u : utts) {
        if (!u.is_object()) schema(record, "utterances", "entries must be objects");
        std::string sp = require_string(u, record, "speaker");
        auto speaker = parse_speaker(sp);
        if (!speaker) schema(record, "utterances.speaker", "must be \"A\" or \"B\" (got '" + sp + "')");
        d.utterances.push_back(Utterance{index++, *speaker, require_string(u, record, "text")});
    }

    d.spot_file.file_id = require_string(obj, record, "spot_file_id");
    d.scores_a = parse_scores(obj, record, "scores_a");
    d.scores_b = parse_scores(obj, record, "scores_b");

    if (auto it = obj.find("human_predictions"); it != obj.end() && !it->is_null()) {
        if (!it->is_object()) schema(record, "human_predictions", "must be an object");
        for (const auto& [spot, list] : it->items()) {
            if (!list.is_array()) schema(record, "human_predictions." + spot, "must be an array");
            std::vector<double> values;
            for (const json& x : list) {
                if (!x.is_number()) schema(record, "human_predictions." + spot, "entries must be numbers");
                values.push_back(x.get<double>());
            }
            d.human_predictions[spot] = std::move(values);
        }
    }
    return d;
}

json dialogue_to_json(const DialogueCase& d) {
    json utts = json::array();
    for (const auto& u : d.utterances) {
        utts.push_back({{"speaker", std::string(to_string(u.speaker))}, {"text", u.text}});
    }
    json obj;
    obj["dialogue_id"] = d.dialogue_id;
    obj["topic"] = std::string(topic_code(d.topic));
    obj["utterances"] = std::move(utts);
    obj["spot_file_id"] = d.spot_file.file_id;
    obj["scores_a"] = d.scores_a;
    obj["scores_b"] = d.scores_b;
    obj["human_predictions"] = d.human_predictions;
    return obj;
}

void validate_scores(const DialogueCase& d, const std::map<std::string, int>& scores, const char* field) {
    const std::string record = "dialogue " + d.dialogue_id;
    for (const auto& [spot, score] : scores) {
        if (score < 1 || score > 5) {
            throw Error(Errc::ScoreOutOfRange, fmt::format("{}: {}[{}] = {} not in 1..5", record, field, spot, score));
        }
    }
    std::set<std::string> expected(d.spot_file.spot_ids.begin(), d.spot_file.spot_ids.end());
    for (const auto& [spot, _] : scores) {
        if (!expected.count(spot)) {
            throw Error(Errc::DanglingSpotReference,
                        fmt::format("{}: {} names spot '{}' outside spot file '{}'", record, field, spot,
                                    d.spot_file.file_id));
        }
    }
    for (const auto& spot : expected) {
        if (!scores.count(spot)) schema(record, std::string(field), "has no score for spot '" + spot + "'");
    }
}

}  // namespace

void validate_dataset(const Dataset& dataset) {
    for (const auto& [id, spot] : dataset.spots) {
        if (spot.spot_id != id) schema("spot " + id, "spot_id", "does not match its key");
        if (spot.description.empty()) schema("spot " + id, "description", "must be nonempty");
    }
    for (const auto& [id, file] : dataset.spot_files) {
        const std::string record = "spot file " + id;
        if (file.spot_ids.size() < kMinSpotsPerFile || file.spot_ids.size() > kMaxSpotsPerFile) {
            schema(record, "spots", fmt::format("must hold {}..{} spots (has {})", kMinSpotsPerFile,
                                                kMaxSpotsPerFile, file.spot_ids.size()));
        }
        std::set<std::string> seen;
        for (const auto& s : file.spot_ids) {
            if (!dataset.spots.count(s)) {
                throw Error(Errc::DanglingSpotReference, fmt::format("{}: unknown spot '{}'", record, s));
            }
            if (!seen.insert(s).second) schema(record, "spots", "lists spot '" + s + "' twice");
        }
    }

    std::set<std::string> ids;
    for (const auto& d : dataset.dialogues) {
        const std::string record = "dialogue " + d.dialogue_id;
        if (!ids.insert(d.dialogue_id).second) schema(record, "dialogue_id", "is duplicated");

        auto file = dataset.spot_files.find(d.spot_file.file_id);
        if (file == dataset.spot_files.end()) {
            throw Error(Errc::DanglingSpotReference,
                        fmt::format("{}: spot_file_id '{}' does not exist", record, d.spot_file.file_id));
        }
        if (file->second != d.spot_file) schema(record, "spot_file_id", "resolved spot list is stale");

        if (d.utterances.size() < kMinUtterances) {
            schema(record, "utterances",
                   fmt::format("needs at least {} utterances (has {})", kMinUtterances, d.utterances.size()));
        }
        for (std::size_t i = 0; i < d.utterances.size(); ++i) {
            const Utterance& u = d.utterances[i];
            if (u.index != static_cast<int>(i) + 1) schema(record, "utterances", "indices are not contiguous from 1");
            Speaker expected = (i % 2 == 0) ? Speaker::A : Speaker::B;
            if (u.speaker != expected) {
                schema(record, "utterances",
                       fmt::format("utterance {} should be spoken by {}", i + 1, to_string(expected)));
            }
            if (u.text.empty()) schema(record, "utterances", fmt::format("utterance {} has empty text", i + 1));
        }

        validate_scores(d, d.scores_a, "scores_a");
        validate_scores(d, d.scores_b, "scores_b");

        for (const auto& [spot, values] : d.human_predictions) {
            if (std::find(d.spot_file.spot_ids.begin(), d.spot_file.spot_ids.end(), spot) ==
                d.spot_file.spot_ids.end()) {
                throw Error(Errc::DanglingSpotReference,
                            fmt::format("{}: human_predictions names unknown spot '{}'", record, spot));
            }
            for (double v : values) {
                if (!(v >= 1.0 && v <= 5.0)) {
                    throw Error(Errc::ScoreOutOfRange,
                                fmt::format("{}: human prediction {} for '{}' not in [1,5]", record, v, spot));
                }
            }
        }
    }
    if (!std::is_sorted(dataset.dialogues.begin(), dataset.dialogues.end(),
                        [](const auto& a, const auto& b) { return a.dialogue_id < b.dialogue_id; })) {
        throw Error(Errc::SchemaViolation, "dialogues are not ordered by dialogue_id");
    }
}

Dataset load_dataset(const fs::path& root) {
    Dataset ds;

    json spots = read_json_file(root / "spots.json");
    if (!spots.is_object()) throw Error(Errc::SchemaViolation, "spots.json must be an object");
    for (const auto& [id, obj] : spots.items()) {
        const std::string record = "spot " + id;
        if (!obj.is_object()) schema(record, "<value>", "must be an object");
        TouristSpot s;
        s.spot_id = id;
        s.name = require_string(obj, record, "name");
        s.description = require_string(obj, record, "description");
        s.category = optional_string(obj, record, "category");
        s.prefecture = optional_string(obj, record, "prefecture");
        ds.spots.emplace(id, std::move(s));
    }

    json files = read_json_file(root / "spot_files.json");
    if (!files.is_object()) throw Error(Errc::SchemaViolation, "spot_files.json must be an object");
    for (const auto& [id, list] : files.items()) {
        if (!list.is_array()) schema("spot file " + id, "<value>", "must be an array of spot ids");
        SpotFile f{id, {}};
        for (const json& s : list) {
            if (!s.is_string()) schema("spot file " + id, "<value>", "must be an array of spot ids");
            f.spot_ids.push_back(s.get<std::string>());
        }
        ds.spot_files.emplace(id, std::move(f));
    }

    const fs::path dialogues_path = root / "dialogues.jsonl";
    std::ifstream in(dialogues_path);
    if (!in) throw Error(Errc::MissingFile, dialogues_path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = fmt::format("dialogues.jsonl line {}", line_no);
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(Errc::SchemaViolation, fmt::format("{}: {}", where, e.what()));
        }
        DialogueCase d = parse_dialogue(obj, where);
        if (auto f = ds.spot_files.find(d.spot_file.file_id); f != ds.spot_files.end()) {
            d.spot_file = f->second;
        } else {
            throw Error(Errc::DanglingSpotReference,
                        fmt::format("dialogue {}: spot_file_id '{}' does not exist", d.dialogue_id,
                                    d.spot_file.file_id));
        }
        ds.dialogues.push_back(std::move(d));
    }
    std::sort(ds.dialogues.begin(), ds.dialogues.end(),
              [](const auto& a, const auto& b) { return a.dialogue_id < b.dialogue_id; });

    validate_dataset(ds);
    return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& root) {
    fs::create_directories(root);
    json spots = json::object();
    for (const auto& [id, s] : dataset.spots) {
        json obj{{"name", s.name}, {"description", s.description}};
        if (s.category) obj["category"] = *s.category;
        if (s.prefecture) obj["prefecture"] = *s.prefecture;
        spots[id] = std::move(obj);
    }
    json files = json::object();
    for (const auto& [id, f] : dataset.spot_files) files[id] = f.spot_ids;

    std::ofstream(root / "spots.json") << spots.dump(2) << '\n';
    std::ofstream(root / "spot_files.json") << files.dump(2) << '\n';
    std::ofstream out(root / "dialogues.jsonl");
    for (const auto& d : dataset.dialogues) out << dialogue_to_json(d).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Splitting

std::vector<std::string> SplitAssignment::ids(SplitName split) const {
    std::vector<std::string> out;
    for (const auto& [id, s] : assignment) {
        if (s == split) out.push_back(id);
    }
    return out;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, SplitRatios ratios) {
    const std::array<unsigned, 3> r{ratios.train, ratios.validation, ratios.test};
    const unsigned total = r[0] + r[1] + r[2];
    if (total == 0) throw Error(Errc::InvalidConfig, "split ratios sum to zero");
    std::array<std::size_t, 3> sizes{};
    std::array<std::size_t, 3> remainder{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        sizes[i] = n * r[i] / total;
        remainder[i] = n * r[i] % total;
        assigned += sizes[i];
    }
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i) {
            if (remainder[i] > remainder[best]) best = i;
        }
        ++sizes[best];
        remainder[best] = 0;
        ++assigned;
    }
    return sizes;
}

std::string balance_key(const TouristSpot& spot) {
    if (spot.category && !spot.category->empty()) return *spot.category;
    if (spot.prefecture && !spot.prefecture->empty()) return *spot.prefecture;
    return "unknown";
}

std::map<std::string, double> category_histogram(const Dataset& dataset, const DialogueCase& d) {
    std::map<std::string, double> hist;
    for (const auto& id : d.spot_file.spot_ids) hist[balance_key(dataset.spot(id))] += 1.0;
    if (hist.empty()) hist["unknown"] = 1.0;
    return hist;
}

namespace {

using Histogram = std::map<std::string, double>;

double l1_to_global(const Histogram& hist, const Histogram& global) {
    double total = 0;
    for (const auto& [_, c] : hist) total += c;
    if (total == 0) return 0;
    double dist = 0;
    for (const auto& [key, g] : global) {
        auto it = hist.find(key);
        double p = it == hist.end() ? 0.0 : it->second / total;
        dist += std::abs(p - g);
    }
    return dist;
}

Histogram normalized(Histogram h) {
    double total = 0;
    for (const auto& [_, c] : h) total += c;
    if (total > 0) {
        for (auto& [_, c] : h) c /= total;
    }
    return h;
}

void add_into(Histogram& into, const Histogram& from) {
    for (const auto& [k, c] : from) into[k] += c;
}

}  // namespace

SplitAssignment split_dataset(const Dataset& dataset, SplitRatios ratios, std::uint64_t seed) {
    if (dataset.dialogues.empty()) throw Error(Errc::EmptyDataset, "cannot split an empty dataset");

    std::vector<Histogram> hists;
    hists.reserve(dataset.dialogues.size());
    Histogram global;
    for (const auto& d : dataset.dialogues) {
        hists.push_back(category_histogram(dataset, d));
        add_into(global, hists.back());
    }
    global = normalized(std::move(global));

    const auto caps = split_sizes(dataset.dialogues.size(), ratios);

    std::vector<std::size_t> order(dataset.dialogues.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    stable_shuffle(std::span<std::size_t>(order), rng);

    std::array<Histogram, 3> split_hist;
    std::array<std::size_t, 3> count{};
    std::vector<int> where(dataset.dialogues.size(), 0);
    constexpr double kEps = 1e-12;

    // Greedy pass: each dialogue goes to the open split whose histogram ends
    // up closest to the global distribution.
    for (std::size_t idx : order) {
        int best = -1;
        double best_dist = 0;
        double best_room = 0;
        for (int s = 0; s < 3; ++s) {
            if (count[s] >= caps[s]) continue;
            Histogram trial = split_hist[s];
            add_into(trial, hists[idx]);
            double dist = l1_to_global(trial, global);
            double room = static_cast<double>(caps[s] - count[s]) / static_cast<double>(caps[s]);
            if (best < 0 || dist < best_dist - kEps ||
                (std::abs(dist - best_dist) <= kEps && room > best_room + kEps)) {
                best = s;
                best_dist = dist;
                best_room = room;
            }
        }
        add_into(split_hist[best], hists[idx]);
        ++count[best];
        where[idx] = best;
    }

    // Swap refinement: exchange dialogues between splits while the summed
    // imbalance drops. Visits pairs in the shuffled order so it stays seeded.
    auto total_l1 = [&] {
        double t = 0;
        for (const auto& h : split_hist) t += l1_to_global(h, global);
        return t;
    };
    auto move = [&](std::size_t idx, int from, int to) {
        for (const auto& [k, c] : hists[idx]) {
            split_hist[from][k] -= c;
            split_hist[to][k] += c;
        }
    };
    double current = total_l1();
    for (int round = 0; round < 50; ++round) {
        bool improved = false;
        for (std::size_t a = 0; a < order.size(); ++a) {
            for (std::size_t b = a + 1; b < order.size(); ++b) {
                std::size_t ia = order[a], ib = order[b];
                int sa = where[ia], sb = where[ib];
                if (sa == sb) continue;
                move(ia, sa, sb);
                move(ib, sb, sa);
                double trial = total_l1();
                if (trial < current - 1e-9) {
                    current = trial;
                    where[ia] = sb;
                    where[ib] = sa;
                    improved = true;
                } else {
                    move(ia, sb, sa);
                    move(ib, sa, sb);
                }
            }
        }
        if (!improved) break;
    }

    SplitAssignment out;
    out.seed = seed;
    for (std::size_t i = 0; i < where.size(); ++i) {
        out.assignment[dataset.dialogues[i].dialogue_id] = static_cast<SplitName>(where[i]);
    }
    return out;
}

double split_imbalance(const Dataset& dataset, const SplitAssignment& split) {
    Histogram global;
    std::array<Histogram, 3> per;
    for (const auto& d : dataset.dialogues) {
        Histogram h = category_histogram(dataset, d);
        add_into(global, h);
        add_into(per[static_cast<int>(split.assignment.at(d.dialogue_id))], h);
    }
    global = normalized(std::move(global));
    double total = 0;
    for (const auto& h : per) total += l1_to_global(h, global);
    return total;
}

void save_split(const SplitAssignment& split, const fs::path& file) {
    json assignment = json::object();
    for (const auto& [id, s] : split.assignment) assignment[id] = std::string(to_string(s));
    json doc{{"seed", split.seed}, {"assignment", std::move(assignment)}};
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream(file) << doc.dump(2) << '\n';
}

SplitAssignment load_split(const fs::path& file) {
    json doc = read_json_file(file);
    const std::string record = "split " + file.filename().string();
    SplitAssignment out;
    const json& seed = require(doc, record, "seed");
    if (!seed.is_number_integer()) schema(record, "seed", "must be an integer");
    out.seed = seed.get<std::uint64_t>();
    const json& assignment = require(doc, record, "assignment");
    if (!assignment.is_object()) schema(record, "assignment", "must be an object");
    for (const auto& [id, v] : assignment.items()) {
        auto s = v.is_string() ? parse_split_name(v.get<std::string>()) : std::nullopt;
        if (!s) schema(record, "assignment." + id, "must be \"train\", \"valid\" or \"test\"");
        out.assignment[id] = *s;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Statistics

namespace {

// Decodes one UTF-8 codepoint at `i`, advancing it. Invalid bytes decode as U+FFFD.
char32_t next_codepoint(std::string_view s, std::size_t& i) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    int len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
    if (len == 0 || i + len > s.size()) {
        ++i;
        return 0xFFFD;
    }
    char32_t cp = len == 1 ? c : c & (0x7F >> len);
    for (int k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    i += len;
    return cp;
}

bool is_space(char32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v' || cp == 0x3000;
}

bool is_cjk(char32_t cp) {
    return (cp >= 0x3001 && cp <= 0x303F) ||  // CJK punctuation
           (cp >= 0x3040 && cp <= 0x30FF) ||  // hiragana, katakana
           (cp >= 0x31F0 && cp <= 0x31FF) || (cp >= 0x3400 && cp <= 0x4DBF) || (cp >= 0x4E00 && cp <= 0x9FFF) ||
           (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0xFF66 && cp <= 0xFF9F) || (cp >= 0x20000 && cp <= 0x2FA1F);
}

}  // namespace

std::vector<std::string> default_tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    int current_class = 0;  // 0 none, 1 other, 2 cjk
    auto flush = [&] {
        if (!current.empty()) tokens.push_back(std::move(current));
        current.clear();
        current_class = 0;
    };
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t start = i;
        char32_t cp = next_codepoint(text, i);
        if (is_space(cp)) {
            flush();
            continue;
        }
        int cls = is_cjk(cp) ? 2 : 1;
        if (cls != current_class) flush();
        current_class = cls;
        current.append(text.substr(start, i - start));
    }
    flush();
    return tokens;
}

namespace {

void finish(TopicStats& s) {
    if (s.utterances > 0) s.words_per_utterance = static_cast<double>(s.tokens) / static_cast<double>(s.utterances);
    if (s.dialogues > 0) s.spots_per_dialogue = static_cast<double>(s.spots) / static_cast<double>(s.dialogues);
}

}  // namespace

CorpusStats compute_statistics(const std::vector<DialogueCase>& dialogues, const Tokenizer& tokenizer) {
    CorpusStats stats;
    for (Topic t : kTopics) stats.per_topic[t] = TopicStats{};
    for (const auto& d : dialogues) {
        TopicStats& s = stats.per_topic[d.topic];
        ++s.dialogues;
        s.utterances += d.utterances.size();
        s.spots += d.spot_file.spot_ids.size();
        for (const auto& u : d.utterances) s.tokens += tokenizer(u.text).size();
    }
    for (auto& [_, s] : stats.per_topic) {
        stats.all.dialogues += s.dialogues;
        stats.all.utterances += s.utterances;
        stats.all.tokens += s.tokens;
        stats.all.spots += s.spots;
        finish(s);
    }
    finish(stats.all);
    return stats;
}

CorpusStats compute_statistics(const Dataset& dataset, const Tokenizer& tokenizer) {
    return compute_statistics(dataset.dialogues, tokenizer);
}

std::string format_statistics(const CorpusStats& stats) {
    auto num = [](const std::optional<double>& v) { return v ? fmt::format("{:.2f}", *v) : std::string("-"); };
    const auto& t = stats.per_topic.at(Topic::Travel);
    const auto& e = stats.per_topic.at(Topic::ExceptForTravel);
    const auto& n = stats.per_topic.at(Topic::NoRestriction);
    const auto& a = stats.all;
    std::string out;
    out += fmt::format("Dialogues: {}\n", a.dialogues);
    out += fmt::format("Utterances: {}\n", a.utterances);
    out += fmt::format("{:<16}{:>9}{:>9}{:>9}{:>9}\n", "", "T", "E", "N", "ALL");
    out += fmt::format("{:<16}{:>9}{:>9}{:>9}{:>9}\n", "Dialogues", t.dialogues, e.dialogues, n.dialogues,
                       a.dialogues);
    out += fmt::format("{:<16}{:>9}{:>9}{:>9}{:>9}\n", "Utterances", t.utterances, e.utterances, n.utterances,
                       a.utterances);
    out += fmt::format("{:<16}{:>9}{:>9}{:>9}{:>9}\n", "Words per Uttr.", num(t.words_per_utterance),
                       num(e.words_per_utterance), num(n.words_per_utterance), num(a.words_per_utterance));
    out += fmt::format("{:<16}{:>9}{:>9}{:>9}{:>9}\n", "Spots per Dial.", num(t.spots_per_dialogue),
                       num(e.spots_per_dialogue), num(n.spots_per_dialogue), num(a.spots_per_dialogue));
    return out;
}

// ---------------------------------------------------------------------------

DialogueCase truncate_dialogue(const DialogueCase& dialogue, int turns) {
    if (turns < 1) throw Error(Errc::InvalidConfig, "truncate_dialogue: turns must be >= 1");
    DialogueCase out = dialogue;
    const std::size_t keep = static_cast<std::size_t>(turns) * 2;
    if (out.utterances.size() > keep) out.utterances.resize(keep);
    return out;
}

}  // namespace sumrec
