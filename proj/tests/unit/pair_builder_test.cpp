#include "doctest.h"

#include "oracles.hpp"
#include "table1.hpp"
#include "vecspace/corpus.hpp"
#include "vecspace/errors.hpp"
#include "vecspace/pair_builder.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

using namespace vecspace;

namespace {

std::vector<GroupedCaptions> random_groups(Rng& rng, std::size_t n, std::size_t max_k) {
    std::vector<GroupedCaptions> groups;
    for (std::size_t g = 0; g < n; ++g) {
        GroupedCaptions grp{"g" + std::to_string(g), {}};
        const auto k = rng.below(max_k + 1);
        for (std::uint64_t i = 0; i < k; ++i) grp.captions.push_back(oracle::random_caption(rng, 1, 4, 3));
        groups.push_back(std::move(grp));
    }
    return groups;
}

std::filesystem::path scratch_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("vecspace_unit_" + name);
}

} // namespace

TEST_CASE("make_pairs matches a brute-force double loop") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const auto groups = random_groups(rng, 1 + rng.below(6), 6);
        std::vector<CaptionPair> expected;
        for (const auto& g : groups)
            for (std::size_t i = 0; i < g.captions.size(); ++i)
                for (std::size_t j = 0; j < g.captions.size(); ++j)
                    if (i != j) expected.push_back({g.captions[i], g.captions[j]});
        const auto pairs = make_pairs(groups);
        CHECK(pairs == expected);
        CHECK(pair_stats(groups).num_pairs == pairs.size());
        for (const auto& p : pairs)
            CHECK(std::find(pairs.begin(), pairs.end(), CaptionPair{p.target, p.source}) != pairs.end());
    }
}

TEST_CASE("single-caption and empty inputs contribute nothing") {
    std::vector<GroupedCaptions> one{{"a", {Caption{{5, 6}}}}};
    CHECK(make_pairs(one).empty());
    CHECK(pair_stats({}) == PairStats{});
    CHECK(make_pairs({}).empty());
}

TEST_CASE("pair cap and surface-form dedup") {
    std::vector<GroupedCaptions> groups{{"a", {Caption{{4}}, Caption{{5}}, Caption{{4}}, Caption{{6}}}}};
    CHECK(make_pairs(groups).size() == 12);
    PairOptions dedup;
    dedup.dedup_surface_forms = true;
    CHECK(make_pairs(groups, dedup).size() == 6);

    PairOptions cap;
    cap.max_pairs_per_group = 5;
    cap.seed = 4;
    const auto capped = make_pairs(groups, cap);
    CHECK(capped.size() == 5);
    CHECK(make_pairs(groups, cap) == capped);
    const auto all = make_pairs(groups);
    for (const auto& p : capped) CHECK(std::find(all.begin(), all.end(), p) != all.end());
}

TEST_CASE("table 1 pair counts") {
    for (const auto& row : table1::rows()) {
        CAPTURE(row.dataset);
        const auto groups = table1::synthetic_groups(row);
        const PairStats s = pair_stats(groups);
        CHECK(s.num_samples == row.samples);
        CHECK(s.num_pairs == row.expected_pairs);
        CHECK(table1::matches_printed(s.num_pairs, row));
    }
}

TEST_CASE("ingest the grouped schema with UNK fallback") {
    const auto path = scratch_file("grouped.json");
    std::ofstream(path) << R"({"version": 1, "images": [{"id": 7}, {"id": "x"}],
        "annotations": [{"image_id": 7, "caption": "A red circle"},
                        {"image_id": 7, "caption": "a red zebra"},
                        {"image_id": "x", "caption": "there is a blue square"},
                        {"image_id": 7, "caption": "a red circle on a dark background"},
                        {"image_id": 7, "caption": "a picture of a red circle"},
                        {"image_id": 7, "caption": "the image shows a red circle"}]})";
    const auto groups = ingest_grouped_json(path);
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].sample_id == "7");
    CHECK(groups[0].captions.size() == 5);
    CHECK(groups[1].captions.size() == 1);
    const auto& vocab = Vocabulary::toy();
    CHECK(groups[0].captions[0] == vocab.encode("a red circle"));
    CHECK(groups[0].captions[1].ids[2] == kUnk);

    std::ofstream(path) << R"({"version": 2, "images": [], "annotations": []})";
    CHECK_THROWS_AS(ingest_grouped_json(path), FormatError);
    std::ofstream(path) << R"({"version": 1, "images": [{"id": 1}], "annotations": [{"image_id": 2, "caption": "a"}]})";
    CHECK_THROWS_AS(ingest_grouped_json(path), FormatError);
    std::ofstream(path) << "[1, 2";
    CHECK_THROWS_AS(ingest_grouped_json(path), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("ingest a corpus manifest and round-trip pairs") {
    const auto dir = scratch_file("pairs_corpus");
    std::filesystem::remove_all(dir);
    build_corpus(6, 3, 5, dir);
    const Corpus corpus = load_corpus(dir);
    const auto groups = ingest_grouped_json(dir / kManifestFileName);
    REQUIRE(groups.size() == corpus.records.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
        CHECK(groups[i].sample_id == corpus.records[i].id);
        CHECK(groups[i].captions == corpus.records[i].captions);
    }
    CHECK(pair_stats(ingest_grouped_json(dir)) == pair_stats(groups));
    const auto pairs = make_pairs(groups);
    CHECK(pairs.size() == 6 * 3 * 2);
    const auto jsonl = dir / "pairs.jsonl";
    write_pairs_jsonl(pairs, jsonl);
    CHECK(read_pairs_jsonl(jsonl) == pairs);
    std::filesystem::remove_all(dir);
}
