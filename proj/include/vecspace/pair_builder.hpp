#pragma once

#include "vecspace/toy_world.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace vecspace {

struct GroupedCaptions {
    std::string sample_id;
    std::vector<Caption> captions;
};

struct CaptionPair {
    Caption source;
    Caption target;
    friend bool operator==(const CaptionPair&, const CaptionPair&) = default;
};

struct PairStats {
    std::uint64_t num_samples = 0;
    std::uint64_t num_captions = 0;
    std::uint64_t min_captions_per_sample = 0;
    std::uint64_t max_captions_per_sample = 0;
    double mean_captions_per_sample = 0.0;
    std::uint64_t num_pairs = 0;
    friend bool operator==(const PairStats&, const PairStats&) = default;
};

struct PairOptions {
    // Keep at most this many pairs per group, chosen with `seed`.
    std::optional<std::size_t> max_pairs_per_group;
    bool dedup_surface_forms = false;
    std::uint64_t seed = 0;
};

// Every ordered (i, j), i != j, within each group; group order then i-major.
std::vector<CaptionPair> make_pairs(const std::vector<GroupedCaptions>& groups,
                                    const PairOptions& options = {});

// Sum over groups of k (k - 1); agrees with make_pairs(groups).size().
PairStats pair_stats(const std::vector<GroupedCaptions>& groups);

inline constexpr int kGroupedSchemaVersion = 1;

// Reads either the grouped-caption schema
//   {version, images:[{id}], annotations:[{image_id, caption}]}
// or a corpus manifest (the file or its directory). Captions are lowercased, split on whitespace and
// mapped through `vocab` with UNK for unknown words.
std::vector<GroupedCaptions> ingest_grouped_json(const std::filesystem::path& path,
                                                 const Vocabulary& vocab = Vocabulary::toy());

// One JSON object per line: {"source_tokens":[...], "target_tokens":[...]}.
void write_pairs_jsonl(const std::vector<CaptionPair>& pairs, const std::filesystem::path& path,
                       const Vocabulary& vocab = Vocabulary::toy());
std::vector<CaptionPair> read_pairs_jsonl(const std::filesystem::path& path,
                                          const Vocabulary& vocab = Vocabulary::toy());

} // namespace vecspace
