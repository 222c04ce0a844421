#pragma once

#include "vecspace/toy_world.hpp"

#include <cstddef>
#include <map>
#include <span>
#include <vector>

namespace vecspace {

using Ngram = std::vector<TokenId>;
using NgramCounts = std::map<Ngram, std::size_t>;

// Counts of every contiguous n-gram; empty when the sequence is shorter than `order`.
NgramCounts ngram_counts(std::span<const TokenId> tokens, std::size_t order);

struct BleuBreakdown {
    std::vector<double> modified_precisions;  // p_1 .. p_N
    double brevity_penalty = 1.0;
    std::size_t candidate_length = 0;
    std::size_t effective_reference_length = 0;
    double score = 0.0;
};

// Sentence-level BLEU with clipped n-gram precision and the closest-length
// brevity penalty (ties go to the shorter reference). PAD/BOS/EOS are removed
// before scoring and any zero precision zeroes the score; no smoothing.
// Throws std::invalid_argument for an empty candidate or reference list.
BleuBreakdown bleu(const Caption& candidate, std::span<const Caption> references,
                   std::size_t max_order = 4);

// BLEU-1 against a single reference, divided by the reference length n.
// Throws std::invalid_argument when n is zero.
double gamma1(const Caption& candidate, const Caption& reference);

} // namespace vecspace
