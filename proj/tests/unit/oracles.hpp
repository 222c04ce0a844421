#pragma once

// Small reference implementations used to cross-check the library. They are
// written for clarity and share no code with the library.

#include "vecspace/rng.hpp"
#include "vecspace/toy_world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

namespace oracle {

using vecspace::Caption;
using vecspace::TokenId;

inline Caption random_caption(vecspace::Rng& rng, std::size_t min_len, std::size_t max_len, std::size_t alphabet) {
    Caption c;
    const std::size_t len = min_len + static_cast<std::size_t>(rng.below(max_len - min_len + 1));
    for (std::size_t i = 0; i < len; ++i)
        c.ids.push_back(static_cast<TokenId>(vecspace::kNumSpecials + rng.below(alphabet)));
    return c;
}

inline std::size_t count_occurrences(const std::vector<TokenId>& seq, const std::vector<TokenId>& gram) {
    std::size_t n = 0;
    for (std::size_t i = 0; i + gram.size() <= seq.size(); ++i)
        if (std::equal(gram.begin(), gram.end(), seq.begin() + static_cast<std::ptrdiff_t>(i))) ++n;
    return n;
}

// Sentence BLEU over captions without framing tokens.
inline double bleu(const Caption& cand, const std::vector<Caption>& refs, std::size_t max_order) {
    const auto& c = cand.ids;
    double geometric = 1.0;
    for (std::size_t n = 1; n <= max_order; ++n) {
        if (c.size() < n) return 0.0;
        std::size_t matched = 0;
        const std::size_t total = c.size() - n + 1;
        std::vector<std::vector<TokenId>> done;
        for (std::size_t i = 0; i < total; ++i) {
            std::vector<TokenId> gram(c.begin() + static_cast<std::ptrdiff_t>(i),
                                      c.begin() + static_cast<std::ptrdiff_t>(i + n));
            if (std::find(done.begin(), done.end(), gram) != done.end()) continue;
            done.push_back(gram);
            std::size_t ref_max = 0;
            for (const auto& r : refs) ref_max = std::max(ref_max, count_occurrences(r.ids, gram));
            matched += std::min(count_occurrences(c, gram), ref_max);
        }
        if (matched == 0) return 0.0;
        const double p = static_cast<double>(matched) / static_cast<double>(total);
        geometric *= std::pow(p, 1.0 / static_cast<double>(max_order));
    }
    std::size_t r = refs.front().ids.size();
    for (const auto& ref : refs) {
        const auto d = std::llabs(static_cast<long long>(ref.ids.size()) - static_cast<long long>(c.size()));
        const auto best = std::llabs(static_cast<long long>(r) - static_cast<long long>(c.size()));
        if (d < best || (d == best && ref.ids.size() < r)) r = ref.ids.size();
    }
    const double bp = c.size() > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c.size()));
    return bp * geometric;
}

} // namespace oracle
