#include "vecspace/text_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>

namespace vecspace {

NgramCounts ngram_counts(std::span<const TokenId> tokens, std::size_t order) {
    if (order == 0) throw std::invalid_argument("n-gram order must be at least 1");
    NgramCounts counts;
    if (tokens.size() < order) return counts;
    for (std::size_t i = 0; i + order <= tokens.size(); ++i)
        ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                       tokens.begin() + static_cast<std::ptrdiff_t>(i + order))];
    return counts;
}

BleuBreakdown bleu(const Caption& candidate, std::span<const Caption> references, std::size_t max_order) {
    if (max_order == 0) throw std::invalid_argument("max_order must be at least 1");
    if (references.empty()) throw std::invalid_argument("BLEU needs at least one reference");
    const Caption cand = strip_framing(candidate);
    if (cand.ids.empty()) throw std::invalid_argument("BLEU candidate is empty");

    std::vector<Caption> refs;
    refs.reserve(references.size());
    for (const auto& r : references) refs.push_back(strip_framing(r));

    BleuBreakdown out;
    out.candidate_length = cand.ids.size();
    const auto c = static_cast<long long>(out.candidate_length);

    long long best_diff = std::numeric_limits<long long>::max();
    for (const auto& r : refs) {
        const auto len = static_cast<long long>(r.ids.size());
        const long long diff = std::llabs(len - c);
        if (diff < best_diff ||
            (diff == best_diff && static_cast<std::size_t>(len) < out.effective_reference_length)) {
            best_diff = diff;
            out.effective_reference_length = static_cast<std::size_t>(len);
        }
    }

    bool any_zero = false;
    for (std::size_t n = 1; n <= max_order; ++n) {
        const NgramCounts cand_counts = ngram_counts(cand.ids, n);
        NgramCounts max_ref;
        for (const auto& r : refs)
            for (const auto& [gram, count] : ngram_counts(r.ids, n)) {
                auto& slot = max_ref[gram];
                slot = std::max(slot, count);
            }
        std::size_t matched = 0, total = 0;
        for (const auto& [gram, count] : cand_counts) {
            total += count;
            auto it = max_ref.find(gram);
            if (it != max_ref.end()) matched += std::min(count, it->second);
        }
        const double p = total == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(total);
        if (p == 0.0) any_zero = true;
        out.modified_precisions.push_back(p);
    }

    const auto r = static_cast<double>(out.effective_reference_length);
    out.brevity_penalty = out.candidate_length > out.effective_reference_length
                              ? 1.0
                              : std::exp(1.0 - r / static_cast<double>(out.candidate_length));
    if (any_zero) {
        out.score = 0.0;
    } else if (max_order == 1) {
        out.score = out.brevity_penalty * out.modified_precisions[0];
    } else {
        double log_sum = 0.0;
        for (double p : out.modified_precisions) log_sum += std::log(p);
        out.score = out.brevity_penalty * std::exp(log_sum / static_cast<double>(max_order));
    }
    out.score = std::clamp(out.score, 0.0, 1.0);
    return out;
}

double gamma1(const Caption& candidate, const Caption& reference) {
    const std::size_t n = strip_framing(reference).ids.size();
    if (n == 0) throw std::invalid_argument("gamma1 needs a nonempty ground-truth caption");
    const Caption refs[] = {reference};
    return bleu(candidate, refs, 1).score / static_cast<double>(n);
}

} // namespace vecspace
