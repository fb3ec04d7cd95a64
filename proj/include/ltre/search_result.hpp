#pragma once

#include <cstdint>
#include <vector>

namespace ltre {

struct ScoredDoc {
    std::uint32_t ordinal = 0;
    double score = 0.0;

    bool operator==(const ScoredDoc&) const = default;
};

/// Ranked hits for one query: scores non-increasing, ties by ascending
/// ordinal, no duplicate ordinals.
using SearchResult = std::vector<ScoredDoc>;

/// Strict weak order used by every ranking in the project.
inline bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) {
        return a.score > b.score;
    }
    return a.ordinal < b.ordinal;
}

} // namespace ltre
