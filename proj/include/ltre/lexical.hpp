#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ltre/corpus.hpp"
#include "ltre/search_result.hpp"

namespace ltre {

struct Posting {
    std::uint32_t doc = 0;
    std::uint32_t tf = 0;

    bool operator==(const Posting&) const = default;
};

/// Term -> postings sorted by document ordinal.
class InvertedIndex {
  public:
    InvertedIndex() = default;
    explicit InvertedIndex(const std::vector<Document>& documents);

    const std::vector<Posting>& postings(const std::string& term) const;
    std::size_t document_frequency(const std::string& term) const {
        return postings(term).size();
    }
    std::size_t num_docs() const noexcept {
        return doc_lengths_.size();
    }
    std::size_t num_terms() const noexcept {
        return postings_.size();
    }
    std::uint32_t doc_length(std::size_t ordinal) const {
        return doc_lengths_.at(ordinal);
    }
    double avg_doc_length() const noexcept {
        return avg_doc_length_;
    }

  private:
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::vector<std::uint32_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
};

inline InvertedIndex build_lexical_index(const std::vector<Document>& documents) {
    return InvertedIndex(documents);
}

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

/// ln(1 + (N - df + 0.5) / (df + 0.5)); never negative.
double bm25_idf(std::size_t num_docs, std::size_t df);

/// Contribution of one matching term to a document's score.
double bm25_term_weight(double idf, std::uint32_t tf, std::uint32_t doc_length, double avg_doc_length,
                        const Bm25Params& params);

/// Top-n documents by BM25. Query terms are deduplicated and visited in
/// lexicographic order; documents scoring 0 are never returned.
SearchResult bm25_search(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                         std::size_t n, const Bm25Params& params = {});

inline SearchResult bm25_search(const InvertedIndex& index, const Query& query, std::size_t n,
                                const Bm25Params& params = {}) {
    return bm25_search(index, query.tokens, n, params);
}

} // namespace ltre
