#include "ltre/lexical.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace ltre {

InvertedIndex::InvertedIndex(const std::vector<Document>& documents) {
    doc_lengths_.reserve(documents.size());
    std::uint64_t total = 0;
    for (std::size_t d = 0; d < documents.size(); ++d) {
        const auto& tokens = documents[d].tokens;
        doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total += tokens.size();
        std::unordered_map<std::string, std::uint32_t> counts;
        for (const auto& t : tokens) {
            ++counts[t];
        }
        for (auto& [term, tf] : counts) {
            // documents are visited in ordinal order, so lists stay sorted
            postings_[term].push_back(Posting{static_cast<std::uint32_t>(d), tf});
        }
    }
    avg_doc_length_ = documents.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(documents.size());
}

const std::vector<Posting>& InvertedIndex::postings(const std::string& term) const {
    static const std::vector<Posting> kEmpty;
    auto it = postings_.find(term);
    return it == postings_.end() ? kEmpty : it->second;
}

double bm25_idf(std::size_t num_docs, std::size_t df) {
    const double n = static_cast<double>(num_docs);
    const double f = static_cast<double>(df);
    return std::log(1.0 + (n - f + 0.5) / (f + 0.5));
}

double bm25_term_weight(double idf, std::uint32_t tf, std::uint32_t doc_length, double avg_doc_length,
                        const Bm25Params& params) {
    const double t = static_cast<double>(tf);
    const double norm = avg_doc_length > 0.0 ? static_cast<double>(doc_length) / avg_doc_length : 0.0;
    return idf * t * (params.k1 + 1.0) / (t + params.k1 * (1.0 - params.b + params.b * norm));
}

SearchResult bm25_search(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                         std::size_t n, const Bm25Params& params) {
    if (n == 0) {
        throw ContractError("bm25_search: n must be >= 1");
    }
    std::set<std::string> terms(query_tokens.begin(), query_tokens.end());
    std::vector<double> scores(index.num_docs(), 0.0);
    std::vector<std::uint32_t> touched;
    std::vector<char> seen(index.num_docs(), 0);
    for (const auto& term : terms) {
        const auto& list = index.postings(term);
        if (list.empty()) {
            continue;
        }
        const double idf = bm25_idf(index.num_docs(), list.size());
        for (const auto& p : list) {
            scores[p.doc] += bm25_term_weight(idf, p.tf, index.doc_length(p.doc), index.avg_doc_length(), params);
            if (!seen[p.doc]) {
                seen[p.doc] = 1;
                touched.push_back(p.doc);
            }
        }
    }
    SearchResult hits;
    hits.reserve(touched.size());
    for (auto d : touched) {
        if (scores[d] > 0.0) {
            hits.push_back(ScoredDoc{d, scores[d]});
        }
    }
    std::size_t keep = std::min(n, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), ranks_before);
    hits.resize(keep);
    return hits;
}

} // namespace ltre
