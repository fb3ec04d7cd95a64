#include "ltre/embeddings.hpp"

#include <cmath>

namespace ltre {

DocEmbeddingMatrix::DocEmbeddingMatrix(MatrixD values, std::vector<std::string> doc_ids)
        : values_(std::move(values)), doc_ids_(std::move(doc_ids)) {
    if (!all_finite(values_.values())) {
        throw ValidationError("document embeddings contain non-finite entries");
    }
    if (doc_ids_.empty()) {
        doc_ids_.reserve(values_.rows());
        for (std::size_t i = 0; i < values_.rows(); ++i) {
            doc_ids_.push_back(std::to_string(i));
        }
    }
    if (doc_ids_.size() != values_.rows()) {
        throw ValidationError(
                "document id count " + std::to_string(doc_ids_.size()) +
                " does not match embedding rows " + std::to_string(values_.rows()));
    }
    ordinals_.reserve(doc_ids_.size());
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
        if (!ordinals_.emplace(doc_ids_[i], static_cast<std::uint32_t>(i)).second) {
            throw ValidationError("duplicate document id '" + doc_ids_[i] + "'");
        }
    }
}

std::optional<std::uint32_t> DocEmbeddingMatrix::ordinal(const std::string& doc_id) const {
    auto it = ordinals_.find(doc_id);
    if (it == ordinals_.end()) {
        return std::nullopt;
    }
    return it->second;
}

TermEmbeddingTable::TermEmbeddingTable(MatrixD vectors, std::vector<std::string> terms)
        : vectors_(std::move(vectors)), terms_(std::move(terms)) {
    if (terms_.size() != vectors_.rows()) {
        throw ValidationError("term table has " + std::to_string(vectors_.rows()) +
                              " rows but " + std::to_string(terms_.size()) + " terms");
    }
    if (!all_finite(vectors_.values())) {
        throw ValidationError("term embeddings contain non-finite entries");
    }
    rows_.reserve(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) {
        if (!rows_.emplace(terms_[i], i).second) {
            throw ValidationError("duplicate term '" + terms_[i] + "'");
        }
    }
}

std::optional<std::size_t> TermEmbeddingTable::row_of(const std::string& term) const {
    auto it = rows_.find(term);
    if (it == rows_.end()) {
        return std::nullopt;
    }
    return it->second;
}

} // namespace ltre
