#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ltre/common.hpp"

namespace ltre {

/// Fixed document representations, one row per document ordinal. Never
/// modified once constructed; training only reads it.
class DocEmbeddingMatrix {
  public:
    DocEmbeddingMatrix() = default;

    /// `doc_ids` may be empty, in which case ids are the decimal ordinals.
    DocEmbeddingMatrix(MatrixD values, std::vector<std::string> doc_ids = {});

    std::size_t size() const noexcept {
        return values_.rows();
    }
    std::size_t dim() const noexcept {
        return values_.cols();
    }
    const MatrixD& values() const noexcept {
        return values_;
    }
    std::span<const double> row(std::size_t ordinal) const {
        return values_.row(ordinal);
    }

    const std::string& doc_id(std::size_t ordinal) const {
        return doc_ids_.at(ordinal);
    }
    const std::vector<std::string>& doc_ids() const noexcept {
        return doc_ids_;
    }
    std::optional<std::uint32_t> ordinal(const std::string& doc_id) const;

    std::uint64_t fingerprint() const {
        return fingerprint_of(values_.values());
    }

  private:
    MatrixD values_;
    std::vector<std::string> doc_ids_;
    std::unordered_map<std::string, std::uint32_t> ordinals_;
};

/// Per-term input vectors for the query encoder.
class TermEmbeddingTable {
  public:
    TermEmbeddingTable() = default;
    TermEmbeddingTable(MatrixD vectors, std::vector<std::string> terms);

    std::size_t size() const noexcept {
        return vectors_.rows();
    }
    std::size_t dim() const noexcept {
        return vectors_.cols();
    }
    const MatrixD& vectors() const noexcept {
        return vectors_;
    }
    const std::vector<std::string>& terms() const noexcept {
        return terms_;
    }
    std::optional<std::size_t> row_of(const std::string& term) const;

  private:
    MatrixD vectors_;
    std::vector<std::string> terms_;
    std::unordered_map<std::string, std::size_t> rows_;
};

} // namespace ltre
