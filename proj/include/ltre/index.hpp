#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ltre/common.hpp"
#include "ltre/embeddings.hpp"
#include "ltre/search_result.hpp"

namespace ltre {

/// Reference top-n: scores every row, sorts everything, keeps n.
SearchResult brute_force_topn(const MatrixD& embeddings, std::span<const double> query, std::size_t n);

/// Immutable retrieval structure over a fixed embedding matrix.
class RetrievalIndex {
  public:
    virtual ~RetrievalIndex() = default;

    virtual std::size_t dim() const = 0;
    virtual std::size_t size() const = 0;
    virtual std::string name() const = 0;
    /// Bytes held by the per-document payload (vectors or codes).
    virtual std::size_t payload_bytes() const = 0;

    virtual SearchResult search(std::span<const double> query, std::size_t n) const = 0;

    /// One result per query row. Work is split across queries only, so the
    /// output does not depend on `threads`.
    std::vector<SearchResult> search_batch(const MatrixD& queries, std::size_t n, int threads = 1) const;
};

/// Exhaustive inner-product index. Stores f32 and accumulates in f64.
class FlatIndex final : public RetrievalIndex {
  public:
    explicit FlatIndex(const MatrixD& embeddings);
    explicit FlatIndex(const DocEmbeddingMatrix& embeddings) : FlatIndex(embeddings.values()) {}

    std::size_t dim() const override {
        return vectors_.cols();
    }
    std::size_t size() const override {
        return vectors_.rows();
    }
    std::string name() const override {
        return "flat";
    }
    std::size_t payload_bytes() const override {
        return vectors_.values().size() * sizeof(float);
    }
    SearchResult search(std::span<const double> query, std::size_t n) const override;

  private:
    MatrixF vectors_;
};

inline std::vector<SearchResult> flat_search(const FlatIndex& index, const MatrixD& queries, std::size_t n,
                                             int threads = 1) {
    return index.search_batch(queries, n, threads);
}

/// Product-quantizer codebooks with an optional learned rotation.
/// Vectors are rotated (y = R x) and y is split into m contiguous
/// sub-vectors of dim / m entries each.
struct PQCodebooks {
    std::size_t dim = 0;
    std::size_t m = 0;
    std::size_t bits = 8;
    MatrixF rotation;             // dim x dim, orthonormal
    std::vector<float> centroids; // m x 2^bits x (dim / m)

    std::size_t ksub() const noexcept {
        return std::size_t{1} << bits;
    }
    std::size_t dsub() const noexcept {
        return m ? dim / m : 0;
    }
    std::span<const float> centroid(std::size_t sub, std::size_t code) const {
        return {centroids.data() + (sub * ksub() + code) * dsub(), dsub()};
    }
    std::span<float> centroid(std::size_t sub, std::size_t code) {
        return {centroids.data() + (sub * ksub() + code) * dsub(), dsub()};
    }

    /// R x, accumulated in f64.
    std::vector<double> rotate(std::span<const double> x) const;
    /// Max |R^T R - I| entry.
    double orthonormality_error() const;
};

struct PQTrainOptions {
    std::size_t m = 8;
    std::size_t bits = 8;
    int opq_iters = 0;
    int kmeans_iters = 20;
    std::uint64_t seed = 0;
};

PQCodebooks train_pq(const MatrixD& embeddings, const PQTrainOptions& options);

/// Codes row-major, num_rows x m; nearest centroid per sub-vector with
/// ties resolved to the lowest centroid id.
std::vector<std::uint8_t> pq_encode(const PQCodebooks& codebooks, const MatrixD& embeddings);

/// Decodes codes back to the original (unrotated) space.
MatrixD pq_reconstruct(const PQCodebooks& codebooks, std::span<const std::uint8_t> codes);

/// Mean squared L2 reconstruction error of `embeddings` under `codebooks`.
double pq_distortion(const PQCodebooks& codebooks, const MatrixD& embeddings);

/// Single-list (IVF1) product-quantized index scanned exhaustively with
/// per-query inner-product lookup tables.
class PQIndex final : public RetrievalIndex {
  public:
    PQIndex(PQCodebooks codebooks, std::vector<std::uint8_t> codes);

    static PQIndex build(const MatrixD& embeddings, const PQTrainOptions& options);

    std::size_t dim() const override {
        return codebooks_.dim;
    }
    std::size_t size() const override {
        return count_;
    }
    std::string name() const override;
    std::size_t payload_bytes() const override {
        return codes_.size();
    }
    SearchResult search(std::span<const double> query, std::size_t n) const override;

    const PQCodebooks& codebooks() const noexcept {
        return codebooks_;
    }
    std::span<const std::uint8_t> codes() const noexcept {
        return codes_;
    }

  private:
    PQCodebooks codebooks_;
    std::vector<std::uint8_t> codes_;
    std::size_t count_ = 0;
};

inline std::vector<SearchResult> pq_search(const PQIndex& index, const MatrixD& queries, std::size_t n,
                                           int threads = 1) {
    return index.search_batch(queries, n, threads);
}

/// Embedding file: "LTRE", u32 version (1), u64 count, u32 dim, then
/// count x dim f32 little-endian.
void save_embeddings(const MatrixD& matrix, const std::filesystem::path& path);
MatrixD load_embeddings(const std::filesystem::path& path);
std::vector<std::byte> serialize_embeddings(const MatrixD& matrix);
MatrixD deserialize_embeddings(std::span<const std::byte> bytes);

/// PQ index file: "LTRQ", u32 version, u32 m, u32 bits, u32 dim, u64 count,
/// rotation f32, centroids f32, codes u8. Little-endian.
void save_pq_index(const PQIndex& index, const std::filesystem::path& path);
PQIndex load_pq_index(const std::filesystem::path& path);

} // namespace ltre
