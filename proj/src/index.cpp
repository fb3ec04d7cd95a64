#include "ltre/index.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "binary_io.hpp"
#include "ltre/kmeans.hpp"

namespace ltre {

namespace {

void check_query(std::size_t expected, std::span<const double> query) {
    if (query.size() != expected) {
        throw ContractError("query dimension " + std::to_string(query.size()) + " does not match index dimension " +
                            std::to_string(expected));
    }
}

SearchResult select_top(std::vector<ScoredDoc> all, std::size_t n) {
    const std::size_t keep = std::min(n, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), ranks_before);
    all.resize(keep);
    return all;
}

/// Rows of `x` split into sub-vector matrices for subspace `sub`.
MatrixD subspace_slice(const MatrixD& x, std::size_t sub, std::size_t dsub) {
    MatrixD out(x.rows(), dsub);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto src = x.row(i).subspan(sub * dsub, dsub);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

MatrixD rotate_rows(const Eigen::MatrixXd& rotation, const MatrixD& x) {
    const std::size_t dim = x.cols();
    MatrixD y(x.rows(), dim);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto src = x.row(i);
        auto dst = y.row(i);
        for (std::size_t r = 0; r < dim; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < dim; ++c) {
                acc += rotation(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * src[c];
            }
            dst[r] = acc;
        }
    }
    return y;
}

MatrixD centroid_matrix(const PQCodebooks& cb, std::size_t sub) {
    MatrixD c(cb.ksub(), cb.dsub());
    for (std::size_t k = 0; k < cb.ksub(); ++k) {
        auto src = cb.centroid(sub, k);
        auto dst = c.row(k);
        for (std::size_t j = 0; j < cb.dsub(); ++j) {
            dst[j] = src[j];
        }
    }
    return c;
}

constexpr std::uint32_t kEmbeddingVersion = 1;
constexpr std::uint32_t kPQVersion = 1;

} // namespace

SearchResult brute_force_topn(const MatrixD& embeddings, std::span<const double> query, std::size_t n) {
    check_query(embeddings.cols(), query);
    std::vector<ScoredDoc> all(embeddings.rows());
    for (std::size_t d = 0; d < embeddings.rows(); ++d) {
        all[d] = ScoredDoc{static_cast<std::uint32_t>(d), dot(query, embeddings.row(d))};
    }
    std::sort(all.begin(), all.end(), ranks_before);
    all.resize(std::min(n, all.size()));
    return all;
}

std::vector<SearchResult> RetrievalIndex::search_batch(const MatrixD& queries, std::size_t n, int threads) const {
    std::vector<SearchResult> results(queries.rows());
    parallel_for(queries.rows(), threads, [&](std::size_t i) { results[i] = search(queries.row(i), n); });
    return results;
}

FlatIndex::FlatIndex(const MatrixD& embeddings) : vectors_(embeddings.rows(), embeddings.cols()) {
    auto src = embeddings.values();
    auto dst = vectors_.values();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = static_cast<float>(src[i]);
    }
}

SearchResult FlatIndex::search(std::span<const double> query, std::size_t n) const {
    if (n == 0) {
        throw ContractError("search depth must be >= 1");
    }
    check_query(dim(), query);
    std::vector<ScoredDoc> all(size());
    for (std::size_t d = 0; d < size(); ++d) {
        all[d] = ScoredDoc{static_cast<std::uint32_t>(d), dot(query, vectors_.row(d))};
    }
    return select_top(std::move(all), n);
}

std::vector<double> PQCodebooks::rotate(std::span<const double> x) const {
    std::vector<double> y(dim);
    for (std::size_t r = 0; r < dim; ++r) {
        y[r] = dot(rotation.row(r), x);
    }
    return y;
}

double PQCodebooks::orthonormality_error() const {
    double worst = 0.0;
    for (std::size_t a = 0; a < dim; ++a) {
        for (std::size_t b = 0; b < dim; ++b) {
            double acc = 0.0;
            for (std::size_t r = 0; r < dim; ++r) {
                acc += static_cast<double>(rotation(r, a)) * static_cast<double>(rotation(r, b));
            }
            worst = std::max(worst, std::abs(acc - (a == b ? 1.0 : 0.0)));
        }
    }
    return worst;
}

PQCodebooks train_pq(const MatrixD& embeddings, const PQTrainOptions& options) {
    const std::size_t dim = embeddings.cols();
    if (options.m == 0 || dim % options.m != 0) {
        throw ValidationError("train_pq: m=" + std::to_string(options.m) + " does not divide dim=" +
                              std::to_string(dim));
    }
    if (options.bits < 1 || options.bits > 8) {
        throw ValidationError("train_pq: bits must lie in [1, 8]");
    }
    if (embeddings.rows() == 0) {
        throw ValidationError("train_pq: no training vectors");
    }
    PQCodebooks cb;
    cb.dim = dim;
    cb.m = options.m;
    cb.bits = options.bits;
    if ((std::size_t{1} << options.bits) > embeddings.rows()) {
        spdlog::warn("train_pq: 2^{} centroids exceed {} training vectors", options.bits, embeddings.rows());
    }

    const std::size_t dsub = cb.dsub();
    const std::size_t ksub = cb.ksub();
    Eigen::MatrixXd rotation = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    std::vector<MatrixD> centroids(cb.m);

    auto fit_subspaces = [&](const MatrixD& rotated) {
        for (std::size_t sub = 0; sub < cb.m; ++sub) {
            auto rng = make_rng(options.seed, {0x5051, sub});
            auto slice = subspace_slice(rotated, sub, dsub);
            const MatrixD* warm = centroids[sub].empty() ? nullptr : &centroids[sub];
            centroids[sub] = kmeans(slice, ksub, options.kmeans_iters, rng, warm).centroids;
        }
    };

    for (int it = 0; it < options.opq_iters; ++it) {
        auto rotated = rotate_rows(rotation, embeddings);
        fit_subspaces(rotated);
        // Procrustes: argmin_R sum ||R x - y_hat||^2 over orthonormal R.
        Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
        std::vector<double> recon(dim);
        for (std::size_t i = 0; i < embeddings.rows(); ++i) {
            auto y = rotated.row(i);
            for (std::size_t sub = 0; sub < cb.m; ++sub) {
                auto code = nearest_centroid(centroids[sub], y.subspan(sub * dsub, dsub));
                auto c = centroids[sub].row(code);
                std::copy(c.begin(), c.end(), recon.begin() + static_cast<std::ptrdiff_t>(sub * dsub));
            }
            auto x = embeddings.row(i);
            for (std::size_t r = 0; r < dim; ++r) {
                for (std::size_t c = 0; c < dim; ++c) {
                    cross(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) += recon[r] * x[c];
                }
            }
        }
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
        rotation = svd.matrixU() * svd.matrixV().transpose();
    }

    cb.rotation = MatrixF(dim, dim);
    for (std::size_t r = 0; r < dim; ++r) {
        for (std::size_t c = 0; c < dim; ++c) {
            cb.rotation(r, c) = static_cast<float>(rotation(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
        }
    }
    // Final codebooks are fit against the stored (f32) rotation.
    MatrixD rotated(embeddings.rows(), dim);
    for (std::size_t i = 0; i < embeddings.rows(); ++i) {
        auto y = cb.rotate(embeddings.row(i));
        std::copy(y.begin(), y.end(), rotated.row(i).begin());
    }
    fit_subspaces(rotated);

    cb.centroids.assign(cb.m * ksub * dsub, 0.0f);
    for (std::size_t sub = 0; sub < cb.m; ++sub) {
        for (std::size_t k = 0; k < ksub; ++k) {
            auto src = centroids[sub].row(k);
            auto dst = cb.centroid(sub, k);
            for (std::size_t j = 0; j < dsub; ++j) {
                dst[j] = static_cast<float>(src[j]);
            }
        }
    }
    return cb;
}

std::vector<std::uint8_t> pq_encode(const PQCodebooks& codebooks, const MatrixD& embeddings) {
    if (embeddings.cols() != codebooks.dim) {
        throw ContractError("pq_encode: dimension mismatch");
    }
    const std::size_t dsub = codebooks.dsub();
    std::vector<MatrixD> centroids;
    for (std::size_t sub = 0; sub < codebooks.m; ++sub) {
        centroids.push_back(centroid_matrix(codebooks, sub));
    }
    std::vector<std::uint8_t> codes(embeddings.rows() * codebooks.m);
    for (std::size_t i = 0; i < embeddings.rows(); ++i) {
        auto y = codebooks.rotate(embeddings.row(i));
        std::span<const double> ys(y);
        for (std::size_t sub = 0; sub < codebooks.m; ++sub) {
            codes[i * codebooks.m + sub] =
                    static_cast<std::uint8_t>(nearest_centroid(centroids[sub], ys.subspan(sub * dsub, dsub)));
        }
    }
    return codes;
}

MatrixD pq_reconstruct(const PQCodebooks& codebooks, std::span<const std::uint8_t> codes) {
    if (codebooks.m == 0 || codes.size() % codebooks.m != 0) {
        throw ContractError("pq_reconstruct: code array is not a multiple of m");
    }
    const std::size_t rows = codes.size() / codebooks.m;
    const std::size_t dim = codebooks.dim;
    const std::size_t dsub = codebooks.dsub();
    MatrixD out(rows, dim);
    std::vector<double> y(dim);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t sub = 0; sub < codebooks.m; ++sub) {
            auto c = codebooks.centroid(sub, codes[i * codebooks.m + sub]);
            for (std::size_t j = 0; j < dsub; ++j) {
                y[sub * dsub + j] = c[j];
            }
        }
        // x = R^T y
        auto dst = out.row(i);
        for (std::size_t c = 0; c < dim; ++c) {
            double acc = 0.0;
            for (std::size_t r = 0; r < dim; ++r) {
                acc += static_cast<double>(codebooks.rotation(r, c)) * y[r];
            }
            dst[c] = acc;
        }
    }
    return out;
}

double pq_distortion(const PQCodebooks& codebooks, const MatrixD& embeddings) {
    auto recon = pq_reconstruct(codebooks, pq_encode(codebooks, embeddings));
    double total = 0.0;
    for (std::size_t i = 0; i < embeddings.rows(); ++i) {
        auto a = embeddings.row(i);
        auto b = recon.row(i);
        for (std::size_t j = 0; j < a.size(); ++j) {
            total += (a[j] - b[j]) * (a[j] - b[j]);
        }
    }
    return embeddings.rows() ? total / static_cast<double>(embeddings.rows()) : 0.0;
}

PQIndex::PQIndex(PQCodebooks codebooks, std::vector<std::uint8_t> codes)
        : codebooks_(std::move(codebooks)), codes_(std::move(codes)) {
    if (codebooks_.m == 0 || codebooks_.dim % codebooks_.m != 0) {
        throw ValidationError("PQIndex: m must divide dim");
    }
    if (codes_.size() % codebooks_.m != 0) {
        throw ValidationError("PQIndex: code array is not a multiple of m");
    }
    const std::size_t ksub = codebooks_.ksub();
    for (auto c : codes_) {
        if (c >= ksub) {
            throw ValidationError("PQIndex: code " + std::to_string(c) + " out of range for " +
                                  std::to_string(codebooks_.bits) + " bits");
        }
    }
    count_ = codes_.size() / codebooks_.m;
}

PQIndex PQIndex::build(const MatrixD& embeddings, const PQTrainOptions& options) {
    auto cb = train_pq(embeddings, options);
    auto codes = pq_encode(cb, embeddings);
    return PQIndex(std::move(cb), std::move(codes));
}

std::string PQIndex::name() const {
    return "pq" + std::to_string(codebooks_.m);
}

SearchResult PQIndex::search(std::span<const double> query, std::size_t n) const {
    if (n == 0) {
        throw ContractError("search depth must be >= 1");
    }
    check_query(dim(), query);
    const std::size_t m = codebooks_.m;
    const std::size_t ksub = codebooks_.ksub();
    const std::size_t dsub = codebooks_.dsub();
    auto y = codebooks_.rotate(query);
    std::span<const double> ys(y);
    std::vector<double> table(m * ksub);
    for (std::size_t sub = 0; sub < m; ++sub) {
        auto ysub = ys.subspan(sub * dsub, dsub);
        for (std::size_t k = 0; k < ksub; ++k) {
            table[sub * ksub + k] = dot(ysub, codebooks_.centroid(sub, k));
        }
    }
    std::vector<ScoredDoc> all(count_);
    for (std::size_t d = 0; d < count_; ++d) {
        const std::uint8_t* code = codes_.data() + d * m;
        double score = 0.0;
        for (std::size_t sub = 0; sub < m; ++sub) {
            score += table[sub * ksub + code[sub]];
        }
        all[d] = ScoredDoc{static_cast<std::uint32_t>(d), score};
    }
    return select_top(std::move(all), n);
}

std::vector<std::byte> serialize_embeddings(const MatrixD& matrix) {
    detail::ByteWriter out;
    out.magic("LTRE");
    out.u32(kEmbeddingVersion);
    out.u64(matrix.rows());
    out.u32(static_cast<std::uint32_t>(matrix.cols()));
    for (double v : matrix.values()) {
        out.f32(static_cast<float>(v));
    }
    return std::move(out.bytes());
}

MatrixD deserialize_embeddings(std::span<const std::byte> bytes) {
    detail::ByteReader in(bytes, "embedding file");
    in.expect_magic("LTRE");
    const auto version = in.u32();
    if (version != kEmbeddingVersion) {
        throw FormatError("embedding file: unsupported version " + std::to_string(version));
    }
    const auto count = in.u64();
    const auto dim = in.u32();
    in.expect_remaining(in.checked_product(in.checked_product(count, dim), 4));
    MatrixD matrix(count, dim);
    for (auto& v : matrix.values()) {
        v = in.f32();
    }
    return matrix;
}

void save_embeddings(const MatrixD& matrix, const std::filesystem::path& path) {
    detail::write_file(path, serialize_embeddings(matrix));
}

MatrixD load_embeddings(const std::filesystem::path& path) {
    return deserialize_embeddings(detail::read_file(path));
}

void save_pq_index(const PQIndex& index, const std::filesystem::path& path) {
    const auto& cb = index.codebooks();
    detail::ByteWriter out;
    out.magic("LTRQ");
    out.u32(kPQVersion);
    out.u32(static_cast<std::uint32_t>(cb.m));
    out.u32(static_cast<std::uint32_t>(cb.bits));
    out.u32(static_cast<std::uint32_t>(cb.dim));
    out.u64(index.size());
    for (float v : cb.rotation.values()) {
        out.f32(v);
    }
    for (float v : cb.centroids) {
        out.f32(v);
    }
    for (auto c : index.codes()) {
        out.u8(c);
    }
    detail::write_file(path, out.bytes());
}

PQIndex load_pq_index(const std::filesystem::path& path) {
    auto bytes = detail::read_file(path);
    detail::ByteReader in(bytes, "PQ index file");
    in.expect_magic("LTRQ");
    const auto version = in.u32();
    if (version != kPQVersion) {
        throw FormatError("PQ index file: unsupported version " + std::to_string(version));
    }
    PQCodebooks cb;
    cb.m = in.u32();
    cb.bits = in.u32();
    cb.dim = in.u32();
    const auto count = in.u64();
    if (cb.m == 0 || cb.dim % cb.m != 0 || cb.bits < 1 || cb.bits > 8) {
        throw FormatError("PQ index file: inconsistent header");
    }
    const std::uint64_t centroid_count = cb.m * cb.ksub() * cb.dsub();
    in.expect_remaining(cb.dim * cb.dim * 4 + centroid_count * 4 + in.checked_product(count, cb.m));
    cb.rotation = MatrixF(cb.dim, cb.dim);
    for (auto& v : cb.rotation.values()) {
        v = in.f32();
    }
    cb.centroids.resize(centroid_count);
    for (auto& v : cb.centroids) {
        v = in.f32();
    }
    std::vector<std::uint8_t> codes(count * cb.m);
    for (auto& c : codes) {
        c = in.u8();
    }
    return PQIndex(std::move(cb), std::move(codes));
}

} // namespace ltre
