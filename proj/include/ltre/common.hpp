#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "ltre/error.hpp"

namespace ltre {

/// Dense row-major matrix.
template <typename T>
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
            : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

    std::size_t rows() const noexcept {
        return rows_;
    }
    std::size_t cols() const noexcept {
        return cols_;
    }
    bool empty() const noexcept {
        return values_.empty();
    }

    T& operator()(std::size_t r, std::size_t c) {
        return values_[r * cols_ + c];
    }
    const T& operator()(std::size_t r, std::size_t c) const {
        return values_[r * cols_ + c];
    }

    std::span<T> row(std::size_t r) {
        return {values_.data() + r * cols_, cols_};
    }
    std::span<const T> row(std::size_t r) const {
        return {values_.data() + r * cols_, cols_};
    }

    std::span<T> values() noexcept {
        return values_;
    }
    std::span<const T> values() const noexcept {
        return values_;
    }

    bool operator==(const Matrix&) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> values_;
};

using MatrixD = Matrix<double>;
using MatrixF = Matrix<float>;

/// Inner product accumulated in f64, ascending index order.
template <typename A, typename B>
double dot(std::span<const A> a, std::span<const B> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

/// Generator for an independent random stream keyed by (seed, tags...).
/// Streams with different tags do not depend on each other, so work split
/// across threads draws the same numbers regardless of scheduling.
std::mt19937_64 make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {});

/// Content hash of raw bytes; used to prove buffers were not modified.
std::uint64_t fingerprint(std::span<const std::byte> bytes);

template <typename T>
std::uint64_t fingerprint_of(std::span<const T> values) {
    return fingerprint(std::as_bytes(values));
}

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
/// handled by exactly one worker; results must be written to per-index slots.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

/// Rounds every entry to the nearest f32 so f32 storage is lossless.
void round_to_float(std::span<double> values);

bool all_finite(std::span<const double> values);

} // namespace ltre
