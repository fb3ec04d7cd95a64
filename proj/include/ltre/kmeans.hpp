#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "ltre/common.hpp"

namespace ltre {

struct KMeansResult {
    MatrixD centroids;                 // k x dim
    std::vector<std::uint32_t> assign; // per point
    double inertia = 0.0;              // sum of squared distances
};

/// Index of the nearest centroid by squared L2; ties go to the lowest id.
std::uint32_t nearest_centroid(const MatrixD& centroids, std::span<const double> point, double* distance = nullptr);

/// Lloyd's algorithm with k-means++ seeding. Clusters left empty by an
/// iteration are re-seeded at the point farthest from its centroid.
/// `warm_start`, when non-empty, replaces the k-means++ seeding.
KMeansResult kmeans(const MatrixD& points, std::size_t k, int iterations, std::mt19937_64& rng,
                    const MatrixD* warm_start = nullptr);

} // namespace ltre
