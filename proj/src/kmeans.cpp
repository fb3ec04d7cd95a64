#include "ltre/kmeans.hpp"

#include <algorithm>
#include <limits>

#include <spdlog/spdlog.h>

namespace ltre {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

MatrixD seed_plus_plus(const MatrixD& points, std::size_t k, std::mt19937_64& rng) {
    const std::size_t n = points.rows();
    MatrixD centroids(k, points.cols());
    std::vector<double> closest(n, std::numeric_limits<double>::infinity());
    std::vector<char> chosen(n, 0);

    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    std::size_t pick = first(rng);
    for (std::size_t c = 0; c < k; ++c) {
        if (c > 0) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                total += closest[i];
            }
            if (total > 0.0) {
                std::uniform_real_distribution<double> u(0.0, total);
                double target = u(rng);
                pick = n;
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += closest[i];
                    if (closest[i] > 0.0 && acc >= target) {
                        pick = i;
                        break;
                    }
                }
                if (pick == n) {
                    // rounding at the tail: take the last point with mass
                    for (std::size_t i = n; i-- > 0;) {
                        if (closest[i] > 0.0) {
                            pick = i;
                            break;
                        }
                    }
                }
            } else {
                // every point coincides with a centroid already
                auto it = std::find(chosen.begin(), chosen.end(), 0);
                pick = it == chosen.end() ? c % n : static_cast<std::size_t>(it - chosen.begin());
            }
        }
        chosen[pick] = 1;
        auto src = points.row(pick);
        std::copy(src.begin(), src.end(), centroids.row(c).begin());
        for (std::size_t i = 0; i < n; ++i) {
            closest[i] = std::min(closest[i], squared_distance(points.row(i), centroids.row(c)));
        }
    }
    return centroids;
}

} // namespace

std::uint32_t nearest_centroid(const MatrixD& centroids, std::span<const double> point, double* distance) {
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
        const double d = squared_distance(point, centroids.row(c));
        if (d < best_d) {
            best_d = d;
            best = static_cast<std::uint32_t>(c);
        }
    }
    if (distance != nullptr) {
        *distance = best_d;
    }
    return best;
}

KMeansResult kmeans(const MatrixD& points, std::size_t k, int iterations, std::mt19937_64& rng,
                    const MatrixD* warm_start) {
    const std::size_t n = points.rows();
    const std::size_t dim = points.cols();
    if (k == 0 || n == 0) {
        throw ContractError("kmeans: need at least one point and one cluster");
    }
    if (n < k) {
        spdlog::warn("kmeans: {} points for {} clusters; duplicate centroids will be created", n, k);
    }

    KMeansResult result;
    if (warm_start != nullptr && warm_start->rows() == k && warm_start->cols() == dim) {
        result.centroids = *warm_start;
    } else {
        result.centroids = seed_plus_plus(points, k, rng);
    }
    result.assign.assign(n, 0);
    std::vector<double> dist(n, 0.0);

    auto assign_all = [&] {
        result.inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            result.assign[i] = nearest_centroid(result.centroids, points.row(i), &dist[i]);
            result.inertia += dist[i];
        }
    };

    assign_all();
    for (int it = 0; it < iterations; ++it) {
        MatrixD sums(k, dim);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto row = sums.row(result.assign[i]);
            auto p = points.row(i);
            for (std::size_t j = 0; j < dim; ++j) {
                row[j] += p[j];
            }
            ++counts[result.assign[i]];
        }
        std::vector<char> taken(n, 0);
        for (std::size_t c = 0; c < k; ++c) {
            auto centroid = result.centroids.row(c);
            if (counts[c] > 0) {
                auto s = sums.row(c);
                for (std::size_t j = 0; j < dim; ++j) {
                    centroid[j] = s[j] / static_cast<double>(counts[c]);
                }
                continue;
            }
            // re-seed an empty cluster at the worst-served point
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && (far == n || dist[i] > dist[far])) {
                    far = i;
                }
            }
            if (far == n || dist[far] <= 0.0) {
                continue;
            }
            taken[far] = 1;
            dist[far] = 0.0;
            auto p = points.row(far);
            std::copy(p.begin(), p.end(), centroid.begin());
        }
        assign_all();
    }
    return result;
}

} // namespace ltre
