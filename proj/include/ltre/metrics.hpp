#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ltre/corpus.hpp"

namespace ltre {

// Grade-sequence primitives. `grades[j]` is the grade of the document at
// rank j + 1.

/// 2^grade - 1
double ndcg_gain(int grade);
/// sum_{j <= k} gain(g_j) / log2(j + 1)
double dcg_at_k(std::span<const int> grades, int k);
/// DCG of `grades` sorted in descending order.
double ideal_dcg_at_k(std::vector<int> grades, int k);
/// 1 / rank of the first grade >= rel_threshold within the top k, else 0.
double reciprocal_rank_at_k(std::span<const int> grades, int k, int rel_threshold = 1);
/// Hits with grade >= rel_threshold in the top k over `num_relevant`.
double recall_from_grades(std::span<const int> grades, std::size_t k, std::size_t num_relevant,
                          int rel_threshold = 1);

/// |top-k(a) intersect top-k(b)| / k
double overlap_at_k(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b, std::size_t k);
double overlap_at_k(const std::vector<std::string>& a, const std::vector<std::string>& b, std::size_t k);

// Doc-id level metrics against qrels for a single query.

double mrr_at_k(const std::vector<std::string>& ranking, const QrelSet& qrels, const std::string& query_id,
                int k = 10, int rel_threshold = 1);
/// nullopt (and a warning) when the query has no document at the threshold.
std::optional<double> recall_at_k(const std::vector<std::string>& ranking, const QrelSet& qrels,
                                  const std::string& query_id, std::size_t k, int rel_threshold = 1);
/// Ideal DCG from every judged document of the query; nullopt when it is 0.
std::optional<double> ndcg_at_k(const std::vector<std::string>& ranking, const QrelSet& qrels,
                                const std::string& query_id, int k = 10);

struct RankedDoc {
    std::string doc_id;
    double score = 0.0;

    bool operator==(const RankedDoc&) const = default;
};

/// Query id -> ranked documents (best first).
using RunRanking = std::map<std::string, std::vector<RankedDoc>>;

/// TREC run format: `qid Q0 docid rank score tag`.
void write_run(const std::filesystem::path& path, const RunRanking& run, const std::string& tag = "ltre");
/// Keeps the file order of each query's lines; a rank column that
/// disagrees with that order is reported as a warning.
RunRanking read_run(const std::filesystem::path& path);

struct MetricsOptions {
    int mrr_cutoff = 10;
    std::vector<std::size_t> recall_cutoffs{200, 1000};
    int ndcg_cutoff = 10;
    int rel_threshold = 1;
};

struct QueryMetrics {
    std::string query_id;
    double reciprocal_rank = 0.0;
    std::map<std::size_t, double> recall;
    std::optional<double> ndcg;
};

struct MetricsReport {
    double mrr_at_10 = 0.0;
    std::map<std::size_t, double> recall_at_k;
    double ndcg_at_10 = 0.0;
    std::size_t num_queries = 0;
    std::vector<QueryMetrics> per_query;

    std::string to_json() const;
    std::string csv_header() const;
    std::string csv_row() const;
};

/// Aggregates per-query metrics. Queries without judgments are skipped;
/// recall and NDCG average over the queries where they are defined.
MetricsReport evaluate_run(const RunRanking& run, const QrelSet& qrels, const MetricsOptions& options = {});

/// Aggregates pre-computed per-query values the same way evaluate_run does.
MetricsReport summarize(std::vector<QueryMetrics> per_query);

} // namespace ltre
