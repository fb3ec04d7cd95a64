#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ltre/corpus.hpp"
#include "ltre/encoder.hpp"
#include "ltre/index.hpp"
#include "ltre/lexical.hpp"
#include "ltre/loss.hpp"
#include "ltre/metrics.hpp"

namespace ltre {

/// How candidate lists are built for each training query.
struct Strategy {
    enum class Variant { kLtre, kRandNeg, kLexicalTopNeg, kInBatchNeg, kNceNeg, kAsyncAnn };

    Variant variant = Variant::kLtre;
    int refresh_every = 0; // AsyncANN only

    static Strategy ltre() {
        return {};
    }
    static Strategy async_ann(int refresh_every) {
        return {Variant::kAsyncAnn, refresh_every};
    }

    /// "ltre", "randneg", "lexical", "inbatch", "nce", "async" (refresh 500)
    /// or "async:<R>".
    static Strategy parse(const std::string& text);
    std::string to_string() const;
    void validate() const;

    bool operator==(const Strategy&) const = default;
};

struct DiagnosticsConfig {
    /// Depth of the retrieved lists the per-step diagnostics look at.
    std::size_t depth = 200;
    /// Refresh period of the stale-retrieval cache used for the
    /// cached-vs-real-time overlap column. AsyncANN uses its own period.
    int async_refresh_every = 500;
};

struct TrainConfig {
    Strategy strategy;
    std::size_t batch_size = 32;
    std::size_t depth_n = 100;
    std::int64_t steps = 3000;
    LossKind loss;
    AdamWConfig optimizer;
    double dropout_p = 0.1;
    bool use_layer_norm = true;
    double init_noise = 0.01;
    /// Grade at which a document counts as relevant for the batch metrics.
    int rel_threshold = 1;
    DiagnosticsConfig diagnostics;
    Bm25Params bm25;
    std::uint64_t seed = 42;
    int threads = 1;

    void validate() const;
};

/// Encoder initialisation implied by the config.
QueryEncoderParams initial_params(const TrainConfig& config, std::size_t dim);

/// Judgments of one query resolved to document ordinals.
struct QueryLabels {
    std::unordered_map<std::uint32_t, int> grades;
    /// Documents carrying the query's highest grade, ascending doc id.
    std::vector<std::uint32_t> positives;
    /// Highest grade; ties go to the lowest doc id.
    std::uint32_t injection = 0;

    int grade(std::uint32_t ordinal) const {
        auto it = grades.find(ordinal);
        return it == grades.end() ? 0 : it->second;
    }
    std::size_t count_at_least(int threshold) const;
};

/// Throws ConfigError when the query has no relevant document in the corpus.
QueryLabels resolve_labels(const QrelSet& qrels, const std::string& query_id, const DocEmbeddingMatrix& docs);

/// Guarantees at least one label >= 1 candidate: when every candidate is
/// irrelevant, the last one is replaced by the injection document, scored
/// against `query_embedding`, keeping the replaced rank position.
void inject_relevant(ScoredCandidateList& list, const QueryLabels& labels, std::span<const double> query_embedding,
                     const DocEmbeddingMatrix& docs);

/// Candidate list from a retrieval result: true labels, f64 scores
/// recomputed from the document embeddings, positions in result order.
ScoredCandidateList candidates_from_result(const SearchResult& result, std::size_t n, const QueryLabels& labels,
                                           std::span<const double> query_embedding, const DocEmbeddingMatrix& docs);

struct StepRecord {
    std::int64_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double batch_mrr10 = 0.0;
    double batch_recall200 = 0.0;
    double overlap_lexical200 = 0.0;
    double overlap_async200 = 0.0;

    bool operator==(const StepRecord&) const = default;
};

struct TrainingLog {
    std::vector<StepRecord> records;

    static constexpr const char* kHeader =
            "step,loss,lr,batch_mrr10,batch_recall200,overlap_lexical200,overlap_async200";

    std::string to_csv() const;
    void write_csv(const std::filesystem::path& path) const;
    static TrainingLog read_csv(const std::filesystem::path& path);
};

/// Read-only inputs of a training run. All pointers must outlive the trainer.
struct TrainingResources {
    const DocEmbeddingMatrix* docs = nullptr;
    const TermEmbeddingTable* terms = nullptr;
    const std::vector<Query>* queries = nullptr;
    const QrelSet* qrels = nullptr;
    const RetrievalIndex* index = nullptr;
    const InvertedIndex* lexical = nullptr;
};

/// What an observer sees after candidates are final for a step.
struct StepView {
    std::int64_t step = 0;
    std::span<const std::size_t> batch; // positions into the query list
    std::span<const ScoredCandidateList> lists;
};

using StepObserver = std::function<void(const StepView&)>;

class Trainer {
  public:
    Trainer(TrainConfig config, const TrainingResources& resources, QueryEncoderParams params);
    ~Trainer();
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    /// Runs one step and returns its log record.
    StepRecord step();
    /// Query positions making up the batch of `step`.
    std::vector<std::size_t> batch_at(std::int64_t step) const;

    const QueryEncoderParams& params() const noexcept {
        return params_;
    }
    const TrainConfig& config() const noexcept {
        return config_;
    }
    std::int64_t steps_done() const noexcept {
        return step_;
    }
    void set_observer(StepObserver observer) {
        observer_ = std::move(observer);
    }

  private:
    struct Cache;

    std::vector<ScoredCandidateList> sample(std::span<const std::size_t> batch, const MatrixD& embeddings,
                                            const std::vector<SearchResult>& realtime,
                                            const std::vector<const SearchResult*>& cached);
    const std::vector<std::size_t>& epoch_order(std::int64_t epoch) const;

    TrainConfig config_;
    TrainingResources res_;
    QueryEncoderParams params_;
    OptimizerState opt_;
    MatrixD features_;
    std::vector<QueryLabels> labels_;
    std::vector<std::vector<std::uint32_t>> lexical_top_;
    std::unique_ptr<Cache> cache_;
    StepObserver observer_;
    std::int64_t step_ = 0;
    mutable std::int64_t order_epoch_ = -1;
    mutable std::vector<std::size_t> order_;
};

struct TrainResult {
    QueryEncoderParams params;
    TrainingLog log;
};

TrainResult train_loop(const TrainConfig& config, const TrainingResources& resources,
                       std::optional<QueryEncoderParams> init = std::nullopt, StepObserver observer = {});

/// Encodes queries in eval mode, one row per query.
MatrixD encode_queries(const QueryEncoderParams& params, const std::vector<Query>& queries,
                       const TermEmbeddingTable& terms, int threads = 1);

/// Top-`depth` retrieval for every query through `index`.
RunRanking retrieve(const QueryEncoderParams& params, const std::vector<Query>& queries,
                    const TermEmbeddingTable& terms, const RetrievalIndex& index, const DocEmbeddingMatrix& docs,
                    std::size_t depth, int threads = 1);

/// Mean overlap@k between each query's run and its BM25 top-k.
double mean_lexical_overlap(const RunRanking& run, const std::vector<Query>& queries, const InvertedIndex& lexical,
                            const DocEmbeddingMatrix& docs, std::size_t k = 200, const Bm25Params& bm25 = {});

} // namespace ltre
