#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ltre/corpus.hpp"
#include "ltre/index.hpp"
#include "ltre/lexical.hpp"
#include "ltre/metrics.hpp"
#include "ltre/trainer.hpp"

namespace ltre {

struct IndexChoice {
    enum class Kind { kFlat, kPq };

    Kind kind = Kind::kFlat;
    std::size_t m = 8;
    std::size_t bits = 8;
    int opq_iters = 0;
    int kmeans_iters = 20;
    std::uint64_t seed = 0;

    /// "flat" or "pq<m>".
    static IndexChoice parse(const std::string& text);
    std::string name() const;
    PQTrainOptions pq_options() const;
};

struct EvalOptions {
    std::size_t depth = 1000;
    MetricsOptions metrics;
};

struct DiagnoseOptions {
    std::vector<Strategy> strategies{Strategy::ltre(), Strategy::parse("randneg"), Strategy::parse("lexical"),
                                     Strategy::async_ann(500)};
    std::vector<std::string> grid_indexes{"flat", "pq8", "pq4"};
    std::vector<std::uint64_t> grid_seeds{42, 43, 44};
};

/// Everything a CLI invocation needs; parsed from JSON with unknown keys
/// rejected.
struct ExperimentConfig {
    SyntheticSpec corpus;
    TrainConfig train;
    IndexChoice index;
    EvalOptions eval;
    DiagnoseOptions diagnose;
    std::filesystem::path out_dir = "out";

    void validate() const;
};

/// Throws ConfigError naming the offending key.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// The effective configuration as JSON (round-trips through the parser).
std::string experiment_config_json(const ExperimentConfig& config);

/// Artifacts written by `gen`, loaded back.
struct CorpusBundle {
    std::vector<Document> documents;
    std::vector<Query> train_queries;
    std::vector<Query> eval_queries;
    QrelSet qrels;
    DocEmbeddingMatrix doc_embeddings;
    TermEmbeddingTable term_table;
    InvertedIndex lexical;
};

namespace artifacts {
inline const char* kCollection = "collection.tsv";
inline const char* kTrainQueries = "train_queries.tsv";
inline const char* kEvalQueries = "eval_queries.tsv";
inline const char* kQrels = "qrels.txt";
inline const char* kDocEmbeddings = "doc_embeddings.ltre";
inline const char* kTermEmbeddings = "term_embeddings.ltre";
inline const char* kTerms = "terms.txt";
inline const char* kCheckpoint = "model.ltrp";
inline const char* kTrainingLog = "training_log.csv";
inline const char* kRun = "run.trec";
inline const char* kMetricsJson = "metrics.json";
inline const char* kMetricsCsv = "metrics.csv";
inline const char* kStepDiagnostics = "step_diagnostics.csv";
inline const char* kIndexGrid = "index_grid.csv";
std::string index_file(const IndexChoice& choice);
} // namespace artifacts

void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);
/// Throws Error naming the first missing artifact.
CorpusBundle load_corpus(const std::filesystem::path& dir);

std::unique_ptr<RetrievalIndex> build_index(const IndexChoice& choice, const DocEmbeddingMatrix& docs);
/// A flat index file is the embedding file itself.
void save_index(const IndexChoice& choice, const RetrievalIndex& index, const DocEmbeddingMatrix& docs,
                const std::filesystem::path& path);
std::unique_ptr<RetrievalIndex> load_index(const IndexChoice& choice, const std::filesystem::path& path);

void cmd_gen(const ExperimentConfig& config);
void cmd_index(const ExperimentConfig& config);
void cmd_train(const ExperimentConfig& config);
MetricsReport cmd_eval(const ExperimentConfig& config);
void cmd_diagnose(const ExperimentConfig& config);

} // namespace ltre
