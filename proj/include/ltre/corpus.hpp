#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ltre/embeddings.hpp"

namespace ltre {

/// Lowercases and splits on every non-alphanumeric byte.
std::vector<std::string> tokenize(std::string_view text);

struct Document {
    std::string doc_id;
    std::vector<std::string> tokens;
};

struct Query {
    std::string query_id;
    std::vector<std::string> tokens;
};

/// Graded relevance judgments. Only grades >= 1 are stored; absent pairs
/// read back as 0.
class QrelSet {
  public:
    void set(const std::string& query_id, const std::string& doc_id, int grade);
    int grade(const std::string& query_id, const std::string& doc_id) const;

    /// Judged documents of one query with their grades, ordered by doc id.
    const std::map<std::string, int>& judged(const std::string& query_id) const;

    bool has_query(const std::string& query_id) const {
        return grades_.count(query_id) != 0;
    }
    std::vector<std::string> query_ids() const;
    std::size_t size() const noexcept {
        return count_;
    }
    const std::map<std::string, std::map<std::string, int>>& all() const noexcept {
        return grades_;
    }

  private:
    std::map<std::string, std::map<std::string, int>> grades_;
    std::size_t count_ = 0;
};

std::vector<Document> load_collection(const std::filesystem::path& path);
std::vector<Query> load_queries(const std::filesystem::path& path);
QrelSet load_qrels(const std::filesystem::path& path);

void write_collection(const std::filesystem::path& path, const std::vector<Document>& docs);
void write_queries(const std::filesystem::path& path, const std::vector<Query>& queries);
void write_qrels(const std::filesystem::path& path, const QrelSet& qrels);

/// Parameters of the seeded synthetic corpus.
///
/// Every topic owns a document vocabulary block and a disjoint synonym
/// block of `vocab_size / (2 * num_topics)` terms. Synonyms never occur in
/// documents, so a query carrying them cannot be matched lexically. A
/// synonym carries the same relevance direction as its paired document term.
///
/// The generator has a hidden "intent" for every query: its features with
/// the distractor component removed. Relevance is graded against that
/// intent, so an encoder has to learn to suppress the distractor subspace.
struct SyntheticSpec {
    int num_topics = 8;
    int num_docs = 10000;
    int num_train_queries = 2000;
    int num_eval_queries = 500;
    int dim_k = 64;
    double doc_noise = 0.5;
    double query_noise = 1.0;
    double mismatch_rate = 0.6;
    int vocab_size = 4000;
    int terms_per_doc = 40;
    int terms_per_query = 6;
    std::uint64_t seed = 42;

    /// Share of a document's noise direction explained by its own terms.
    double lexical_coupling = 1.0;
    /// Norm of the per-term component living in the hidden distractor subspace.
    double distractor_noise = 3.0;
    /// Fraction of dimensions spanned by the distractor subspace.
    double distractor_fraction = 0.25;
    /// Weight, relative to the doc_noise scale, of the document's own terms'
    /// distractor directions: lexical matches then look relevant to an
    /// untrained encoder.
    double surface_weight = 0.8;

    void validate() const;
};

struct SyntheticCorpus {
    std::vector<Document> documents;
    std::vector<Query> train_queries;
    std::vector<Query> eval_queries;
    QrelSet qrels;
    DocEmbeddingMatrix doc_embeddings;
    TermEmbeddingTable term_table;
};

/// Pure function of `spec`: equal specs give bit-identical corpora.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

} // namespace ltre
