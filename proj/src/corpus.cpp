#include "ltre/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

namespace ltre {

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open '" + path.string() + "' for reading");
    }
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    return out;
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
}

bool is_blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

/// Parses `id<TAB>text` lines, shared by collections and query files.
template <typename Item>
std::vector<Item> load_tsv(const std::filesystem::path& path, const char* what) {
    auto in = open_input(path);
    std::vector<Item> items;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (is_blank(line)) {
            continue;
        }
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError(std::string("malformed ") + what + " line in '" + path.string() +
                                     "': expected id<TAB>text",
                             lineno);
        }
        std::string id = line.substr(0, tab);
        if (id.empty()) {
            throw ValidationError(std::string("empty ") + what + " id at line " +
                                  std::to_string(lineno));
        }
        if (!seen.insert(id).second) {
            throw ValidationError(std::string("duplicate ") + what + " id '" + id +
                                  "' at line " + std::to_string(lineno));
        }
        items.push_back(Item{std::move(id), tokenize(std::string_view(line).substr(tab + 1))});
    }
    return items;
}

template <typename Item>
void write_tsv(const std::filesystem::path& path, const std::vector<Item>& items,
               const std::string Item::*id) {
    auto out = open_output(path);
    for (const auto& item : items) {
        out << item.*id << '\t';
        for (std::size_t i = 0; i < item.tokens.size(); ++i) {
            if (i) {
                out << ' ';
            }
            out << item.tokens[i];
        }
        out << '\n';
    }
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

void normalize_in_place(std::vector<double>& v) {
    double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm > 0.0) {
        for (auto& x : v) {
            x /= norm;
        }
    }
}

std::vector<double> gaussian_vector(std::mt19937_64& rng, std::size_t dim, double stddev) {
    std::normal_distribution<double> normal(0.0, stddev);
    std::vector<double> v(dim);
    for (auto& x : v) {
        x = normal(rng);
    }
    return v;
}

/// Orthonormal basis from Gram-Schmidt over Gaussian columns.
std::vector<std::vector<double>> random_orthonormal_basis(std::mt19937_64& rng, std::size_t dim) {
    std::vector<std::vector<double>> basis;
    while (basis.size() < dim) {
        auto v = gaussian_vector(rng, dim, 1.0);
        for (const auto& b : basis) {
            double p = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
            for (std::size_t i = 0; i < dim; ++i) {
                v[i] -= p * b[i];
            }
        }
        double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (norm < 1e-8) {
            continue;
        }
        for (auto& x : v) {
            x /= norm;
        }
        basis.push_back(std::move(v));
    }
    return basis;
}

} // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

void QrelSet::set(const std::string& query_id, const std::string& doc_id, int grade) {
    if (grade < 0) {
        throw ValidationError("negative grade " + std::to_string(grade) + " for (" + query_id +
                              ", " + doc_id + ")");
    }
    if (query_id.empty() || doc_id.empty()) {
        throw ValidationError("qrel ids must be non-empty");
    }
    auto qit = grades_.find(query_id);
    if (grade == 0) {
        if (qit != grades_.end() && qit->second.erase(doc_id)) {
            --count_;
            if (qit->second.empty()) {
                grades_.erase(qit);
            }
        }
        return;
    }
    auto& docs = grades_[query_id];
    auto [it, inserted] = docs.insert_or_assign(doc_id, grade);
    (void)it;
    if (inserted) {
        ++count_;
    }
}

int QrelSet::grade(const std::string& query_id, const std::string& doc_id) const {
    auto qit = grades_.find(query_id);
    if (qit == grades_.end()) {
        return 0;
    }
    auto dit = qit->second.find(doc_id);
    return dit == qit->second.end() ? 0 : dit->second;
}

const std::map<std::string, int>& QrelSet::judged(const std::string& query_id) const {
    static const std::map<std::string, int> kEmpty;
    auto qit = grades_.find(query_id);
    return qit == grades_.end() ? kEmpty : qit->second;
}

std::vector<std::string> QrelSet::query_ids() const {
    std::vector<std::string> ids;
    ids.reserve(grades_.size());
    for (const auto& [q, _] : grades_) {
        ids.push_back(q);
    }
    return ids;
}

std::vector<Document> load_collection(const std::filesystem::path& path) {
    return load_tsv<Document>(path, "document");
}

std::vector<Query> load_queries(const std::filesystem::path& path) {
    return load_tsv<Query>(path, "query");
}

QrelSet load_qrels(const std::filesystem::path& path) {
    auto in = open_input(path);
    QrelSet qrels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (is_blank(line)) {
            continue;
        }
        std::istringstream fields(line);
        std::string qid, iter, did, grade_text, extra;
        if (!(fields >> qid >> iter >> did >> grade_text) || (fields >> extra)) {
            throw ParseError("qrels line must have 4 fields: query_id 0 doc_id grade", lineno);
        }
        int grade = 0;
        auto [ptr, ec] = std::from_chars(grade_text.data(), grade_text.data() + grade_text.size(), grade);
        if (ec != std::errc() || ptr != grade_text.data() + grade_text.size()) {
            throw ParseError("non-integer grade '" + grade_text + "'", lineno);
        }
        if (grade < 0) {
            throw ValidationError("negative grade " + grade_text + " at line " + std::to_string(lineno));
        }
        qrels.set(qid, did, grade);
    }
    return qrels;
}

void write_collection(const std::filesystem::path& path, const std::vector<Document>& docs) {
    write_tsv(path, docs, &Document::doc_id);
}

void write_queries(const std::filesystem::path& path, const std::vector<Query>& queries) {
    write_tsv(path, queries, &Query::query_id);
}

void write_qrels(const std::filesystem::path& path, const QrelSet& qrels) {
    auto out = open_output(path);
    for (const auto& [qid, docs] : qrels.all()) {
        for (const auto& [did, grade] : docs) {
            out << qid << " 0 " << did << ' ' << grade << '\n';
        }
    }
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

void SyntheticSpec::validate() const {
    auto fail = [](const std::string& msg) { throw ValidationError("synthetic spec: " + msg); };
    if (num_topics < 1) {
        fail("num_topics must be >= 1");
    }
    if (num_docs < num_topics) {
        fail("num_topics must not exceed num_docs");
    }
    if (num_train_queries < 0 || num_eval_queries < 0) {
        fail("query counts must be >= 0");
    }
    if (dim_k < 2) {
        fail("dim_k must be >= 2");
    }
    if (!(doc_noise >= 0.0) || !(query_noise >= 0.0) || !(distractor_noise >= 0.0) || !(surface_weight >= 0.0)) {
        fail("noise levels and surface_weight must be >= 0");
    }
    if (!(mismatch_rate >= 0.0 && mismatch_rate <= 1.0)) {
        fail("mismatch_rate must lie in [0, 1]");
    }
    if (vocab_size < 2 * num_topics) {
        fail("vocab_size must be >= 2 * num_topics");
    }
    if (terms_per_doc < 1 || terms_per_query < 1) {
        fail("terms_per_doc and terms_per_query must be >= 1");
    }
    if (!(lexical_coupling >= 0.0 && lexical_coupling <= 1.0)) {
        fail("lexical_coupling must lie in [0, 1]");
    }
    if (!(distractor_fraction >= 0.0 && distractor_fraction <= 1.0)) {
        fail("distractor_fraction must lie in [0, 1]");
    }
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const auto dim = static_cast<std::size_t>(spec.dim_k);
    const auto num_topics = static_cast<std::size_t>(spec.num_topics);
    const auto block = static_cast<std::size_t>(spec.vocab_size) / (2 * num_topics);
    const auto vocab = static_cast<std::size_t>(spec.vocab_size);

    // Topic centres.
    std::vector<std::vector<double>> topics;
    {
        auto rng = make_rng(spec.seed, {1});
        for (std::size_t t = 0; t < num_topics; ++t) {
            auto u = gaussian_vector(rng, dim, 1.0);
            normalize_in_place(u);
            topics.push_back(std::move(u));
        }
    }

    // Hidden distractor subspace.
    std::vector<std::vector<double>> distractor_basis;
    {
        auto rng = make_rng(spec.seed, {2});
        auto basis = random_orthonormal_basis(rng, dim);
        auto dd = static_cast<std::size_t>(std::lround(spec.distractor_fraction * static_cast<double>(dim)));
        basis.resize(dd);
        distractor_basis = std::move(basis);
    }

    // Term vocabulary: topic t owns [2tB, 2tB+B) for documents and
    // [2tB+B, 2tB+2B) for synonyms. Leftover rows belong to no topic.
    std::vector<std::string> terms(vocab);
    for (std::size_t w = 0; w < vocab; ++w) {
        terms[w] = "w" + std::to_string(w);
    }
    auto topic_of_term = [&](std::size_t w) -> std::optional<std::size_t> {
        if (block == 0 || w >= 2 * block * num_topics) {
            return std::nullopt;
        }
        return w / (2 * block);
    };

    // Per-term relevance-bearing direction and distractor direction.
    MatrixD term_signal(vocab, dim);
    MatrixD term_distractor(vocab, dim);
    MatrixD term_vectors(vocab, dim);
    {
        auto rng = make_rng(spec.seed, {3});
        const double signal_sd = 1.0 / std::sqrt(static_cast<double>(dim));
        const double distractor_sd =
                distractor_basis.empty() ? 0.0 : 1.0 / std::sqrt(static_cast<double>(distractor_basis.size()));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t w = 0; w < vocab; ++w) {
            for (std::size_t i = 0; i < dim; ++i) {
                term_signal(w, i) = normal(rng) * signal_sd;
            }
            for (const auto& b : distractor_basis) {
                double z = normal(rng) * distractor_sd;
                for (std::size_t i = 0; i < dim; ++i) {
                    term_distractor(w, i) += z * b[i];
                }
            }
        }
        for (std::size_t w = 0; w < vocab; ++w) {
            auto topic = topic_of_term(w);
            // A synonym means what its paired document term means; only the
            // surface direction differs.
            if (topic && w - 2 * block * *topic >= block) {
                for (std::size_t i = 0; i < dim; ++i) {
                    term_signal(w, i) = term_signal(w - block, i);
                }
            }
            for (std::size_t i = 0; i < dim; ++i) {
                double centre = topic ? topics[*topic][i] : 0.0;
                term_vectors(w, i) = centre + spec.query_noise * term_signal(w, i) +
                                     spec.distractor_noise * term_distractor(w, i);
            }
        }
        round_to_float(term_vectors.values());
    }

    SyntheticCorpus corpus;

    // Documents.
    const auto num_docs = static_cast<std::size_t>(spec.num_docs);
    MatrixD doc_values(num_docs, dim);
    std::vector<double> zipf_weights(block);
    for (std::size_t r = 0; r < block; ++r) {
        zipf_weights[r] = 1.0 / static_cast<double>(r + 1);
    }
    std::vector<std::set<std::size_t>> attested(num_topics);
    std::vector<std::string> doc_ids(num_docs);
    corpus.documents.reserve(num_docs);
    const double coupled = std::sqrt(spec.lexical_coupling);
    const double fresh = std::sqrt(1.0 - spec.lexical_coupling);
    for (std::size_t d = 0; d < num_docs; ++d) {
        auto rng = make_rng(spec.seed, {4, d});
        const std::size_t topic = d % num_topics;
        Document doc;
        doc.doc_id = "d" + std::to_string(d);
        std::set<std::size_t> distinct;
        if (block > 0) {
            std::discrete_distribution<std::size_t> zipf(zipf_weights.begin(), zipf_weights.end());
            for (int j = 0; j < spec.terms_per_doc; ++j) {
                std::size_t w = 2 * block * topic + zipf(rng);
                doc.tokens.push_back(terms[w]);
                distinct.insert(w);
                attested[topic].insert(w);
            }
        }
        std::vector<double> lexical(dim, 0.0);
        for (auto w : distinct) {
            for (std::size_t i = 0; i < dim; ++i) {
                lexical[i] += term_signal(w, i);
            }
        }
        normalize_in_place(lexical);
        // Surface form: the distractor directions of the document's own
        // terms, so exact term matches score high without being relevant.
        std::vector<double> surface(dim, 0.0);
        for (auto w : distinct) {
            for (std::size_t i = 0; i < dim; ++i) {
                surface[i] += term_distractor(w, i);
            }
        }
        normalize_in_place(surface);
        auto noise = gaussian_vector(rng, dim, 1.0 / std::sqrt(static_cast<double>(dim)));
        std::vector<double> e(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            e[i] = topics[topic][i] +
                   spec.doc_noise * (coupled * lexical[i] + fresh * noise[i] + spec.surface_weight * surface[i]);
        }
        normalize_in_place(e);
        std::copy(e.begin(), e.end(), doc_values.row(d).begin());
        doc_ids[d] = doc.doc_id;
        corpus.documents.push_back(std::move(doc));
    }
    round_to_float(doc_values.values());
    corpus.doc_embeddings = DocEmbeddingMatrix(std::move(doc_values), std::move(doc_ids));

    std::vector<std::vector<std::size_t>> topic_docs(num_topics);
    for (std::size_t d = 0; d < num_docs; ++d) {
        topic_docs[d % num_topics].push_back(d);
    }
    std::vector<std::vector<std::size_t>> attested_list(num_topics);
    for (std::size_t t = 0; t < num_topics; ++t) {
        attested_list[t].assign(attested[t].begin(), attested[t].end());
    }

    auto make_queries = [&](int count, std::uint64_t stream, const std::string& prefix) {
        std::vector<Query> queries;
        for (int j = 0; j < count; ++j) {
            auto rng = make_rng(spec.seed, {stream, static_cast<std::uint64_t>(j)});
            const std::size_t topic = static_cast<std::size_t>(j) % num_topics;
            Query q;
            q.query_id = prefix + std::to_string(j);
            std::uniform_real_distribution<double> coin(0.0, 1.0);
            std::vector<std::size_t> picked;
            for (int i = 0; i < spec.terms_per_query; ++i) {
                bool synonym = coin(rng) < spec.mismatch_rate;
                std::size_t w;
                if (synonym || attested_list[topic].empty()) {
                    if (block == 0) {
                        continue;
                    }
                    std::uniform_int_distribution<std::size_t> pick(0, block - 1);
                    w = 2 * block * topic + block + pick(rng);
                } else {
                    std::uniform_int_distribution<std::size_t> pick(0, attested_list[topic].size() - 1);
                    w = attested_list[topic][pick(rng)];
                }
                q.tokens.push_back(terms[w]);
                picked.push_back(w);
            }

            // Intent: topic centre plus the relevance-bearing part of the
            // query terms; the distractor part is deliberately left out.
            std::vector<double> intent(topics[topic]);
            if (!picked.empty()) {
                for (auto w : picked) {
                    for (std::size_t i = 0; i < dim; ++i) {
                        intent[i] += spec.query_noise * term_signal(w, i) / static_cast<double>(picked.size());
                    }
                }
            }
            std::size_t best = topic_docs[topic].front();
            double best_score = -std::numeric_limits<double>::infinity();
            for (auto d : topic_docs[topic]) {
                double s = dot(std::span<const double>(intent), corpus.doc_embeddings.row(d));
                if (s > best_score) {
                    best_score = s;
                    best = d;
                }
            }
            for (auto d : topic_docs[topic]) {
                corpus.qrels.set(q.query_id, corpus.documents[d].doc_id, d == best ? 2 : 1);
            }
            queries.push_back(std::move(q));
        }
        return queries;
    };
    corpus.train_queries = make_queries(spec.num_train_queries, 5, "q");
    corpus.eval_queries = make_queries(spec.num_eval_queries, 6, "e");
    corpus.term_table = TermEmbeddingTable(std::move(term_vectors), std::move(terms));
    return corpus;
}

} // namespace ltre
