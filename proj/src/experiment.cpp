#include "ltre/experiment.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

namespace ltre {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

// One JSON object section. Every key read is remembered so leftovers can be
// reported as unknown.
class Section {
  public:
    Section(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) {
            throw ConfigError("config: '" + display() + "' must be an object");
        }
    }

    template <typename T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) {
            return;
        }
        const json& v = *it;
        bool ok = false;
        if constexpr (std::is_same_v<T, bool>) {
            ok = v.is_boolean();
        } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
            ok = v.is_number_unsigned();
        } else if constexpr (std::is_integral_v<T>) {
            ok = v.is_number_integer();
        } else if constexpr (std::is_floating_point_v<T>) {
            ok = v.is_number();
        } else if constexpr (std::is_same_v<T, std::string>) {
            ok = v.is_string();
        } else {
            ok = v.is_array();
        }
        if (!ok) {
            throw ConfigError("config: '" + prefix_ + key + "' has the wrong type");
        }
        try {
            out = v.get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config: '" + prefix_ + key + "' has the wrong type");
        }
    }

    bool has(const std::string& key) const {
        return j_.contains(key);
    }

    const json& child(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            (void)value;
            if (!seen_.count(key)) {
                throw ConfigError("config: unknown key '" + prefix_ + key + "'");
            }
        }
    }

  private:
    std::string display() const {
        return prefix_.empty() ? "<root>" : prefix_.substr(0, prefix_.size() - 1);
    }

    const json& j_;
    std::string prefix_;
    std::set<std::string> seen_;
};

void parse_corpus(const json& j, SyntheticSpec& c) {
    Section s(j, "corpus.");
    s.get("num_topics", c.num_topics);
    s.get("num_docs", c.num_docs);
    s.get("num_train_queries", c.num_train_queries);
    s.get("num_eval_queries", c.num_eval_queries);
    s.get("dim_k", c.dim_k);
    s.get("doc_noise", c.doc_noise);
    s.get("query_noise", c.query_noise);
    s.get("mismatch_rate", c.mismatch_rate);
    s.get("vocab_size", c.vocab_size);
    s.get("terms_per_doc", c.terms_per_doc);
    s.get("terms_per_query", c.terms_per_query);
    s.get("seed", c.seed);
    s.get("lexical_coupling", c.lexical_coupling);
    s.get("distractor_noise", c.distractor_noise);
    s.get("distractor_fraction", c.distractor_fraction);
    s.get("surface_weight", c.surface_weight);
    s.finish();
}

void parse_train(const json& j, TrainConfig& t) {
    Section s(j, "train.");
    std::string strategy = t.strategy.to_string();
    s.get("strategy", strategy);
    t.strategy = Strategy::parse(strategy);
    s.get("batch_size", t.batch_size);
    s.get("depth_n", t.depth_n);
    s.get("steps", t.steps);
    std::string loss = t.loss.to_string();
    s.get("loss", loss);
    t.loss = LossKind::parse(loss);
    s.get("loss_cutoff", t.loss.cutoff);
    s.get("loss_rel_threshold", t.loss.rel_threshold);
    s.get("lr", t.optimizer.lr);
    s.get("beta1", t.optimizer.beta1);
    s.get("beta2", t.optimizer.beta2);
    s.get("epsilon", t.optimizer.epsilon);
    s.get("weight_decay", t.optimizer.weight_decay);
    s.get("warmup_steps", t.optimizer.warmup_steps);
    s.get("total_steps", t.optimizer.total_steps);
    s.get("dropout_p", t.dropout_p);
    s.get("use_layer_norm", t.use_layer_norm);
    s.get("init_noise", t.init_noise);
    s.get("rel_threshold", t.rel_threshold);
    s.get("diagnostics_depth", t.diagnostics.depth);
    s.get("async_refresh_every", t.diagnostics.async_refresh_every);
    s.get("bm25_k1", t.bm25.k1);
    s.get("bm25_b", t.bm25.b);
    s.get("seed", t.seed);
    s.get("threads", t.threads);
    s.finish();
}

void parse_index(const json& j, IndexChoice& c) {
    Section s(j, "index.");
    std::string type = c.kind == IndexChoice::Kind::kFlat ? "flat" : "pq";
    s.get("type", type);
    if (type == "flat") {
        c.kind = IndexChoice::Kind::kFlat;
    } else if (type == "pq") {
        c.kind = IndexChoice::Kind::kPq;
    } else {
        throw ConfigError("config: 'index.type' must be \"flat\" or \"pq\"");
    }
    s.get("m", c.m);
    s.get("bits", c.bits);
    s.get("opq_iters", c.opq_iters);
    s.get("kmeans_iters", c.kmeans_iters);
    s.get("seed", c.seed);
    s.finish();
}

void parse_eval(const json& j, EvalOptions& e) {
    Section s(j, "eval.");
    s.get("depth", e.depth);
    s.get("rel_threshold", e.metrics.rel_threshold);
    s.get("mrr_cutoff", e.metrics.mrr_cutoff);
    s.get("recall_cutoffs", e.metrics.recall_cutoffs);
    s.get("ndcg_cutoff", e.metrics.ndcg_cutoff);
    s.finish();
}

void parse_diagnose(const json& j, DiagnoseOptions& d) {
    Section s(j, "diagnose.");
    if (s.has("strategies")) {
        std::vector<std::string> names;
        s.get("strategies", names);
        d.strategies.clear();
        for (const auto& n : names) {
            d.strategies.push_back(Strategy::parse(n));
        }
    }
    s.get("grid_indexes", d.grid_indexes);
    s.get("grid_seeds", d.grid_seeds);
    s.finish();
}

void require_file(const std::filesystem::path& path, const std::string& what) {
    if (!std::filesystem::exists(path)) {
        throw Error("missing " + what + ": '" + path.string() + "'");
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out << text;
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw Error("cannot create directory '" + dir.string() + "': " + ec.message());
    }
}

TrainingResources resources_for(const CorpusBundle& bundle, const RetrievalIndex& index) {
    TrainingResources r;
    r.docs = &bundle.doc_embeddings;
    r.terms = &bundle.term_table;
    r.queries = &bundle.train_queries;
    r.qrels = &bundle.qrels;
    r.index = &index;
    r.lexical = &bundle.lexical;
    return r;
}

} // namespace

IndexChoice IndexChoice::parse(const std::string& text) {
    IndexChoice c;
    if (text == "flat") {
        return c;
    }
    if (text.rfind("pq", 0) == 0 && text.size() > 2) {
        std::size_t m = 0;
        auto [ptr, ec] = std::from_chars(text.data() + 2, text.data() + text.size(), m);
        if (ec == std::errc{} && ptr == text.data() + text.size() && m >= 1) {
            c.kind = Kind::kPq;
            c.m = m;
            return c;
        }
    }
    throw ConfigError("index: expected \"flat\" or \"pq<m>\", got '" + text + "'");
}

std::string IndexChoice::name() const {
    return kind == Kind::kFlat ? "flat" : "pq" + std::to_string(m);
}

PQTrainOptions IndexChoice::pq_options() const {
    PQTrainOptions o;
    o.m = m;
    o.bits = bits;
    o.opq_iters = opq_iters;
    o.kmeans_iters = kmeans_iters;
    o.seed = seed;
    return o;
}

void ExperimentConfig::validate() const {
    corpus.validate();
    train.validate();
    if (index.kind == IndexChoice::Kind::kPq) {
        if (index.m < 1 || static_cast<int>(index.m) > corpus.dim_k || corpus.dim_k % static_cast<int>(index.m) != 0) {
            throw ConfigError("index.m must divide corpus.dim_k");
        }
        if (index.bits < 1 || index.bits > 8) {
            throw ConfigError("index.bits must lie in [1, 8]");
        }
        if (index.opq_iters < 0 || index.kmeans_iters < 1) {
            throw ConfigError("index.opq_iters must be >= 0 and index.kmeans_iters >= 1");
        }
    }
    if (eval.depth < 1) {
        throw ConfigError("eval.depth must be >= 1");
    }
    if (eval.metrics.mrr_cutoff < 1 || eval.metrics.ndcg_cutoff < 1 || eval.metrics.rel_threshold < 1) {
        throw ConfigError("eval cutoffs and rel_threshold must be >= 1");
    }
    for (const auto& name : diagnose.grid_indexes) {
        IndexChoice::parse(name);
    }
    if (diagnose.grid_seeds.empty()) {
        throw ConfigError("diagnose.grid_seeds must not be empty");
    }
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    ExperimentConfig config;
    Section s(root, "");
    if (s.has("corpus")) {
        parse_corpus(s.child("corpus"), config.corpus);
    }
    if (s.has("train")) {
        parse_train(s.child("train"), config.train);
    }
    if (s.has("index")) {
        parse_index(s.child("index"), config.index);
    }
    if (s.has("eval")) {
        parse_eval(s.child("eval"), config.eval);
    }
    if (s.has("diagnose")) {
        parse_diagnose(s.child("diagnose"), config.diagnose);
    }
    std::string out_dir = config.out_dir.string();
    s.get("out_dir", out_dir);
    config.out_dir = out_dir;
    s.finish();
    config.validate();
    return config;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config '" + path.string() + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_experiment_config(buffer.str());
}

std::string experiment_config_json(const ExperimentConfig& config) {
    const auto& c = config.corpus;
    const auto& t = config.train;
    ordered_json j;
    j["corpus"] = {{"num_topics", c.num_topics},
                   {"num_docs", c.num_docs},
                   {"num_train_queries", c.num_train_queries},
                   {"num_eval_queries", c.num_eval_queries},
                   {"dim_k", c.dim_k},
                   {"doc_noise", c.doc_noise},
                   {"query_noise", c.query_noise},
                   {"mismatch_rate", c.mismatch_rate},
                   {"vocab_size", c.vocab_size},
                   {"terms_per_doc", c.terms_per_doc},
                   {"terms_per_query", c.terms_per_query},
                   {"seed", c.seed},
                   {"lexical_coupling", c.lexical_coupling},
                   {"distractor_noise", c.distractor_noise},
                   {"distractor_fraction", c.distractor_fraction},
                   {"surface_weight", c.surface_weight}};
    j["train"] = {{"strategy", t.strategy.to_string()},
                  {"batch_size", t.batch_size},
                  {"depth_n", t.depth_n},
                  {"steps", t.steps},
                  {"loss", t.loss.to_string()},
                  {"loss_cutoff", t.loss.cutoff},
                  {"loss_rel_threshold", t.loss.rel_threshold},
                  {"lr", t.optimizer.lr},
                  {"beta1", t.optimizer.beta1},
                  {"beta2", t.optimizer.beta2},
                  {"epsilon", t.optimizer.epsilon},
                  {"weight_decay", t.optimizer.weight_decay},
                  {"warmup_steps", t.optimizer.warmup_steps},
                  {"total_steps", t.optimizer.total_steps},
                  {"dropout_p", t.dropout_p},
                  {"use_layer_norm", t.use_layer_norm},
                  {"init_noise", t.init_noise},
                  {"rel_threshold", t.rel_threshold},
                  {"diagnostics_depth", t.diagnostics.depth},
                  {"async_refresh_every", t.diagnostics.async_refresh_every},
                  {"bm25_k1", t.bm25.k1},
                  {"bm25_b", t.bm25.b},
                  {"seed", t.seed},
                  {"threads", t.threads}};
    const auto& x = config.index;
    j["index"] = {{"type", x.kind == IndexChoice::Kind::kFlat ? "flat" : "pq"},
                  {"m", x.m},
                  {"bits", x.bits},
                  {"opq_iters", x.opq_iters},
                  {"kmeans_iters", x.kmeans_iters},
                  {"seed", x.seed}};
    const auto& e = config.eval;
    j["eval"] = {{"depth", e.depth},
                 {"rel_threshold", e.metrics.rel_threshold},
                 {"mrr_cutoff", e.metrics.mrr_cutoff},
                 {"recall_cutoffs", e.metrics.recall_cutoffs},
                 {"ndcg_cutoff", e.metrics.ndcg_cutoff}};
    std::vector<std::string> strategies;
    for (const auto& s : config.diagnose.strategies) {
        strategies.push_back(s.to_string());
    }
    j["diagnose"] = {{"strategies", strategies},
                     {"grid_indexes", config.diagnose.grid_indexes},
                     {"grid_seeds", config.diagnose.grid_seeds}};
    j["out_dir"] = config.out_dir.string();
    return j.dump(2) + "\n";
}

std::string artifacts::index_file(const IndexChoice& choice) {
    return choice.kind == IndexChoice::Kind::kFlat ? "index-flat.ltre" : "index-" + choice.name() + ".ltrq";
}

void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
    ensure_dir(dir);
    write_collection(dir / artifacts::kCollection, corpus.documents);
    write_queries(dir / artifacts::kTrainQueries, corpus.train_queries);
    write_queries(dir / artifacts::kEvalQueries, corpus.eval_queries);
    write_qrels(dir / artifacts::kQrels, corpus.qrels);
    save_embeddings(corpus.doc_embeddings.values(), dir / artifacts::kDocEmbeddings);
    save_embeddings(corpus.term_table.vectors(), dir / artifacts::kTermEmbeddings);
    std::string terms;
    for (const auto& t : corpus.term_table.terms()) {
        terms += t + '\n';
    }
    write_text(dir / artifacts::kTerms, terms);
}

CorpusBundle load_corpus(const std::filesystem::path& dir) {
    for (const char* name : {artifacts::kCollection, artifacts::kTrainQueries, artifacts::kEvalQueries,
                             artifacts::kQrels, artifacts::kDocEmbeddings, artifacts::kTermEmbeddings,
                             artifacts::kTerms}) {
        require_file(dir / name, "corpus artifact (run `ltre gen` first)");
    }
    CorpusBundle b;
    b.documents = load_collection(dir / artifacts::kCollection);
    b.train_queries = load_queries(dir / artifacts::kTrainQueries);
    b.eval_queries = load_queries(dir / artifacts::kEvalQueries);
    b.qrels = load_qrels(dir / artifacts::kQrels);
    auto doc_values = load_embeddings(dir / artifacts::kDocEmbeddings);
    if (doc_values.rows() != b.documents.size()) {
        throw ValidationError("document embeddings have " + std::to_string(doc_values.rows()) +
                              " rows but the collection has " + std::to_string(b.documents.size()) + " documents");
    }
    std::vector<std::string> ids;
    ids.reserve(b.documents.size());
    for (const auto& d : b.documents) {
        ids.push_back(d.doc_id);
    }
    b.doc_embeddings = DocEmbeddingMatrix(std::move(doc_values), std::move(ids));

    std::ifstream in(dir / artifacts::kTerms);
    std::vector<std::string> terms;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            terms.push_back(line);
        }
    }
    b.term_table = TermEmbeddingTable(load_embeddings(dir / artifacts::kTermEmbeddings), std::move(terms));
    b.lexical = build_lexical_index(b.documents);
    return b;
}

std::unique_ptr<RetrievalIndex> build_index(const IndexChoice& choice, const DocEmbeddingMatrix& docs) {
    if (choice.kind == IndexChoice::Kind::kFlat) {
        return std::make_unique<FlatIndex>(docs);
    }
    return std::make_unique<PQIndex>(PQIndex::build(docs.values(), choice.pq_options()));
}

void save_index(const IndexChoice& choice, const RetrievalIndex& index, const DocEmbeddingMatrix& docs,
                const std::filesystem::path& path) {
    if (choice.kind == IndexChoice::Kind::kFlat) {
        save_embeddings(docs.values(), path);
        return;
    }
    const auto* pq = dynamic_cast<const PQIndex*>(&index);
    if (!pq) {
        throw ContractError("save_index: index is not a PQ index");
    }
    save_pq_index(*pq, path);
}

std::unique_ptr<RetrievalIndex> load_index(const IndexChoice& choice, const std::filesystem::path& path) {
    require_file(path, "index file (run `ltre index` first)");
    if (choice.kind == IndexChoice::Kind::kFlat) {
        return std::make_unique<FlatIndex>(load_embeddings(path));
    }
    auto pq = std::make_unique<PQIndex>(load_pq_index(path));
    if (pq->codebooks().m != choice.m) {
        throw ConfigError("index file '" + path.string() + "' has m=" + std::to_string(pq->codebooks().m) +
                          ", config asks for m=" + std::to_string(choice.m));
    }
    return pq;
}

void cmd_gen(const ExperimentConfig& config) {
    auto corpus = generate_synthetic(config.corpus);
    write_corpus(corpus, config.out_dir);
    write_text(config.out_dir / "config.json", experiment_config_json(config));
    spdlog::info("gen: {} documents, {} train / {} eval queries, {} judgments", corpus.documents.size(),
                 corpus.train_queries.size(), corpus.eval_queries.size(), corpus.qrels.size());
}

void cmd_index(const ExperimentConfig& config) {
    auto bundle = load_corpus(config.out_dir);
    auto index = build_index(config.index, bundle.doc_embeddings);
    save_index(config.index, *index, bundle.doc_embeddings, config.out_dir / artifacts::index_file(config.index));
    spdlog::info("index: {} over {} documents, {} payload bytes", index->name(), index->size(),
                 index->payload_bytes());
}

void cmd_train(const ExperimentConfig& config) {
    auto bundle = load_corpus(config.out_dir);
    auto index = load_index(config.index, config.out_dir / artifacts::index_file(config.index));
    const auto before = bundle.doc_embeddings.fingerprint();
    auto result = train_loop(config.train, resources_for(bundle, *index));
    if (bundle.doc_embeddings.fingerprint() != before) {
        throw Error("document embeddings changed during training");
    }
    save_checkpoint(result.params, config.out_dir / artifacts::kCheckpoint);
    result.log.write_csv(config.out_dir / artifacts::kTrainingLog);
    spdlog::info("train: {} steps with {} on {}", result.log.records.size(), config.train.strategy.to_string(),
                 index->name());
}

MetricsReport cmd_eval(const ExperimentConfig& config) {
    auto bundle = load_corpus(config.out_dir);
    require_file(config.out_dir / artifacts::kCheckpoint, "checkpoint (run `ltre train` first)");
    auto params = load_checkpoint(config.out_dir / artifacts::kCheckpoint);
    auto index = load_index(config.index, config.out_dir / artifacts::index_file(config.index));
    auto run = retrieve(params, bundle.eval_queries, bundle.term_table, *index, bundle.doc_embeddings,
                        config.eval.depth, config.train.threads);
    write_run(config.out_dir / artifacts::kRun, run, "ltre-" + index->name());
    auto report = evaluate_run(run, bundle.qrels, config.eval.metrics);
    write_text(config.out_dir / artifacts::kMetricsJson, report.to_json() + "\n");
    write_text(config.out_dir / artifacts::kMetricsCsv, report.csv_header() + "\n" + report.csv_row() + "\n");
    return report;
}

void cmd_diagnose(const ExperimentConfig& config) {
    auto bundle = load_corpus(config.out_dir);

    // Per-step training diagnostics, one block of rows per strategy.
    auto index = build_index(config.index, bundle.doc_embeddings);
    std::ostringstream diag;
    diag << std::setprecision(10);
    diag << "strategy,step,batch_mrr10,batch_recall200,overlap_lexical200,overlap_async200\n";
    for (const auto& strategy : config.diagnose.strategies) {
        auto cfg = config.train;
        cfg.strategy = strategy;
        auto result = train_loop(cfg, resources_for(bundle, *index));
        for (const auto& r : result.log.records) {
            diag << strategy.to_string() << ',' << r.step << ',' << r.batch_mrr10 << ',' << r.batch_recall200 << ','
                 << r.overlap_lexical200 << ',' << r.overlap_async200 << '\n';
        }
        spdlog::info("diagnose: {} done", strategy.to_string());
    }
    write_text(config.out_dir / artifacts::kStepDiagnostics, diag.str());

    // Train-index x eval-index grid of mean held-out NDCG@10.
    std::vector<IndexChoice> choices;
    std::vector<std::unique_ptr<RetrievalIndex>> indexes;
    for (const auto& name : config.diagnose.grid_indexes) {
        auto c = config.index;
        auto parsed = IndexChoice::parse(name);
        c.kind = parsed.kind;
        c.m = parsed.m;
        choices.push_back(c);
        indexes.push_back(build_index(c, bundle.doc_embeddings));
    }
    const std::size_t g = choices.size();
    std::vector<std::vector<double>> grid(g, std::vector<double>(g, 0.0));
    auto metrics = config.eval.metrics;
    for (std::size_t tr = 0; tr < g; ++tr) {
        for (auto seed : config.diagnose.grid_seeds) {
            auto cfg = config.train;
            cfg.seed = seed;
            auto result = train_loop(cfg, resources_for(bundle, *indexes[tr]));
            for (std::size_t ev = 0; ev < g; ++ev) {
                auto run = retrieve(result.params, bundle.eval_queries, bundle.term_table, *indexes[ev],
                                    bundle.doc_embeddings, static_cast<std::size_t>(metrics.ndcg_cutoff), cfg.threads);
                auto report = evaluate_run(run, bundle.qrels, metrics);
                grid[tr][ev] += report.ndcg_at_10 / static_cast<double>(config.diagnose.grid_seeds.size());
            }
        }
        spdlog::info("diagnose: grid row {} done", choices[tr].name());
    }
    std::ostringstream table;
    table << std::setprecision(6) << std::fixed << "train\\eval";
    for (const auto& c : choices) {
        table << ',' << c.name();
    }
    table << '\n';
    for (std::size_t tr = 0; tr < g; ++tr) {
        table << choices[tr].name();
        for (std::size_t ev = 0; ev < g; ++ev) {
            table << ',' << grid[tr][ev];
        }
        table << '\n';
    }
    write_text(config.out_dir / artifacts::kIndexGrid, table.str());
}

} // namespace ltre
