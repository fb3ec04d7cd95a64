#include <doctest.h>

#include <cmath>
#include <set>

#include "ltre/trainer.hpp"
#include "test_util.hpp"

using namespace ltre;

namespace {

struct Fixture {
    SyntheticCorpus corpus;
    std::unique_ptr<FlatIndex> index;
    InvertedIndex lexical;

    explicit Fixture(int num_docs = 300, int num_train = 40) {
        SyntheticSpec spec;
        spec.num_topics = 4;
        spec.num_docs = num_docs;
        spec.num_train_queries = num_train;
        spec.num_eval_queries = 8;
        spec.dim_k = 16;
        spec.vocab_size = 400;
        spec.terms_per_doc = 20;
        spec.terms_per_query = 4;
        spec.seed = 7;
        corpus = generate_synthetic(spec);
        index = std::make_unique<FlatIndex>(corpus.doc_embeddings);
        lexical = build_lexical_index(corpus.documents);
    }

    TrainingResources resources() const {
        return {&corpus.doc_embeddings, &corpus.term_table, &corpus.train_queries, &corpus.qrels, index.get(),
                &lexical};
    }
};

TrainConfig small_config(const std::string& strategy, std::int64_t steps = 6) {
    TrainConfig cfg;
    cfg.strategy = Strategy::parse(strategy);
    cfg.batch_size = 8;
    cfg.depth_n = 20;
    cfg.steps = steps;
    cfg.diagnostics.depth = 50;
    cfg.diagnostics.async_refresh_every = 3;
    cfg.optimizer.warmup_steps = 2;
    cfg.optimizer.total_steps = 100;
    return cfg;
}

bool lists_equal(const ScoredCandidateList& a, const ScoredCandidateList& b) {
    return a.ordinals == b.ordinals && a.scores == b.scores && a.labels == b.labels && a.positions == b.positions;
}

QueryLabels labels_with(std::initializer_list<std::pair<std::uint32_t, int>> grades, std::uint32_t injection) {
    QueryLabels l;
    for (auto [o, g] : grades) {
        l.grades.emplace(o, g);
    }
    l.injection = injection;
    return l;
}

} // namespace

TEST_CASE("strategy parsing") {
    CHECK(Strategy::parse("ltre") == Strategy::ltre());
    CHECK(Strategy::parse("async") == Strategy::async_ann(500));
    CHECK(Strategy::parse("async:7") == Strategy::async_ann(7));
    CHECK(Strategy::parse("async:7").to_string() == "async:7");
    CHECK(Strategy::parse("lexical-neg") == Strategy::parse("lexical"));
    for (const char* name : {"randneg", "lexical", "inbatch", "nce"}) {
        CHECK(Strategy::parse(name).to_string() == name);
    }
    CHECK_THROWS_AS(Strategy::parse("async:0"), ConfigError);
    CHECK_THROWS_AS(Strategy::parse("async:x"), ConfigError);
    CHECK_THROWS_AS(Strategy::parse("hardneg"), ConfigError);
}

TEST_CASE("resolve_labels picks the top grade and the lowest id on ties") {
    MatrixD values(12, 2, 0.0);
    std::vector<std::string> ids;
    for (int i = 0; i < 12; ++i) {
        ids.push_back("d" + std::to_string(i));
    }
    DocEmbeddingMatrix docs(values, ids);
    QrelSet q;
    q.set("q", "d9", 2);
    q.set("q", "d2", 2);
    q.set("q", "d4", 1);
    q.set("q", "ghost", 3);
    auto l = resolve_labels(q, "q", docs);
    // "d2" < "d9" as doc ids.
    CHECK(l.injection == 2);
    CHECK(l.positives == std::vector<std::uint32_t>{2, 9});
    CHECK(l.grade(4) == 1);
    CHECK(l.grade(0) == 0);

    QrelSet empty;
    empty.set("other", "d1", 1);
    CHECK_THROWS_AS(resolve_labels(empty, "q", docs), ConfigError);
}

TEST_CASE("inject_relevant") {
    MatrixD values(10, 2, 0.0);
    for (std::size_t i = 0; i < 10; ++i) {
        values(i, 0) = static_cast<double>(i);
        values(i, 1) = 1.0;
    }
    DocEmbeddingMatrix docs(values);
    const std::vector<double> query{1.0, 0.5};
    const auto labels = labels_with({{7, 2}, {8, 1}}, 7);

    SUBCASE("no relevant candidate: deepest position is replaced") {
        ScoredCandidateList list;
        list.push_back(0, 0.5, 0, 1);
        list.push_back(1, 1.5, 0, 3);
        list.push_back(2, 2.5, 0, 2);
        inject_relevant(list, labels, query, docs);
        CHECK(list.ordinals == std::vector<std::uint32_t>{0, 7, 2});
        CHECK(list.labels == std::vector<int>{0, 2, 0});
        CHECK(list.positions == std::vector<int>{1, 3, 2});
        CHECK(list.scores[1] == 7.5);
    }
    SUBCASE("a relevant candidate leaves the list untouched") {
        ScoredCandidateList list;
        list.push_back(8, 8.5, 1, 1);
        list.push_back(1, 1.5, 0, 2);
        auto before = list;
        inject_relevant(list, labels, query, docs);
        CHECK(lists_equal(list, before));
    }
    SUBCASE("empty list is a contract violation") {
        ScoredCandidateList list;
        CHECK_THROWS_AS(inject_relevant(list, labels, query, docs), ContractError);
    }
}

TEST_CASE("candidates_from_result") {
    MatrixD values(4, 2, 0.0);
    values(0, 0) = 1.0;
    values(1, 1) = 1.0;
    values(2, 0) = 2.0;
    values(3, 1) = 3.0;
    DocEmbeddingMatrix docs(values);
    SearchResult result{{3, 3.0f}, {2, 2.0f}, {1, 1.0f}};
    auto labels = labels_with({{2, 1}}, 2);
    const std::vector<double> query{0.25, 1.0};
    auto list = candidates_from_result(result, 2, labels, query, docs);
    CHECK(list.ordinals == std::vector<std::uint32_t>{3, 2});
    CHECK(list.labels == std::vector<int>{0, 1});
    CHECK(list.positions == std::vector<int>{1, 2});
    CHECK(list.scores == std::vector<double>{3.0, 0.5});
}

TEST_CASE("training log csv round trip") {
    ltre::testing::TempDir dir;
    TrainingLog log;
    log.records.push_back({0, 0.6931471805599453, 1e-4, 0.1, 0.2, 0.3, 0.4});
    log.records.push_back({1, 1.0 / 3.0, 2e-4, 0.0, 1.0, std::nan(""), 1.0});
    log.write_csv(dir / "log.csv");
    auto back = TrainingLog::read_csv(dir / "log.csv");
    REQUIRE(back.records.size() == 2);
    CHECK(back.records[0] == log.records[0]);
    CHECK(back.records[1].loss == log.records[1].loss);
    CHECK(std::isnan(back.records[1].overlap_lexical200));

    ltre::testing::write_text(dir / "bad.csv", "step,loss\n");
    CHECK_THROWS_AS(TrainingLog::read_csv(dir / "bad.csv"), ParseError);
}

TEST_CASE("randneg on a corpus holding only relevant documents") {
    // One query, three documents, all relevant: nothing is left to sample.
    MatrixD values(3, 2, 0.0);
    values(0, 0) = 1.0;
    values(1, 1) = 1.0;
    values(2, 0) = 0.5;
    values(2, 1) = 0.5;
    DocEmbeddingMatrix docs(values, {"a", "b", "c"});
    TermEmbeddingTable terms(MatrixD(1, 2, 1.0), {"t"});
    std::vector<Query> queries{{"q", {"t"}}};
    QrelSet qrels;
    qrels.set("q", "a", 2);
    qrels.set("q", "b", 1);
    qrels.set("q", "c", 1);
    FlatIndex index(docs);
    TrainConfig cfg;
    cfg.strategy = Strategy::parse("randneg");
    cfg.batch_size = 1;
    cfg.depth_n = 5;
    cfg.steps = 1;
    std::vector<ScoredCandidateList> seen;
    train_loop(cfg, {&docs, &terms, &queries, &qrels, &index, nullptr}, std::nullopt,
               [&](const StepView& v) { seen.assign(v.lists.begin(), v.lists.end()); });
    REQUIRE(seen.size() == 1);
    std::set<std::uint32_t> got(seen[0].ordinals.begin(), seen[0].ordinals.end());
    CHECK(got == std::set<std::uint32_t>{0, 1, 2});
    CHECK(seen[0].size() == 3);
}

TEST_CASE("in-batch negatives are the other queries' positives") {
    MatrixD values(2, 2, 0.0);
    values(0, 0) = 1.0;
    values(1, 1) = 1.0;
    DocEmbeddingMatrix docs(values, {"a", "b"});
    MatrixD tv(2, 2, 0.0);
    tv(0, 0) = 1.0;
    tv(1, 1) = 1.0;
    TermEmbeddingTable terms(tv, {"x", "y"});
    std::vector<Query> queries{{"q1", {"x"}}, {"q2", {"y"}}};
    QrelSet qrels;
    qrels.set("q1", "a", 1);
    qrels.set("q2", "b", 1);
    FlatIndex index(docs);
    for (const char* name : {"inbatch", "nce"}) {
        TrainConfig cfg;
        cfg.strategy = Strategy::parse(name);
        cfg.batch_size = 2;
        cfg.steps = 1;
        std::vector<ScoredCandidateList> seen;
        std::vector<std::size_t> batch;
        train_loop(cfg, {&docs, &terms, &queries, &qrels, &index, nullptr}, std::nullopt, [&](const StepView& v) {
            seen.assign(v.lists.begin(), v.lists.end());
            batch.assign(v.batch.begin(), v.batch.end());
        });
        REQUIRE(seen.size() == 2);
        for (std::size_t i = 0; i < 2; ++i) {
            const std::uint32_t own = static_cast<std::uint32_t>(batch[i]);
            std::set<std::uint32_t> got(seen[i].ordinals.begin(), seen[i].ordinals.end());
            CHECK(got == std::set<std::uint32_t>{own, 1 - own});
        }
    }
}

TEST_CASE("async with refresh every step matches real-time lists without dropout") {
    Fixture fx;
    auto collect = [&](const std::string& strategy) {
        auto cfg = small_config(strategy, 5);
        cfg.dropout_p = 0.0;
        std::vector<std::vector<ScoredCandidateList>> all;
        train_loop(cfg, fx.resources(), std::nullopt,
                   [&](const StepView& v) { all.emplace_back(v.lists.begin(), v.lists.end()); });
        return all;
    };
    auto a = collect("ltre");
    auto b = collect("async:1");
    REQUIRE(a.size() == b.size());
    for (std::size_t s = 0; s < a.size(); ++s) {
        REQUIRE(a[s].size() == b[s].size());
        for (std::size_t i = 0; i < a[s].size(); ++i) {
            CHECK(lists_equal(a[s][i], b[s][i]));
        }
    }
}

TEST_CASE("zero steps returns the initial encoder") {
    Fixture fx;
    auto cfg = small_config("ltre", 0);
    auto result = train_loop(cfg, fx.resources());
    CHECK(result.log.records.empty());
    CHECK(result.params == initial_params(cfg, fx.corpus.doc_embeddings.dim()));
}

TEST_CASE("training is deterministic and thread-count independent") {
    Fixture fx;
    for (const char* strategy : {"ltre", "randneg", "lexical", "async:2"}) {
        CAPTURE(strategy);
        auto cfg = small_config(strategy);
        auto a = train_loop(cfg, fx.resources());
        auto b = train_loop(cfg, fx.resources());
        cfg.threads = 8;
        auto c = train_loop(cfg, fx.resources());
        CHECK(a.log.records.size() == static_cast<std::size_t>(cfg.steps));
        CHECK(a.params == b.params);
        CHECK(a.params == c.params);
        CHECK(a.log.to_csv() == b.log.to_csv());
        CHECK(a.log.to_csv() == c.log.to_csv());
    }
}

TEST_CASE("different seeds give different runs") {
    Fixture fx;
    auto cfg = small_config("ltre");
    auto a = train_loop(cfg, fx.resources());
    cfg.seed = 43;
    auto b = train_loop(cfg, fx.resources());
    CHECK_FALSE(a.params == b.params);
}

TEST_CASE("document embeddings are never modified") {
    Fixture fx;
    const auto before = fx.corpus.doc_embeddings.fingerprint();
    const auto index_before = fx.index->search(fx.corpus.doc_embeddings.row(0), 10);
    auto cfg = small_config("ltre", 10);
    train_loop(cfg, fx.resources());
    CHECK(fx.corpus.doc_embeddings.fingerprint() == before);
    CHECK(fx.index->search(fx.corpus.doc_embeddings.row(0), 10) == index_before);
}

TEST_CASE("property: every training list is valid and holds a relevant candidate") {
    Fixture fx;
    for (const char* strategy : {"ltre", "randneg", "lexical", "inbatch", "nce", "async:3"}) {
        CAPTURE(strategy);
        auto cfg = small_config(strategy, 8);
        std::size_t checked = 0;
        train_loop(cfg, fx.resources(), std::nullopt, [&](const StepView& v) {
            CHECK(v.lists.size() == cfg.batch_size);
            for (std::size_t i = 0; i < v.lists.size(); ++i) {
                const auto& l = v.lists[i];
                CHECK_NOTHROW(l.validate());
                CHECK(std::any_of(l.labels.begin(), l.labels.end(), [](int g) { return g >= 1; }));
                CHECK(l.size() <= cfg.depth_n);
                std::set<std::uint32_t> unique(l.ordinals.begin(), l.ordinals.end());
                CHECK(unique.size() == l.size());
                const auto& qid = fx.corpus.train_queries[v.batch[i]].query_id;
                for (std::size_t j = 0; j < l.size(); ++j) {
                    CHECK(l.labels[j] == fx.corpus.qrels.grade(qid, fx.corpus.doc_embeddings.doc_id(l.ordinals[j])));
                }
                ++checked;
            }
        });
        CHECK(checked == cfg.batch_size * static_cast<std::size_t>(cfg.steps));
    }
}

TEST_CASE("real-time lists follow the current encoder ranking") {
    Fixture fx;
    auto cfg = small_config("ltre", 3);
    cfg.dropout_p = 0.0;
    train_loop(cfg, fx.resources(), std::nullopt, [&](const StepView& v) {
        for (const auto& l : v.lists) {
            // Only the last slot may hold an injected document.
            for (std::size_t j = 0; j < l.size(); ++j) {
                CHECK(l.positions[j] == static_cast<int>(j + 1));
            }
            for (std::size_t j = 1; j + 1 < l.size(); ++j) {
                CHECK(l.scores[j - 1] >= l.scores[j]);
            }
        }
    });
}

TEST_CASE("batch schedule covers every query once per epoch") {
    Fixture fx(300, 40);
    auto cfg = small_config("ltre");
    Trainer trainer(cfg, fx.resources(), initial_params(cfg, 16));
    std::multiset<std::size_t> seen;
    for (std::int64_t s = 0; s < 5; ++s) {
        auto b = trainer.batch_at(s);
        seen.insert(b.begin(), b.end());
    }
    CHECK(seen.size() == 40);
    CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 40);
    CHECK(trainer.batch_at(5) != trainer.batch_at(0));
}

TEST_CASE("a batch without label variation leaves the encoder unchanged") {
    MatrixD values(3, 2, 0.0);
    values(0, 0) = 1.0;
    values(1, 1) = 1.0;
    values(2, 0) = -1.0;
    DocEmbeddingMatrix docs(values, {"a", "b", "c"});
    TermEmbeddingTable terms(MatrixD(1, 2, 0.5), {"t"});
    std::vector<Query> queries{{"q", {"t"}}};
    QrelSet qrels;
    for (const char* d : {"a", "b", "c"}) {
        qrels.set("q", d, 1);
    }
    FlatIndex index(docs);
    TrainConfig cfg;
    cfg.batch_size = 1;
    cfg.depth_n = 3;
    cfg.steps = 3;
    cfg.optimizer.weight_decay = 0.0;
    auto init = initial_params(cfg, 2);
    auto result = train_loop(cfg, {&docs, &terms, &queries, &qrels, &index, nullptr}, init);
    result.params.dropout_p = init.dropout_p;
    CHECK(result.params == init);
    for (const auto& r : result.log.records) {
        CHECK(r.loss == 0.0);
    }
}

TEST_CASE("one step on two documents matches a hand-derived update") {
    // Identity encoder without layer norm or dropout: phi(q) = x.
    MatrixD values(2, 2, 0.0);
    values(0, 0) = 1.0; // relevant
    values(1, 1) = 1.0;
    DocEmbeddingMatrix docs(values, {"pos", "neg"});
    MatrixD tv(1, 2, 0.0);
    tv(0, 0) = 0.25;
    tv(0, 1) = 0.75;
    TermEmbeddingTable terms(tv, {"w"});
    std::vector<Query> queries{{"q", {"w"}}};
    QrelSet qrels;
    qrels.set("q", "pos", 1);
    FlatIndex index(docs);

    TrainConfig cfg;
    cfg.batch_size = 1;
    cfg.depth_n = 2;
    cfg.steps = 1;
    cfg.dropout_p = 0.0;
    cfg.use_layer_norm = false;
    cfg.optimizer.lr = 0.1;
    cfg.optimizer.warmup_steps = 0;
    cfg.optimizer.total_steps = 10;
    cfg.optimizer.weight_decay = 0.0;
    auto init = QueryEncoderParams::identity(2, false, 0.0);
    auto result = train_loop(cfg, {&docs, &terms, &queries, &qrels, &index, nullptr}, init);

    // Scores 0.25 (pos) and 0.75 (neg); d loss / d e = sigma(0.5) * (neg - pos).
    const double sig = 1.0 / (1.0 + std::exp(-0.5));
    REQUIRE(result.log.records.size() == 1);
    CHECK(result.log.records[0].loss == doctest::Approx(std::log1p(std::exp(0.5))).epsilon(1e-12));
    const double ge[2] = {-sig, sig};
    const double x[2] = {0.25, 0.75};
    const double lr = 0.1 * 9.0 / 10.0;
    auto adam = [&](double g) { return g == 0.0 ? 0.0 : lr * g / (std::abs(g) + 1e-8); };
    const auto w = result.params.tensors.weight();
    const auto b = result.params.tensors.bias();
    for (int r = 0; r < 2; ++r) {
        CHECK(b[r] == doctest::Approx(-adam(ge[r])).epsilon(1e-12));
        for (int c = 0; c < 2; ++c) {
            const double expected = (r == c ? 1.0 : 0.0) - adam(ge[r] * x[c]);
            CHECK(w[r * 2 + c] == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("config validation") {
    auto cfg = small_config("ltre");
    cfg.depth_n = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config("ltre");
    cfg.dropout_p = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config("ltre");
    cfg.steps = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    Fixture fx(50, 4);
    cfg = small_config("lexical");
    auto res = fx.resources();
    res.lexical = nullptr;
    CHECK_THROWS_AS(Trainer(cfg, res, initial_params(cfg, 16)), ConfigError);
}

TEST_CASE("retrieve and lexical overlap") {
    Fixture fx;
    auto params = QueryEncoderParams::identity(16);
    auto run = retrieve(params, fx.corpus.eval_queries, fx.corpus.term_table, *fx.index, fx.corpus.doc_embeddings, 25);
    CHECK(run.size() == fx.corpus.eval_queries.size());
    for (const auto& [qid, ranked] : run) {
        CHECK(ranked.size() == 25);
        for (std::size_t i = 1; i < ranked.size(); ++i) {
            CHECK(ranked[i - 1].score >= ranked[i].score);
        }
    }
    const double o = mean_lexical_overlap(run, fx.corpus.eval_queries, fx.lexical, fx.corpus.doc_embeddings, 25);
    CHECK(o >= 0.0);
    CHECK(o <= 1.0);
    auto run8 = retrieve(params, fx.corpus.eval_queries, fx.corpus.term_table, *fx.index, fx.corpus.doc_embeddings,
                         25, 8);
    CHECK(run8 == run);
}
