#include "ltre/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include <spdlog/spdlog.h>

namespace ltre {

namespace {

// Stream tags for make_rng; each consumer draws from its own stream.
constexpr std::uint64_t kScheduleTag = 0x5343;
constexpr std::uint64_t kDropoutTag = 0x4450;
constexpr std::uint64_t kSampleTag = 0x534d;

constexpr std::size_t kMrrCutoff = 10;

bool ranks_before_pair(double sa, std::uint32_t a, double sb, std::uint32_t b) {
    return sa > sb || (sa == sb && a < b);
}

// Scores `ordinals` against the query and assigns positions by that score.
ScoredCandidateList score_and_rank(const std::vector<std::uint32_t>& ordinals, const QueryLabels& labels,
                                   std::span<const double> query_embedding, const DocEmbeddingMatrix& docs) {
    ScoredCandidateList list;
    std::vector<double> scores;
    scores.reserve(ordinals.size());
    for (auto o : ordinals) {
        scores.push_back(dot<double, double>(query_embedding, docs.row(o)));
    }
    std::vector<std::size_t> order(ordinals.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return ranks_before_pair(scores[a], ordinals[a], scores[b], ordinals[b]);
    });
    std::vector<int> position(ordinals.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
        position[order[r]] = static_cast<int>(r + 1);
    }
    for (std::size_t i = 0; i < ordinals.size(); ++i) {
        list.push_back(ordinals[i], scores[i], labels.grade(ordinals[i]), position[i]);
    }
    return list;
}

std::vector<std::uint32_t> ordinals_of(const SearchResult& result, std::size_t limit) {
    std::vector<std::uint32_t> out;
    out.reserve(std::min(limit, result.size()));
    for (std::size_t i = 0; i < result.size() && i < limit; ++i) {
        out.push_back(result[i].ordinal);
    }
    return out;
}

std::string format_double(double v) {
    std::ostringstream out;
    out << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
    return out.str();
}

} // namespace

Strategy Strategy::parse(const std::string& text) {
    if (text == "ltre") {
        return ltre();
    }
    if (text == "randneg") {
        return {Variant::kRandNeg, 0};
    }
    if (text == "lexical" || text == "lexical-neg") {
        return {Variant::kLexicalTopNeg, 0};
    }
    if (text == "inbatch") {
        return {Variant::kInBatchNeg, 0};
    }
    if (text == "nce") {
        return {Variant::kNceNeg, 0};
    }
    if (text == "async") {
        return async_ann(500);
    }
    if (text.rfind("async:", 0) == 0) {
        const std::string tail = text.substr(6);
        int r = 0;
        auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), r);
        if (ec != std::errc{} || ptr != tail.data() + tail.size() || r < 1) {
            throw ConfigError("strategy: bad refresh period in '" + text + "'");
        }
        return async_ann(r);
    }
    throw ConfigError("strategy: unknown value '" + text +
                      "' (expected ltre, randneg, lexical, lexical-neg, inbatch, nce, async or async:<R>)");
}

std::string Strategy::to_string() const {
    switch (variant) {
    case Variant::kLtre:
        return "ltre";
    case Variant::kRandNeg:
        return "randneg";
    case Variant::kLexicalTopNeg:
        return "lexical";
    case Variant::kInBatchNeg:
        return "inbatch";
    case Variant::kNceNeg:
        return "nce";
    case Variant::kAsyncAnn:
        return "async:" + std::to_string(refresh_every);
    }
    return "?";
}

void Strategy::validate() const {
    if (variant == Variant::kAsyncAnn && refresh_every < 1) {
        throw ConfigError("strategy: refresh_every must be >= 1 for async");
    }
}

void TrainConfig::validate() const {
    strategy.validate();
    if (batch_size < 1) {
        throw ConfigError("batch_size must be >= 1");
    }
    if (depth_n < 2) {
        throw ConfigError("depth_n must be >= 2");
    }
    if (steps < 0) {
        throw ConfigError("steps must be >= 0");
    }
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
        throw ConfigError("dropout_p must lie in [0, 1)");
    }
    if (!(init_noise >= 0.0) || !std::isfinite(init_noise)) {
        throw ConfigError("init_noise must be finite and >= 0");
    }
    if (rel_threshold < 1) {
        throw ConfigError("rel_threshold must be >= 1");
    }
    if (diagnostics.depth < 1) {
        throw ConfigError("diagnostics.depth must be >= 1");
    }
    if (diagnostics.async_refresh_every < 1) {
        throw ConfigError("diagnostics.async_refresh_every must be >= 1");
    }
    if (threads < 1) {
        throw ConfigError("threads must be >= 1");
    }
    if (!(optimizer.lr > 0.0) || !(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
        !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0) || !(optimizer.epsilon > 0.0) ||
        !(optimizer.weight_decay >= 0.0) || optimizer.warmup_steps < 0 || optimizer.total_steps < 1) {
        throw ConfigError("optimizer hyperparameters out of range");
    }
    if (loss.cutoff < 1) {
        throw ConfigError("loss cutoff must be >= 1");
    }
}

QueryEncoderParams initial_params(const TrainConfig& config, std::size_t dim) {
    return QueryEncoderParams::perturbed_identity(dim, config.init_noise, config.seed, config.use_layer_norm,
                                                  config.dropout_p);
}

std::size_t QueryLabels::count_at_least(int threshold) const {
    std::size_t n = 0;
    for (const auto& [doc, grade] : grades) {
        (void)doc;
        n += grade >= threshold ? 1 : 0;
    }
    return n;
}

QueryLabels resolve_labels(const QrelSet& qrels, const std::string& query_id, const DocEmbeddingMatrix& docs) {
    QueryLabels labels;
    int best = 0;
    // judged() is ordered by doc id, so the first document reaching the
    // best grade is the lowest id among them.
    for (const auto& [doc_id, grade] : qrels.judged(query_id)) {
        auto ordinal = docs.ordinal(doc_id);
        if (!ordinal) {
            spdlog::warn("qrels: document '{}' of query '{}' is not in the corpus; ignored", doc_id, query_id);
            continue;
        }
        labels.grades.emplace(*ordinal, grade);
        if (grade > best) {
            best = grade;
            labels.positives.clear();
            labels.injection = *ordinal;
        }
        if (grade == best) {
            labels.positives.push_back(*ordinal);
        }
    }
    if (best < 1) {
        throw ConfigError("query '" + query_id + "' has no relevant document in the corpus");
    }
    return labels;
}

void inject_relevant(ScoredCandidateList& list, const QueryLabels& labels, std::span<const double> query_embedding,
                     const DocEmbeddingMatrix& docs) {
    if (list.size() == 0) {
        throw ContractError("inject_relevant: empty candidate list");
    }
    if (std::any_of(list.labels.begin(), list.labels.end(), [](int l) { return l >= 1; })) {
        return;
    }
    // Replace the candidate holding the deepest position.
    auto last = static_cast<std::size_t>(
            std::max_element(list.positions.begin(), list.positions.end()) - list.positions.begin());
    const auto doc = labels.injection;
    list.ordinals[last] = doc;
    list.scores[last] = dot<double, double>(query_embedding, docs.row(doc));
    list.labels[last] = labels.grade(doc);
}

ScoredCandidateList candidates_from_result(const SearchResult& result, std::size_t n, const QueryLabels& labels,
                                           std::span<const double> query_embedding, const DocEmbeddingMatrix& docs) {
    ScoredCandidateList list;
    for (std::size_t i = 0; i < result.size() && i < n; ++i) {
        const auto o = result[i].ordinal;
        list.push_back(o, dot<double, double>(query_embedding, docs.row(o)), labels.grade(o), static_cast<int>(i + 1));
    }
    return list;
}

std::string TrainingLog::to_csv() const {
    std::string out = std::string(kHeader) + "\n";
    for (const auto& r : records) {
        out += std::to_string(r.step) + ',' + format_double(r.loss) + ',' + format_double(r.lr) + ',' +
               format_double(r.batch_mrr10) + ',' + format_double(r.batch_recall200) + ',' +
               format_double(r.overlap_lexical200) + ',' + format_double(r.overlap_async200) + '\n';
    }
    return out;
}

void TrainingLog::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out << to_csv();
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

TrainingLog TrainingLog::read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open '" + path.string() + "' for reading");
    }
    std::string line;
    if (!std::getline(in, line) || line != kHeader) {
        throw ParseError("training log header mismatch", 1);
    }
    TrainingLog log;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) {
            fields.push_back(f);
        }
        if (fields.size() != 7) {
            throw ParseError("training log row must have 7 fields", lineno);
        }
        try {
            StepRecord r;
            r.step = std::stoll(fields[0]);
            r.loss = std::stod(fields[1]);
            r.lr = std::stod(fields[2]);
            r.batch_mrr10 = std::stod(fields[3]);
            r.batch_recall200 = std::stod(fields[4]);
            r.overlap_lexical200 = std::stod(fields[5]);
            r.overlap_async200 = std::stod(fields[6]);
            log.records.push_back(r);
        } catch (const std::exception&) {
            throw ParseError("non-numeric training log field", lineno);
        }
    }
    return log;
}

// Stale retrieval: lists computed in eval mode with the parameters frozen at
// the last refresh. Filled lazily, which yields the same lists as
// re-retrieving the whole pool at refresh time.
struct Trainer::Cache {
    int period = 1;
    std::size_t depth = 0;
    QueryEncoderParams snapshot;
    std::unordered_map<std::size_t, SearchResult> lists;
};

Trainer::Trainer(TrainConfig config, const TrainingResources& resources, QueryEncoderParams params)
        : config_(std::move(config)), res_(resources), params_(std::move(params)) {
    config_.validate();
    if (!res_.docs || !res_.terms || !res_.queries || !res_.qrels || !res_.index) {
        throw ConfigError("trainer: missing training resource");
    }
    if (res_.queries->empty()) {
        throw ConfigError("trainer: no training queries");
    }
    if (res_.index->size() != res_.docs->size() || res_.index->dim() != res_.docs->dim()) {
        throw ConfigError("trainer: index does not match the document embeddings");
    }
    if (res_.terms->dim() != res_.docs->dim() || params_.dim() != res_.docs->dim()) {
        throw ConfigError("trainer: encoder, term table and document dimensions differ");
    }
    if (config_.strategy.variant == Strategy::Variant::kLexicalTopNeg && !res_.lexical) {
        throw ConfigError("trainer: lexical strategy needs a lexical index");
    }
    params_.dropout_p = config_.dropout_p;
    params_.validate();
    opt_ = OptimizerState(config_.optimizer, params_.tensors.flat().size());

    const auto& queries = *res_.queries;
    features_ = MatrixD(queries.size(), res_.docs->dim());
    labels_.reserve(queries.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
        auto f = extract_query_features(queries[q], *res_.terms);
        std::copy(f.begin(), f.end(), features_.row(q).begin());
        labels_.push_back(resolve_labels(*res_.qrels, queries[q].query_id, *res_.docs));
    }

    if (res_.lexical) {
        const std::size_t depth = std::max(config_.depth_n, config_.diagnostics.depth);
        lexical_top_.resize(queries.size());
        parallel_for(queries.size(), config_.threads, [&](std::size_t q) {
            lexical_top_[q] = ordinals_of(bm25_search(*res_.lexical, queries[q], depth, config_.bm25), depth);
        });
    }

    cache_ = std::make_unique<Cache>();
    cache_->period = config_.strategy.variant == Strategy::Variant::kAsyncAnn ? config_.strategy.refresh_every
                                                                             : config_.diagnostics.async_refresh_every;
    cache_->depth = std::max(config_.depth_n, config_.diagnostics.depth);
}

Trainer::~Trainer() = default;

const std::vector<std::size_t>& Trainer::epoch_order(std::int64_t epoch) const {
    if (epoch != order_epoch_) {
        order_.resize(res_.queries->size());
        std::iota(order_.begin(), order_.end(), 0);
        auto rng = make_rng(config_.seed, {kScheduleTag, static_cast<std::uint64_t>(epoch)});
        std::shuffle(order_.begin(), order_.end(), rng);
        order_epoch_ = epoch;
    }
    return order_;
}

std::vector<std::size_t> Trainer::batch_at(std::int64_t step) const {
    const auto nq = static_cast<std::int64_t>(res_.queries->size());
    const auto bs = static_cast<std::int64_t>(config_.batch_size);
    std::vector<std::size_t> batch;
    batch.reserve(config_.batch_size);
    for (std::int64_t i = 0; i < bs; ++i) {
        const std::int64_t p = step * bs + i;
        batch.push_back(epoch_order(p / nq)[static_cast<std::size_t>(p % nq)]);
    }
    return batch;
}

std::vector<ScoredCandidateList> Trainer::sample(std::span<const std::size_t> batch, const MatrixD& embeddings,
                                                 const std::vector<SearchResult>& realtime,
                                                 const std::vector<const SearchResult*>& cached) {
    const auto& docs = *res_.docs;
    const std::size_t n = config_.depth_n;
    std::vector<ScoredCandidateList> lists(batch.size());
    using V = Strategy::Variant;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& labels = labels_[batch[i]];
        const auto emb = embeddings.row(i);
        const auto& own = labels.positives;
        auto is_own = [&own](std::uint32_t o) { return std::find(own.begin(), own.end(), o) != own.end(); };
        const std::size_t budget = n > own.size() ? n - own.size() : 0;

        switch (config_.strategy.variant) {
        case V::kLtre:
            lists[i] = candidates_from_result(realtime[i], n, labels, emb, docs);
            break;
        case V::kAsyncAnn:
            lists[i] = candidates_from_result(*cached[i], n, labels, emb, docs);
            break;
        case V::kRandNeg: {
            std::vector<std::uint32_t> picked(own.begin(), own.end());
            const std::size_t available = docs.size() - own.size();
            if (budget >= available) {
                for (std::uint32_t o = 0; o < docs.size(); ++o) {
                    if (!is_own(o)) {
                        picked.push_back(o);
                    }
                }
            } else {
                auto rng = make_rng(config_.seed, {kSampleTag, static_cast<std::uint64_t>(step_), i});
                std::uniform_int_distribution<std::uint32_t> uniform(0, static_cast<std::uint32_t>(docs.size() - 1));
                std::unordered_set<std::uint32_t> seen(own.begin(), own.end());
                while (picked.size() < own.size() + budget) {
                    auto o = uniform(rng);
                    if (seen.insert(o).second) {
                        picked.push_back(o);
                    }
                }
            }
            lists[i] = score_and_rank(picked, labels, emb, docs);
            break;
        }
        case V::kLexicalTopNeg: {
            std::vector<std::uint32_t> picked(own.begin(), own.end());
            for (auto o : lexical_top_[batch[i]]) {
                if (picked.size() >= own.size() + budget) {
                    break;
                }
                if (!is_own(o)) {
                    picked.push_back(o);
                }
            }
            lists[i] = score_and_rank(picked, labels, emb, docs);
            break;
        }
        case V::kInBatchNeg:
        case V::kNceNeg: {
            std::vector<std::uint32_t> negatives;
            std::unordered_set<std::uint32_t> seen(own.begin(), own.end());
            for (std::size_t j = 0; j < batch.size(); ++j) {
                if (j == i) {
                    continue;
                }
                for (auto o : labels_[batch[j]].positives) {
                    if (seen.insert(o).second) {
                        negatives.push_back(o);
                    }
                }
            }
            if (config_.strategy.variant == V::kNceNeg && !negatives.empty()) {
                std::uint32_t best = negatives.front();
                double best_score = dot<double, double>(emb, docs.row(best));
                for (auto o : negatives) {
                    const double s = dot<double, double>(emb, docs.row(o));
                    if (ranks_before_pair(s, o, best_score, best)) {
                        best = o;
                        best_score = s;
                    }
                }
                negatives = {best};
            }
            std::vector<std::uint32_t> picked(own.begin(), own.end());
            picked.insert(picked.end(), negatives.begin(), negatives.end());
            lists[i] = score_and_rank(picked, labels, emb, docs);
            break;
        }
        }
        inject_relevant(lists[i], labels, emb, docs);
    }
    return lists;
}

StepRecord Trainer::step() {
    const auto& docs = *res_.docs;
    const std::int64_t s = step_;
    if (s % cache_->period == 0) {
        cache_->snapshot = params_;
        cache_->lists.clear();
    }
    const auto batch = batch_at(s);
    const std::size_t b = batch.size();
    const std::size_t depth = std::max(config_.depth_n, config_.diagnostics.depth);

    // Encode in train mode; one dropout stream per (step, slot).
    MatrixD embeddings(b, docs.dim());
    std::vector<ForwardCache> forward(b);
    for (std::size_t i = 0; i < b; ++i) {
        auto rng = make_rng(config_.seed, {kDropoutTag, static_cast<std::uint64_t>(s), i});
        auto e = encode_query(params_, features_.row(batch[i]), EncodeMode::kTrain, &rng, &forward[i]);
        std::copy(e.begin(), e.end(), embeddings.row(i).begin());
    }
    auto realtime = res_.index->search_batch(embeddings, depth, config_.threads);

    // Fill stale lists for queries not seen since the last refresh.
    std::vector<std::size_t> missing;
    for (auto q : batch) {
        if (!cache_->lists.count(q) && std::find(missing.begin(), missing.end(), q) == missing.end()) {
            missing.push_back(q);
        }
    }
    std::vector<SearchResult> fresh(missing.size());
    parallel_for(missing.size(), config_.threads, [&](std::size_t i) {
        auto e = encode_query(cache_->snapshot, features_.row(missing[i]), EncodeMode::kEval);
        fresh[i] = res_.index->search(e, cache_->depth);
    });
    for (std::size_t i = 0; i < missing.size(); ++i) {
        cache_->lists.emplace(missing[i], std::move(fresh[i]));
    }
    std::vector<const SearchResult*> cached(b);
    for (std::size_t i = 0; i < b; ++i) {
        cached[i] = &cache_->lists.at(batch[i]);
    }

    // Diagnostics on the current batch, before the update.
    StepRecord record;
    record.step = s;
    const std::size_t dk = config_.diagnostics.depth;
    double mrr = 0.0, recall = 0.0, lexical = 0.0, async = 0.0;
    std::size_t recall_n = 0;
    for (std::size_t i = 0; i < b; ++i) {
        const auto& labels = labels_[batch[i]];
        std::vector<int> grades;
        grades.reserve(realtime[i].size());
        for (const auto& hit : realtime[i]) {
            grades.push_back(labels.grade(hit.ordinal));
        }
        mrr += reciprocal_rank_at_k(grades, kMrrCutoff, config_.rel_threshold);
        if (const auto rel = labels.count_at_least(config_.rel_threshold); rel > 0) {
            recall += recall_from_grades(grades, dk, rel, config_.rel_threshold);
            ++recall_n;
        }
        const auto rt = ordinals_of(realtime[i], dk);
        if (res_.lexical) {
            lexical += overlap_at_k(rt, lexical_top_[batch[i]], dk);
        }
        async += overlap_at_k(ordinals_of(*cached[i], dk), rt, dk);
    }
    record.batch_mrr10 = mrr / static_cast<double>(b);
    record.batch_recall200 = recall_n ? recall / static_cast<double>(recall_n) : 0.0;
    record.overlap_lexical200 =
            res_.lexical ? lexical / static_cast<double>(b) : std::numeric_limits<double>::quiet_NaN();
    record.overlap_async200 = async / static_cast<double>(b);

    auto lists = sample(batch, embeddings, realtime, cached);
    for (const auto& l : lists) {
        l.validate();
    }
    if (observer_) {
        observer_(StepView{s, batch, lists});
    }

    auto loss = batch_pairwise_loss(lists, config_.loss);
    if (!std::isfinite(loss.loss)) {
        throw NumericError("non-finite loss at step " + std::to_string(s));
    }

    // d loss / d phi(q_i) = sum_j (d loss / d r_ij) psi(d_ij)
    EncoderGradients grads(docs.dim());
    std::vector<double> upstream(docs.dim());
    for (std::size_t i = 0; i < b; ++i) {
        std::fill(upstream.begin(), upstream.end(), 0.0);
        bool any = false;
        for (std::size_t j = 0; j < lists[i].size(); ++j) {
            const double g = loss.score_grads[i][j];
            if (g == 0.0) {
                continue;
            }
            any = true;
            auto d = docs.row(lists[i].ordinals[j]);
            for (std::size_t k = 0; k < upstream.size(); ++k) {
                upstream[k] += g * d[k];
            }
        }
        if (any) {
            grads += encode_query_backward(params_, features_.row(batch[i]), forward[i], upstream);
        }
    }
    record.loss = loss.loss;
    record.lr = adamw_step(opt_, params_.tensors.flat(), grads.flat());
    ++step_;
    return record;
}

TrainResult train_loop(const TrainConfig& config, const TrainingResources& resources,
                       std::optional<QueryEncoderParams> init, StepObserver observer) {
    if (!resources.docs) {
        throw ConfigError("train_loop: missing document embeddings");
    }
    auto params = init ? std::move(*init) : initial_params(config, resources.docs->dim());
    if (config.steps == 0) {
        config.validate();
        return {std::move(params), {}};
    }
    Trainer trainer(config, resources, std::move(params));
    trainer.set_observer(std::move(observer));
    TrainingLog log;
    log.records.reserve(static_cast<std::size_t>(config.steps));
    for (std::int64_t s = 0; s < config.steps; ++s) {
        log.records.push_back(trainer.step());
        if ((s + 1) % 500 == 0) {
            const auto& r = log.records.back();
            spdlog::info("step {} loss {:.4f} batch mrr@10 {:.4f}", s + 1, r.loss, r.batch_mrr10);
        }
    }
    return {trainer.params(), std::move(log)};
}

MatrixD encode_queries(const QueryEncoderParams& params, const std::vector<Query>& queries,
                       const TermEmbeddingTable& terms, int threads) {
    MatrixD out(queries.size(), params.dim());
    parallel_for(queries.size(), threads, [&](std::size_t q) {
        auto e = encode_query(params, extract_query_features(queries[q], terms), EncodeMode::kEval);
        std::copy(e.begin(), e.end(), out.row(q).begin());
    });
    return out;
}

RunRanking retrieve(const QueryEncoderParams& params, const std::vector<Query>& queries,
                    const TermEmbeddingTable& terms, const RetrievalIndex& index, const DocEmbeddingMatrix& docs,
                    std::size_t depth, int threads) {
    const auto embeddings = encode_queries(params, queries, terms, threads);
    const auto results = index.search_batch(embeddings, depth, threads);
    RunRanking run;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        auto& ranked = run[queries[q].query_id];
        ranked.reserve(results[q].size());
        for (const auto& hit : results[q]) {
            ranked.push_back(RankedDoc{docs.doc_id(hit.ordinal), hit.score});
        }
    }
    return run;
}

double mean_lexical_overlap(const RunRanking& run, const std::vector<Query>& queries, const InvertedIndex& lexical,
                            const DocEmbeddingMatrix& docs, std::size_t k, const Bm25Params& bm25) {
    if (queries.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto& q : queries) {
        std::vector<std::uint32_t> dense;
        if (auto it = run.find(q.query_id); it != run.end()) {
            for (std::size_t i = 0; i < it->second.size() && i < k; ++i) {
                if (auto o = docs.ordinal(it->second[i].doc_id)) {
                    dense.push_back(*o);
                }
            }
        }
        total += overlap_at_k(dense, ordinals_of(bm25_search(lexical, q, k, bm25), k), k);
    }
    return total / static_cast<double>(queries.size());
}

} // namespace ltre
