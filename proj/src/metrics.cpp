#include "ltre/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include <json.hpp>
#include <spdlog/spdlog.h>

namespace ltre {

double ndcg_gain(int grade) {
    return std::ldexp(1.0, grade) - 1.0;
}

double dcg_at_k(std::span<const int> grades, int k) {
    double dcg = 0.0;
    const std::size_t limit = std::min(grades.size(), static_cast<std::size_t>(std::max(k, 0)));
    for (std::size_t j = 0; j < limit; ++j) {
        dcg += ndcg_gain(grades[j]) / std::log2(static_cast<double>(j) + 2.0);
    }
    return dcg;
}

double ideal_dcg_at_k(std::vector<int> grades, int k) {
    std::sort(grades.begin(), grades.end(), std::greater<>());
    return dcg_at_k(grades, k);
}

double reciprocal_rank_at_k(std::span<const int> grades, int k, int rel_threshold) {
    const std::size_t limit = std::min(grades.size(), static_cast<std::size_t>(std::max(k, 0)));
    for (std::size_t j = 0; j < limit; ++j) {
        if (grades[j] >= rel_threshold) {
            return 1.0 / static_cast<double>(j + 1);
        }
    }
    return 0.0;
}

double recall_from_grades(std::span<const int> grades, std::size_t k, std::size_t num_relevant, int rel_threshold) {
    if (num_relevant == 0) {
        return 0.0;
    }
    const std::size_t limit = std::min(grades.size(), k);
    std::size_t hits = 0;
    for (std::size_t j = 0; j < limit; ++j) {
        if (grades[j] >= rel_threshold) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(num_relevant);
}

double overlap_at_k(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b, std::size_t k) {
    if (k == 0) {
        throw ContractError("overlap_at_k: k must be >= 1");
    }
    std::unordered_set<std::uint32_t> top(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(std::min(k, a.size())));
    std::size_t shared = 0;
    for (std::size_t i = 0; i < std::min(k, b.size()); ++i) {
        shared += top.count(b[i]);
    }
    return static_cast<double>(shared) / static_cast<double>(k);
}

double overlap_at_k(const std::vector<std::string>& a, const std::vector<std::string>& b, std::size_t k) {
    if (k == 0) {
        throw ContractError("overlap_at_k: k must be >= 1");
    }
    std::unordered_set<std::string> top(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(std::min(k, a.size())));
    std::size_t shared = 0;
    for (std::size_t i = 0; i < std::min(k, b.size()); ++i) {
        shared += top.count(b[i]);
    }
    return static_cast<double>(shared) / static_cast<double>(k);
}

namespace {

std::vector<int> grades_of(const std::vector<std::string>& ranking, const QrelSet& qrels, const std::string& qid,
                           std::size_t limit) {
    const auto& judged = qrels.judged(qid);
    std::vector<int> grades;
    grades.reserve(std::min(limit, ranking.size()));
    for (std::size_t i = 0; i < ranking.size() && i < limit; ++i) {
        auto it = judged.find(ranking[i]);
        grades.push_back(it == judged.end() ? 0 : it->second);
    }
    return grades;
}

std::size_t count_relevant(const QrelSet& qrels, const std::string& qid, int rel_threshold) {
    std::size_t n = 0;
    for (const auto& [doc, grade] : qrels.judged(qid)) {
        (void)doc;
        n += grade >= rel_threshold ? 1 : 0;
    }
    return n;
}

} // namespace

double mrr_at_k(const std::vector<std::string>& ranking, const QrelSet& qrels, const std::string& query_id, int k,
                int rel_threshold) {
    if (k < 1) {
        throw ContractError("mrr_at_k: k must be >= 1");
    }
    auto grades = grades_of(ranking, qrels, query_id, static_cast<std::size_t>(k));
    return reciprocal_rank_at_k(grades, k, rel_threshold);
}

std::optional<double> recall_at_k(const std::vector<std::string>& ranking, const QrelSet& qrels,
                                  const std::string& query_id, std::size_t k, int rel_threshold) {
    const auto relevant = count_relevant(qrels, query_id, rel_threshold);
    if (relevant == 0) {
        spdlog::warn("recall: query '{}' has no document with grade >= {}; excluded", query_id, rel_threshold);
        return std::nullopt;
    }
    auto grades = grades_of(ranking, qrels, query_id, k);
    return recall_from_grades(grades, k, relevant, rel_threshold);
}

std::optional<double> ndcg_at_k(const std::vector<std::string>& ranking, const QrelSet& qrels,
                                const std::string& query_id, int k) {
    std::vector<int> all;
    for (const auto& [doc, grade] : qrels.judged(query_id)) {
        (void)doc;
        all.push_back(grade);
    }
    const double ideal = ideal_dcg_at_k(std::move(all), k);
    if (ideal <= 0.0) {
        spdlog::warn("ndcg: query '{}' has zero ideal DCG; excluded", query_id);
        return std::nullopt;
    }
    auto grades = grades_of(ranking, qrels, query_id, static_cast<std::size_t>(k));
    return dcg_at_k(grades, k) / ideal;
}

void write_run(const std::filesystem::path& path, const RunRanking& run, const std::string& tag) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out << std::setprecision(17);
    for (const auto& [qid, docs] : run) {
        for (std::size_t i = 0; i < docs.size(); ++i) {
            out << qid << " Q0 " << docs[i].doc_id << ' ' << (i + 1) << ' ' << docs[i].score << ' ' << tag << '\n';
        }
    }
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

RunRanking read_run(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open '" + path.string() + "' for reading");
    }
    RunRanking run;
    std::map<std::string, std::unordered_set<std::string>> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        std::istringstream fields(line);
        std::string qid, q0, did, rank_text, score_text, tag, extra;
        if (!(fields >> qid >> q0 >> did >> rank_text >> score_text >> tag) || (fields >> extra)) {
            throw ParseError("run line must have 6 fields: qid Q0 docid rank score tag", lineno);
        }
        long rank = 0;
        double score = 0.0;
        try {
            std::size_t used = 0;
            rank = std::stol(rank_text, &used);
            if (used != rank_text.size()) {
                throw std::invalid_argument(rank_text);
            }
            score = std::stod(score_text, &used);
            if (used != score_text.size()) {
                throw std::invalid_argument(score_text);
            }
        } catch (const std::exception&) {
            throw ParseError("non-numeric rank or score", lineno);
        }
        auto& docs = run[qid];
        if (!seen[qid].insert(did).second) {
            throw ParseError("duplicate document '" + did + "' for query '" + qid + "'", lineno);
        }
        if (rank != static_cast<long>(docs.size()) + 1) {
            spdlog::warn("run line {}: rank {} disagrees with file order {}; keeping file order", lineno, rank,
                         docs.size() + 1);
        }
        docs.push_back(RankedDoc{did, score});
    }
    return run;
}

MetricsReport summarize(std::vector<QueryMetrics> per_query) {
    MetricsReport report;
    report.num_queries = per_query.size();
    std::map<std::size_t, std::pair<double, std::size_t>> recall_acc;
    double rr = 0.0;
    double ndcg = 0.0;
    std::size_t ndcg_n = 0;
    for (const auto& q : per_query) {
        rr += q.reciprocal_rank;
        for (const auto& [k, v] : q.recall) {
            recall_acc[k].first += v;
            recall_acc[k].second += 1;
        }
        if (q.ndcg) {
            ndcg += *q.ndcg;
            ++ndcg_n;
        }
    }
    if (!per_query.empty()) {
        report.mrr_at_10 = rr / static_cast<double>(per_query.size());
    }
    for (const auto& [k, acc] : recall_acc) {
        report.recall_at_k[k] = acc.second ? acc.first / static_cast<double>(acc.second) : 0.0;
    }
    report.ndcg_at_10 = ndcg_n ? ndcg / static_cast<double>(ndcg_n) : 0.0;
    report.per_query = std::move(per_query);
    return report;
}

MetricsReport evaluate_run(const RunRanking& run, const QrelSet& qrels, const MetricsOptions& options) {
    std::vector<QueryMetrics> per_query;
    for (const auto& [qid, docs] : run) {
        if (!qrels.has_query(qid)) {
            spdlog::warn("evaluate_run: query '{}' has no judgments; skipped", qid);
            continue;
        }
        std::vector<std::string> ids;
        ids.reserve(docs.size());
        for (const auto& d : docs) {
            ids.push_back(d.doc_id);
        }
        QueryMetrics q;
        q.query_id = qid;
        q.reciprocal_rank = mrr_at_k(ids, qrels, qid, options.mrr_cutoff, options.rel_threshold);
        for (auto k : options.recall_cutoffs) {
            if (auto r = recall_at_k(ids, qrels, qid, k, options.rel_threshold)) {
                q.recall[k] = *r;
            }
        }
        q.ndcg = ndcg_at_k(ids, qrels, qid, options.ndcg_cutoff);
        per_query.push_back(std::move(q));
    }
    return summarize(std::move(per_query));
}

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["num_queries"] = num_queries;
    j["mrr_at_10"] = mrr_at_10;
    nlohmann::ordered_json recall = nlohmann::ordered_json::object();
    for (const auto& [k, v] : recall_at_k) {
        recall[std::to_string(k)] = v;
    }
    j["recall_at_k"] = recall;
    j["ndcg_at_10"] = ndcg_at_10;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& q : per_query) {
        nlohmann::ordered_json row;
        row["query_id"] = q.query_id;
        row["reciprocal_rank"] = q.reciprocal_rank;
        nlohmann::ordered_json r = nlohmann::ordered_json::object();
        for (const auto& [k, v] : q.recall) {
            r[std::to_string(k)] = v;
        }
        row["recall"] = r;
        row["ndcg"] = q.ndcg ? nlohmann::ordered_json(*q.ndcg) : nlohmann::ordered_json(nullptr);
        rows.push_back(std::move(row));
    }
    j["per_query"] = std::move(rows);
    return j.dump(2);
}

std::string MetricsReport::csv_header() const {
    std::string h = "num_queries,mrr_at_10";
    for (const auto& [k, v] : recall_at_k) {
        (void)v;
        h += ",recall_at_" + std::to_string(k);
    }
    return h + ",ndcg_at_10";
}

std::string MetricsReport::csv_row() const {
    std::ostringstream out;
    out << std::setprecision(10) << num_queries << ',' << mrr_at_10;
    for (const auto& [k, v] : recall_at_k) {
        (void)k;
        out << ',' << v;
    }
    out << ',' << ndcg_at_10;
    return out.str();
}

} // namespace ltre
