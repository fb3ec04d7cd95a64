#include "ltre/loss.hpp"

#include <algorithm>
#include <cmath>

#include "ltre/error.hpp"
#include "ltre/metrics.hpp"

namespace ltre {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double discount_at(int position, int cutoff) {
    return position <= cutoff ? 1.0 / std::log2(static_cast<double>(position) + 1.0) : 0.0;
}

double ndcg_swap_delta(int ls, int lt, int s, int t, int cutoff, double idcg) {
    if (idcg <= 0.0) {
        return 0.0;
    }
    const double gain = ndcg_gain(ls) - ndcg_gain(lt);
    const double disc = discount_at(s, cutoff) - discount_at(t, cutoff);
    return std::abs(gain * disc) / idcg;
}

} // namespace

void ScoredCandidateList::validate() const {
    const std::size_t n = ordinals.size();
    if (scores.size() != n || labels.size() != n || positions.size() != n) {
        throw ContractError("candidate list fields have different lengths");
    }
    std::vector<char> seen(n + 1, 0);
    for (int p : positions) {
        if (p < 1 || static_cast<std::size_t>(p) > n || seen[static_cast<std::size_t>(p)]) {
            throw ContractError("candidate positions must be a permutation of 1..n");
        }
        seen[static_cast<std::size_t>(p)] = 1;
    }
    for (double s : scores) {
        if (!std::isfinite(s)) {
            throw ContractError("candidate scores must be finite");
        }
    }
}

LossKind LossKind::parse(const std::string& text) {
    if (text == "ranknet") {
        return ranknet();
    }
    if (text == "lambdarank-mrr") {
        return lambdarank(RankMetric::kMrr);
    }
    if (text == "lambdarank-ndcg" || text == "lambdarank") {
        return lambdarank(RankMetric::kNdcg);
    }
    throw ConfigError("unknown loss '" + text + "' (expected ranknet, lambdarank-mrr, lambdarank-ndcg)");
}

std::string LossKind::to_string() const {
    if (variant == Variant::kRankNet) {
        return "ranknet";
    }
    return metric == RankMetric::kMrr ? "lambdarank-mrr" : "lambdarank-ndcg";
}

double ranknet(double r_s, double r_t) {
    const double d = r_t - r_s;
    return std::max(d, 0.0) + std::log1p(std::exp(-std::abs(d)));
}

std::pair<double, double> ranknet_grad(double r_s, double r_t) {
    const double g = sigmoid(r_t - r_s);
    return {-g, g};
}

double delta_metric(RankMetric metric, int s, int t, std::span<const int> labels_by_position, int cutoff,
                    int rel_threshold) {
    const int n = static_cast<int>(labels_by_position.size());
    if (s < 1 || t < 1 || s > n || t > n || s == t) {
        throw ContractError("delta_metric: positions must be distinct and within 1..n");
    }
    if (s > t) {
        std::swap(s, t);
    }
    const int ls = labels_by_position[static_cast<std::size_t>(s - 1)];
    const int lt = labels_by_position[static_cast<std::size_t>(t - 1)];
    if (metric == RankMetric::kNdcg) {
        const double idcg = ideal_dcg_at_k(std::vector<int>(labels_by_position.begin(), labels_by_position.end()), cutoff);
        return ndcg_swap_delta(ls, lt, s, t, cutoff, idcg);
    }

    // MRR: only the first relevant position matters, and only positions
    // s and t change. Find the first relevant rank excluding s and t.
    if (s > cutoff) {
        return 0.0;
    }
    const bool rs = ls >= rel_threshold;
    const bool rt = lt >= rel_threshold;
    if (rs == rt) {
        return 0.0;
    }
    int first_other = n + 1;
    for (int j = 1; j <= std::min(n, cutoff); ++j) {
        if (j != s && j != t && labels_by_position[static_cast<std::size_t>(j - 1)] >= rel_threshold) {
            first_other = j;
            break;
        }
    }
    auto rr = [&](bool rel_at_s, bool rel_at_t) {
        int first = first_other;
        if (rel_at_s) {
            first = std::min(first, s);
        }
        if (rel_at_t) {
            first = std::min(first, t);
        }
        return first <= cutoff ? 1.0 / first : 0.0;
    };
    return std::abs(rr(rs, rt) - rr(rt, rs));
}

PairLoss lambdarank(double r_s, double r_t, double delta) {
    if (delta < 0.0) {
        throw ContractError("lambdarank: metric delta must be non-negative");
    }
    auto [gs, gt] = ranknet_grad(r_s, r_t);
    return {delta * ranknet(r_s, r_t), delta * gs, delta * gt};
}

BatchLoss batch_pairwise_loss(std::span<const ScoredCandidateList> lists, const LossKind& kind) {
    BatchLoss out;
    out.score_grads.resize(lists.size());
    double total = 0.0;
    for (std::size_t q = 0; q < lists.size(); ++q) {
        const auto& list = lists[q];
        list.validate();
        const std::size_t n = list.size();
        out.score_grads[q].assign(n, 0.0);

        std::vector<int> by_position;
        double idcg = 0.0;
        if (kind.variant == LossKind::Variant::kLambdaRank) {
            by_position.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                by_position[static_cast<std::size_t>(list.positions[i] - 1)] = list.labels[i];
            }
            idcg = ideal_dcg_at_k(by_position, kind.cutoff);
        }
        for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t t = 0; t < n; ++t) {
                if (list.labels[s] <= list.labels[t]) {
                    continue;
                }
                ++out.pair_count;
                PairLoss pair;
                if (kind.variant == LossKind::Variant::kRankNet) {
                    auto [gs, gt] = ranknet_grad(list.scores[s], list.scores[t]);
                    pair = {ranknet(list.scores[s], list.scores[t]), gs, gt};
                } else {
                    double delta = kind.metric == RankMetric::kNdcg
                                           ? ndcg_swap_delta(list.labels[s], list.labels[t], list.positions[s],
                                                             list.positions[t], kind.cutoff, idcg)
                                           : delta_metric(kind.metric, list.positions[s], list.positions[t],
                                                          by_position, kind.cutoff, kind.rel_threshold);
                    pair = lambdarank(list.scores[s], list.scores[t], delta);
                }
                total += pair.loss;
                out.score_grads[q][s] += pair.grad_s;
                out.score_grads[q][t] += pair.grad_t;
            }
        }
    }
    if (out.pair_count > 0) {
        const double scale = 1.0 / static_cast<double>(out.pair_count);
        out.loss = total * scale;
        for (auto& g : out.score_grads) {
            for (auto& v : g) {
                v *= scale;
            }
        }
    }
    return out;
}

} // namespace ltre
