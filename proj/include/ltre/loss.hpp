#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ltre {

/// Candidates of one query in the order they were produced.
/// `positions` are 1-based ranks used by metric-aware losses.
struct ScoredCandidateList {
    std::vector<std::uint32_t> ordinals;
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<int> positions;

    std::size_t size() const noexcept {
        return ordinals.size();
    }
    void push_back(std::uint32_t ordinal, double score, int label, int position) {
        ordinals.push_back(ordinal);
        scores.push_back(score);
        labels.push_back(label);
        positions.push_back(position);
    }
    /// Throws ContractError when lengths differ or positions are not a
    /// permutation of 1..n.
    void validate() const;
};

enum class RankMetric { kMrr, kNdcg };

struct LossKind {
    enum class Variant { kRankNet, kLambdaRank };

    Variant variant = Variant::kRankNet;
    RankMetric metric = RankMetric::kNdcg;
    int cutoff = 10;
    int rel_threshold = 1; // MRR only

    static LossKind ranknet() {
        return {};
    }
    static LossKind lambdarank(RankMetric metric, int cutoff = 10) {
        return {Variant::kLambdaRank, metric, cutoff, 1};
    }
    /// "ranknet", "lambdarank-mrr", "lambdarank-ndcg"
    static LossKind parse(const std::string& text);
    std::string to_string() const;
};

/// log(1 + e^(r_t - r_s)) in overflow-free form.
double ranknet(double r_s, double r_t);

/// (d/dr_s, d/dr_t) = (-sigmoid(r_t - r_s), +sigmoid(r_t - r_s)).
std::pair<double, double> ranknet_grad(double r_s, double r_t);

/// |M(ranking) - M(ranking with positions s and t swapped)| where
/// `labels_by_position[j - 1]` is the grade at rank j. The ideal DCG is
/// taken from the list itself.
double delta_metric(RankMetric metric, int s, int t, std::span<const int> labels_by_position, int cutoff,
                    int rel_threshold = 1);

struct PairLoss {
    double loss = 0.0;
    double grad_s = 0.0;
    double grad_t = 0.0;
};

/// delta * ranknet(r_s, r_t), with gradients scaled the same way.
PairLoss lambdarank(double r_s, double r_t, double delta);

struct BatchLoss {
    double loss = 0.0;
    std::size_t pair_count = 0;
    std::vector<std::vector<double>> score_grads; // d loss / d score, per list
};

/// Mean pairwise loss over every ordered pair (s, t) with label_s > label_t,
/// pooled across the batch.
BatchLoss batch_pairwise_loss(std::span<const ScoredCandidateList> lists, const LossKind& kind);

} // namespace ltre
