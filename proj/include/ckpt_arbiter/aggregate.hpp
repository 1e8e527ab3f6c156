#pragma once

// Score aggregation: pointwise means, listwise Borda points, win rates and
// the percentile-based robust score, plus deterministic ranking.

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ckpt_arbiter/types.hpp"

namespace ckpt_arbiter {

struct PercentileSummary {
    double p20 = 0.0;
    double p50 = 0.0;
    double p80 = 0.0;
    bool operator==(const PercentileSummary&) const = default;
};

// beta penalizes the lower tail (P50 - P20), gamma rewards the upper tail (P80 - P50).
struct ScoringWeights {
    double beta = 0.5;
    double gamma = 0.25;

    void validate() const;
    bool operator==(const ScoringWeights&) const = default;
};

struct WinRateEntry {
    double wins = 0.0;  // wins of the first checkpoint
    double ties = 0.0;
    std::size_t total = 0;
    double rate = 0.5;  // (wins + 0.5 ties) / total
    bool operator==(const WinRateEntry&) const = default;
};

using WinRateTable = std::map<CheckpointPair, WinRateEntry>;

// Mean over the non-missing cells of the checkpoint's row.
double pointwise_mean(const ScoreMatrix& matrix, const CheckpointId& checkpoint);

// Mean Borda points per checkpoint; every verdict must rank the same candidate set.
std::map<CheckpointId, double> borda_scores(const std::vector<ListwiseVerdict>& verdicts);

// Counts verdicts on {a, b} in either orientation, crediting ties 0.5.
WinRateEntry win_rate_from_pairwise(const std::vector<PairwiseVerdict>& verdicts, const CheckpointId& a,
                                    const CheckpointId& b);

// a wins a verdict iff it precedes b in the ordering.
WinRateEntry win_rate_from_listwise(const std::vector<ListwiseVerdict>& verdicts, const CheckpointId& a,
                                    const CheckpointId& b);

// Linear interpolation between order statistics at rank q * (n - 1).
double percentile(std::span<const double> scores, double q);
PercentileSummary percentile_summary(std::span<const double> scores);

// P50 - beta (P50 - P20) + gamma (P80 - P50).
double percentile_score(const PercentileSummary& summary, const ScoringWeights& weights);

// Descending by score, exact ties broken by ascending checkpoint id.
std::vector<CheckpointId> rank_from_scores(const std::map<CheckpointId, double>& scores);

// Reduces one checkpoint's per-sample scores to a single number.
using Aggregator = std::function<double(std::span<const double>)>;

enum class AggregatorKind { mean, percentile };

std::string to_string(AggregatorKind kind);
AggregatorKind parse_aggregator_kind(const std::string& s);

double mean_of(std::span<const double> scores);
Aggregator make_aggregator(AggregatorKind kind, const ScoringWeights& weights = {});

// Applies the aggregator to every row of the matrix (non-missing cells only).
std::map<CheckpointId, double> aggregate_rows(const ScoreMatrix& matrix, const Aggregator& aggregator);

}  // namespace ckpt_arbiter
