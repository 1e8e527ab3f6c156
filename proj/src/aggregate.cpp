#include "ckpt_arbiter/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "ckpt_arbiter/errors.hpp"

namespace ckpt_arbiter {

void ScoringWeights::validate() const {
    if (!std::isfinite(beta) || !std::isfinite(gamma) || beta < 0.0 || gamma < 0.0)
        throw std::invalid_argument("scoring weights must be finite and non-negative");
}

double pointwise_mean(const ScoreMatrix& matrix, const CheckpointId& checkpoint) {
    const auto row = matrix.row_of(checkpoint);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t col = 0; col < matrix.n_samples(); ++col) {
        if (matrix.missing(row, col)) continue;
        sum += matrix.value(row, col);
        ++n;
    }
    if (n == 0) throw std::invalid_argument("all cells missing for " + checkpoint.str());
    return sum / static_cast<double>(n);
}

std::map<CheckpointId, double> borda_scores(const std::vector<ListwiseVerdict>& verdicts) {
    if (verdicts.empty()) throw std::invalid_argument("borda_scores needs at least one verdict");
    const std::set<CheckpointId> candidates(verdicts.front().ordering.begin(), verdicts.front().ordering.end());
    std::map<CheckpointId, double> totals;
    for (const auto& v : verdicts) {
        v.validate();
        if (std::set<CheckpointId>(v.ordering.begin(), v.ordering.end()) != candidates)
            throw DataError("listwise verdict " + v.sample_id + " ranks a different candidate set");
        for (const auto& [c, s] : v.rank_scores) totals[c] += s;
    }
    for (auto& [c, s] : totals) s /= static_cast<double>(verdicts.size());
    return totals;
}

namespace {

WinRateEntry finish(double wins, double ties, std::size_t total) {
    WinRateEntry e{wins, ties, total, 0.5};
    e.rate = (wins + 0.5 * ties) / static_cast<double>(total);
    return e;
}

}  // namespace

WinRateEntry win_rate_from_pairwise(const std::vector<PairwiseVerdict>& verdicts, const CheckpointId& a,
                                    const CheckpointId& b) {
    if (a == b) throw std::invalid_argument("win rate needs two distinct checkpoints");
    double wins = 0.0, ties = 0.0;
    std::size_t total = 0;
    for (const auto& v : verdicts) {
        const bool same = v.a == a && v.b == b;
        const bool flipped = v.a == b && v.b == a;
        if (!same && !flipped) continue;
        ++total;
        if (v.winner == PairWinner::tie) ties += 1.0;
        else if ((v.winner == PairWinner::a) == same) wins += 1.0;
    }
    if (total == 0) throw std::invalid_argument("no pairwise verdicts for " + a.str() + " vs " + b.str());
    return finish(wins, ties, total);
}

WinRateEntry win_rate_from_listwise(const std::vector<ListwiseVerdict>& verdicts, const CheckpointId& a,
                                    const CheckpointId& b) {
    if (a == b) throw std::invalid_argument("win rate needs two distinct checkpoints");
    if (verdicts.empty()) throw std::invalid_argument("no listwise verdicts");
    double wins = 0.0;
    for (const auto& v : verdicts)
        if (v.position_of(a) < v.position_of(b)) wins += 1.0;
    return finish(wins, 0.0, verdicts.size());
}

namespace {

double interpolate_sorted(const std::vector<double>& sorted, double q) {
    const double rank = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const double frac = rank - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted[lo];
    return sorted[lo] + (sorted[lo + 1] - sorted[lo]) * frac;
}

}  // namespace

double percentile(std::span<const double> scores, double q) {
    if (scores.empty()) throw std::invalid_argument("percentile of an empty list");
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile level outside [0,1]");
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    return interpolate_sorted(sorted, q);
}

PercentileSummary percentile_summary(std::span<const double> scores) {
    if (scores.empty()) throw std::invalid_argument("percentile summary of an empty list");
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    return {interpolate_sorted(sorted, 0.2), interpolate_sorted(sorted, 0.5), interpolate_sorted(sorted, 0.8)};
}

double percentile_score(const PercentileSummary& s, const ScoringWeights& w) {
    return s.p50 - w.beta * (s.p50 - s.p20) + w.gamma * (s.p80 - s.p50);
}

std::vector<CheckpointId> rank_from_scores(const std::map<CheckpointId, double>& scores) {
    if (scores.empty()) throw std::invalid_argument("cannot rank an empty score map");
    std::vector<std::pair<CheckpointId, double>> items(scores.begin(), scores.end());
    for (const auto& [c, s] : items)
        if (!std::isfinite(s)) throw std::invalid_argument("non-finite score for " + c.str());
    std::stable_sort(items.begin(), items.end(), [](const auto& x, const auto& y) {
        if (x.second != y.second) return x.second > y.second;
        return x.first < y.first;
    });
    std::vector<CheckpointId> out;
    out.reserve(items.size());
    for (auto& [c, s] : items) out.push_back(std::move(c));
    return out;
}

std::string to_string(AggregatorKind kind) { return kind == AggregatorKind::mean ? "mean" : "percentile"; }

AggregatorKind parse_aggregator_kind(const std::string& s) {
    if (s == "mean") return AggregatorKind::mean;
    if (s == "percentile") return AggregatorKind::percentile;
    throw std::invalid_argument("unknown aggregator: " + s);
}

double mean_of(std::span<const double> scores) {
    if (scores.empty()) throw std::invalid_argument("mean of an empty list");
    double sum = 0.0;
    for (double s : scores) sum += s;
    return sum / static_cast<double>(scores.size());
}

Aggregator make_aggregator(AggregatorKind kind, const ScoringWeights& weights) {
    weights.validate();
    if (kind == AggregatorKind::mean) return [](std::span<const double> s) { return mean_of(s); };
    return [weights](std::span<const double> s) { return percentile_score(percentile_summary(s), weights); };
}

std::map<CheckpointId, double> aggregate_rows(const ScoreMatrix& matrix, const Aggregator& aggregator) {
    std::map<CheckpointId, double> out;
    for (std::size_t r = 0; r < matrix.n_checkpoints(); ++r) {
        const auto values = matrix.row_values(r);
        if (values.empty()) throw std::invalid_argument("all cells missing for " + matrix.checkpoints()[r].str());
        out[matrix.checkpoints()[r]] = aggregator(values);
    }
    return out;
}

}  // namespace ckpt_arbiter
