#pragma once

// Ranking stability across repeated evaluations over sample subsets.

#include <map>
#include <vector>

#include "ckpt_arbiter/aggregate.hpp"
#include "ckpt_arbiter/confidence.hpp"

namespace ckpt_arbiter {

struct TrialRun {
    std::size_t trial_index = 0;
    std::vector<CheckpointId> ranking;  // best first
    std::map<CheckpointId, double> scores;
    bool operator==(const TrialRun&) const = default;
};

struct TrialRankings {
    std::vector<TrialRun> runs;

    // Throws DataError when runs rank different checkpoint sets.
    void validate() const;
    std::vector<CheckpointId> checkpoints() const;  // sorted
    bool operator==(const TrialRankings&) const = default;
};

// n_resamples runs, each over a uniform without-replacement column subset.
TrialRankings subsample_trials(const ScoreMatrix& matrix, const ResampleConfig& config, const Aggregator& aggregator);

// Builds TrialRankings from per-run score maps (e.g. independent evaluation campaigns).
TrialRankings trials_from_scores(const std::vector<std::map<CheckpointId, double>>& per_run_scores);

// Fraction of (pair, run) observations disagreeing with the pair's majority orientation.
double flip_rate(const TrialRankings& trials);
// Mean Kendall tau over all unordered pairs of runs.
double inter_run_agreement(const TrialRankings& trials);
double kendall_tau(const std::vector<CheckpointId>& x, const std::vector<CheckpointId>& y);
// Fraction of runs whose top-1 equals the modal top-1 (ties -> smallest id).
double top1_consistency(const TrialRankings& trials);
CheckpointId modal_top1(const TrialRankings& trials);
// Sample standard deviation of one checkpoint's run scores.
double score_std_dev(const TrialRankings& trials, const CheckpointId& checkpoint);

// Number of runs ranking `first` above `second`.
std::size_t runs_preferring(const TrialRankings& trials, const CheckpointId& first, const CheckpointId& second);

// Fraction of checkpoint pairs whose predicted direction (P(first > second)
// vs 0.5) matches the majority orientation across runs. Predictions may be
// keyed in either orientation.
double agreement_with_subsampling(const std::map<CheckpointPair, double>& predicted, const TrialRankings& trials);

}  // namespace ckpt_arbiter
