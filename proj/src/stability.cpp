#include "ckpt_arbiter/stability.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "ckpt_arbiter/errors.hpp"
#include "ckpt_arbiter/kernels.hpp"

namespace ckpt_arbiter {

void TrialRankings::validate() const {
    if (runs.empty()) return;
    const std::set<CheckpointId> ref(runs.front().ranking.begin(), runs.front().ranking.end());
    for (const auto& run : runs) {
        const std::set<CheckpointId> ids(run.ranking.begin(), run.ranking.end());
        if (ids != ref || run.ranking.size() != ref.size())
            throw DataError("trial " + std::to_string(run.trial_index) + " ranks a different checkpoint set");
    }
}

std::vector<CheckpointId> TrialRankings::checkpoints() const {
    if (runs.empty()) return {};
    auto ids = runs.front().ranking;
    std::sort(ids.begin(), ids.end());
    return ids;
}

TrialRankings subsample_trials(const ScoreMatrix& matrix, const ResampleConfig& config, const Aggregator& aggregator) {
    if (config.replacement) throw std::invalid_argument("subsample trials draw without replacement");
    const auto scores = kernels::subsample_aggregates_parallel(matrix, config.subsample_size, config.n_resamples,
                                                               config.seed, aggregator);
    TrialRankings out;
    out.runs.reserve(scores.size());
    for (std::size_t r = 0; r < scores.size(); ++r) {
        TrialRun run;
        run.trial_index = r;
        for (std::size_t c = 0; c < matrix.n_checkpoints(); ++c) run.scores[matrix.checkpoints()[c]] = scores[r][c];
        run.ranking = rank_from_scores(run.scores);
        out.runs.push_back(std::move(run));
    }
    return out;
}

TrialRankings trials_from_scores(const std::vector<std::map<CheckpointId, double>>& per_run_scores) {
    TrialRankings out;
    for (std::size_t r = 0; r < per_run_scores.size(); ++r)
        out.runs.push_back({r, rank_from_scores(per_run_scores[r]), per_run_scores[r]});
    out.validate();
    return out;
}

namespace {

// position[run][checkpoint index in sorted ids]
std::vector<std::vector<std::size_t>> positions(const TrialRankings& trials, const std::vector<CheckpointId>& ids) {
    std::vector<std::vector<std::size_t>> pos(trials.runs.size(), std::vector<std::size_t>(ids.size()));
    for (std::size_t r = 0; r < trials.runs.size(); ++r) {
        const auto& ranking = trials.runs[r].ranking;
        for (std::size_t p = 0; p < ranking.size(); ++p) {
            const auto it = std::lower_bound(ids.begin(), ids.end(), ranking[p]);
            pos[r][static_cast<std::size_t>(it - ids.begin())] = p;
        }
    }
    return pos;
}

void require_runs(const TrialRankings& trials, std::size_t min_runs, const char* what) {
    if (trials.runs.size() < min_runs)
        throw std::invalid_argument(std::string(what) + " needs at least " + std::to_string(min_runs) + " runs");
    trials.validate();
}

}  // namespace

std::size_t runs_preferring(const TrialRankings& trials, const CheckpointId& first, const CheckpointId& second) {
    std::size_t n = 0;
    for (const auto& run : trials.runs) {
        const auto pf = std::find(run.ranking.begin(), run.ranking.end(), first);
        const auto ps = std::find(run.ranking.begin(), run.ranking.end(), second);
        if (pf == run.ranking.end() || ps == run.ranking.end())
            throw std::invalid_argument("checkpoint missing from trial ranking");
        if (pf < ps) ++n;
    }
    return n;
}

double flip_rate(const TrialRankings& trials) {
    require_runs(trials, 2, "flip_rate");
    const auto ids = trials.checkpoints();
    if (ids.size() < 2) throw std::invalid_argument("flip_rate needs at least 2 checkpoints");
    const auto pos = positions(trials, ids);
    const auto n_runs = trials.runs.size();
    std::size_t disagreements = 0, n_pairs = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = i + 1; j < ids.size(); ++j) {
            std::size_t i_above = 0;
            for (std::size_t r = 0; r < n_runs; ++r) i_above += pos[r][i] < pos[r][j] ? 1 : 0;
            disagreements += std::min(i_above, n_runs - i_above);
            ++n_pairs;
        }
    }
    return static_cast<double>(disagreements) / static_cast<double>(n_pairs * n_runs);
}

double kendall_tau(const std::vector<CheckpointId>& x, const std::vector<CheckpointId>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("kendall_tau needs equal rankings of size >= 2");
    auto ids = x;
    std::sort(ids.begin(), ids.end());
    TrialRankings t{{{0, x, {}}, {1, y, {}}}};
    t.validate();
    const auto pos = positions(t, ids);
    long long concordant_minus_discordant = 0;
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = i + 1; j < ids.size(); ++j)
            concordant_minus_discordant += ((pos[0][i] < pos[0][j]) == (pos[1][i] < pos[1][j])) ? 1 : -1;
    const double pairs = static_cast<double>(ids.size() * (ids.size() - 1)) / 2.0;
    return static_cast<double>(concordant_minus_discordant) / pairs;
}

double inter_run_agreement(const TrialRankings& trials) {
    require_runs(trials, 2, "inter_run_agreement");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < trials.runs.size(); ++r)
        for (std::size_t s = r + 1; s < trials.runs.size(); ++s) {
            sum += kendall_tau(trials.runs[r].ranking, trials.runs[s].ranking);
            ++n;
        }
    return sum / static_cast<double>(n);
}

CheckpointId modal_top1(const TrialRankings& trials) {
    require_runs(trials, 1, "top1_consistency");
    std::map<CheckpointId, std::size_t> counts;
    for (const auto& run : trials.runs) ++counts[run.ranking.front()];
    // std::map iterates ascending, so the first maximum is the smallest id.
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
        if (it->second > best->second) best = it;
    return best->first;
}

double top1_consistency(const TrialRankings& trials) {
    const auto modal = modal_top1(trials);
    std::size_t hits = 0;
    for (const auto& run : trials.runs) hits += run.ranking.front() == modal ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(trials.runs.size());
}

double score_std_dev(const TrialRankings& trials, const CheckpointId& checkpoint) {
    require_runs(trials, 2, "score_std_dev");
    std::vector<double> values;
    for (const auto& run : trials.runs) {
        auto it = run.scores.find(checkpoint);
        if (it == run.scores.end()) throw std::invalid_argument("no trial score for " + checkpoint.str());
        values.push_back(it->second);
    }
    return summarize(values).std_dev;
}

double agreement_with_subsampling(const std::map<CheckpointPair, double>& predicted, const TrialRankings& trials) {
    require_runs(trials, 1, "agreement_with_subsampling");
    const auto ids = trials.checkpoints();
    if (ids.size() < 2) throw std::invalid_argument("agreement_with_subsampling needs at least one checkpoint pair");
    const auto n_runs = trials.runs.size();
    std::size_t matches = 0, n_pairs = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = i + 1; j < ids.size(); ++j) {
            double p = 0.0;
            if (auto it = predicted.find({ids[i], ids[j]}); it != predicted.end()) p = it->second;
            else if (auto rit = predicted.find({ids[j], ids[i]}); rit != predicted.end()) p = 1.0 - rit->second;
            else throw std::invalid_argument("no prediction for pair " + ids[i].str() + "/" + ids[j].str());

            const auto i_above = runs_preferring(trials, ids[i], ids[j]);
            const int empirical = 2 * i_above > n_runs ? 1 : (2 * i_above < n_runs ? -1 : 0);
            const int predicted_dir = p > 0.5 ? 1 : (p < 0.5 ? -1 : 0);
            matches += empirical == predicted_dir ? 1 : 0;
            ++n_pairs;
        }
    }
    return static_cast<double>(matches) / static_cast<double>(n_pairs);
}

}  // namespace ckpt_arbiter
