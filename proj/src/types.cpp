#include "ckpt_arbiter/types.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "ckpt_arbiter/errors.hpp"

namespace ckpt_arbiter {

CheckpointId::CheckpointId(std::string id) : id_(std::move(id)) {
    if (id_.empty()) throw DataError("checkpoint id must be non-empty");
}

std::string to_string(OcrQuality q) {
    switch (q) {
        case OcrQuality::readable: return "readable";
        case OcrQuality::ambiguous: return "ambiguous";
        case OcrQuality::unknown: return "unknown";
    }
    return "unknown";
}

std::string to_string(JudgeMode m) {
    switch (m) {
        case JudgeMode::pointwise: return "pointwise";
        case JudgeMode::listwise: return "listwise";
        case JudgeMode::pairwise: return "pairwise";
    }
    return "pointwise";
}

std::string to_string(PairWinner w) {
    switch (w) {
        case PairWinner::a: return "a";
        case PairWinner::b: return "b";
        case PairWinner::tie: return "tie";
    }
    return "tie";
}

std::optional<OcrQuality> parse_ocr_quality(const std::string& s) {
    if (s == "readable") return OcrQuality::readable;
    if (s == "ambiguous") return OcrQuality::ambiguous;
    if (s == "unknown") return OcrQuality::unknown;
    return std::nullopt;
}

std::optional<JudgeMode> parse_judge_mode(const std::string& s) {
    if (s == "pointwise") return JudgeMode::pointwise;
    if (s == "listwise") return JudgeMode::listwise;
    if (s == "pairwise") return JudgeMode::pairwise;
    return std::nullopt;
}

void EvaluationSample::validate() const {
    if (sample_id.empty()) throw DataError("sample_id must be non-empty");
    if (query.empty()) throw DataError("sample " + sample_id + ": query must be non-empty");
}

void PointwiseVerdict::validate() const {
    if (!(score >= 0.0 && score <= 1.0))
        throw DataError("pointwise score out of [0,1] for " + sample_id + "/" + checkpoint_id.str());
}

ListwiseVerdict ListwiseVerdict::from_ordering(std::string sample_id, std::vector<CheckpointId> ordering,
                                               std::vector<CheckpointId> presented_order) {
    ListwiseVerdict v;
    v.sample_id = std::move(sample_id);
    v.ordering = std::move(ordering);
    v.presented_order = std::move(presented_order);
    const auto k = v.ordering.size();
    for (std::size_t pos = 0; pos < k; ++pos)
        v.rank_scores[v.ordering[pos]] = static_cast<double>(k - (pos + 1));
    v.validate();
    return v;
}

std::size_t ListwiseVerdict::position_of(const CheckpointId& c) const {
    auto it = std::find(ordering.begin(), ordering.end(), c);
    if (it == ordering.end())
        throw std::invalid_argument("checkpoint " + c.str() + " absent from listwise verdict " + sample_id);
    return static_cast<std::size_t>(it - ordering.begin());
}

void ListwiseVerdict::validate() const {
    const auto k = ordering.size();
    if (k < 2) throw DataError("listwise verdict " + sample_id + " ranks fewer than 2 candidates");
    std::set<CheckpointId> ranked(ordering.begin(), ordering.end());
    std::set<CheckpointId> shown(presented_order.begin(), presented_order.end());
    if (ranked.size() != k || presented_order.size() != k || ranked != shown)
        throw DataError("listwise verdict " + sample_id + ": ordering is not a permutation of presented_order");
    if (rank_scores.size() != k)
        throw DataError("listwise verdict " + sample_id + ": rank_scores size mismatch");
    for (std::size_t pos = 0; pos < k; ++pos) {
        auto it = rank_scores.find(ordering[pos]);
        if (it == rank_scores.end() || it->second != static_cast<double>(k - (pos + 1)))
            throw DataError("listwise verdict " + sample_id + ": rank_scores violate the K - rank mapping");
    }
}

double PairwiseVerdict::points_for(const CheckpointId& who) const {
    if (who != a && who != b)
        throw std::invalid_argument(who.str() + " is not part of pairwise verdict " + sample_id);
    if (winner == PairWinner::tie) return 0.5;
    const auto& w = winner == PairWinner::a ? a : b;
    return w == who ? 1.0 : 0.0;
}

void PairwiseVerdict::validate() const {
    if (a.empty() || b.empty()) throw DataError("pairwise verdict " + sample_id + " has an empty checkpoint");
    if (a == b) throw DataError("pairwise verdict " + sample_id + " compares " + a.str() + " with itself");
}

ScoreMatrix::ScoreMatrix(std::vector<CheckpointId> checkpoints, std::vector<std::string> sample_ids)
    : checkpoints_(std::move(checkpoints)),
      sample_ids_(std::move(sample_ids)),
      scores_(checkpoints_.size() * sample_ids_.size(), 0.0),
      missing_(checkpoints_.size() * sample_ids_.size(), 1) {
    if (std::set<CheckpointId>(checkpoints_.begin(), checkpoints_.end()).size() != checkpoints_.size())
        throw DataError("score matrix: duplicate checkpoint ids");
    if (std::set<std::string>(sample_ids_.begin(), sample_ids_.end()).size() != sample_ids_.size())
        throw DataError("score matrix: duplicate sample ids");
}

std::size_t ScoreMatrix::row_of(const CheckpointId& c) const {
    auto it = std::find(checkpoints_.begin(), checkpoints_.end(), c);
    if (it == checkpoints_.end()) throw std::invalid_argument("score matrix has no row for " + c.str());
    return static_cast<std::size_t>(it - checkpoints_.begin());
}

std::size_t ScoreMatrix::column_of(const std::string& sample_id) const {
    auto it = std::find(sample_ids_.begin(), sample_ids_.end(), sample_id);
    if (it == sample_ids_.end()) throw std::invalid_argument("score matrix has no column for " + sample_id);
    return static_cast<std::size_t>(it - sample_ids_.begin());
}

void ScoreMatrix::set(std::size_t row, std::size_t col, double value) {
    if (!(value >= 0.0 && value <= 1.0)) throw DataError("score matrix cell outside [0,1]");
    const auto idx = row * n_samples() + col;
    scores_.at(idx) = value;
    missing_.at(idx) = 0;
}

void ScoreMatrix::clear(std::size_t row, std::size_t col) {
    const auto idx = row * n_samples() + col;
    scores_.at(idx) = 0.0;
    missing_.at(idx) = 1;
}

std::vector<double> ScoreMatrix::row_values(std::size_t row) const {
    std::vector<double> out;
    out.reserve(n_samples());
    for (std::size_t col = 0; col < n_samples(); ++col)
        if (!missing(row, col)) out.push_back(value(row, col));
    return out;
}

ScoreMatrix ScoreMatrix::select_rows(const std::vector<CheckpointId>& rows) const {
    ScoreMatrix out(rows, sample_ids_);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto src = row_of(rows[r]);
        for (std::size_t col = 0; col < n_samples(); ++col)
            if (!missing(src, col)) out.set(r, col, value(src, col));
    }
    return out;
}

ValidationReport validate_dataset(const std::vector<EvaluationSample>& samples,
                                  const std::vector<CandidateResponse>& responses) {
    ValidationReport report;

    std::map<std::string, std::size_t> sample_counts;
    for (const auto& s : samples) ++sample_counts[s.sample_id];
    for (const auto& [id, n] : sample_counts)
        if (n > 1) report.duplicate_sample_ids.push_back(id);

    // Canonical order makes the report independent of input record order.
    auto sorted = responses;
    std::sort(sorted.begin(), sorted.end(), [](const CandidateResponse& x, const CandidateResponse& y) {
        return std::tie(x.sample_id, x.checkpoint_id, x.text) < std::tie(y.sample_id, y.checkpoint_id, y.text);
    });

    std::set<CheckpointId> checkpoints;
    std::map<std::pair<std::string, CheckpointId>, std::size_t> pair_counts;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const auto& r = sorted[i];
        checkpoints.insert(r.checkpoint_id);
        ++report.coverage[r.checkpoint_id];
        if (!sample_counts.contains(r.sample_id)) report.dangling_responses.push_back(r);
        if (i > 0 && sorted[i - 1].sample_id == r.sample_id && sorted[i - 1].checkpoint_id == r.checkpoint_id)
            report.duplicate_responses.push_back({sorted[i - 1], r});
        ++pair_counts[{r.sample_id, r.checkpoint_id}];
    }

    for (const auto& [sample_id, n] : sample_counts) {
        (void)n;
        for (const auto& c : checkpoints)
            if (!pair_counts.contains({sample_id, c})) report.missing_pairs.emplace_back(sample_id, c);
    }

    report.complete = report.issue_count() == 0 && !checkpoints.empty();
    return report;
}

}  // namespace ckpt_arbiter
