#pragma once

// Domain types shared by every stage of the selection pipeline.

#include <compare>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace ckpt_arbiter {

// Opaque checkpoint identifier ("ckpt_2000"). Never parsed numerically.
class CheckpointId {
public:
    CheckpointId() = default;
    explicit CheckpointId(std::string id);

    const std::string& str() const noexcept { return id_; }
    bool empty() const noexcept { return id_.empty(); }

    auto operator<=>(const CheckpointId&) const = default;

private:
    std::string id_;
};

// Unordered pair key; `first` is the side whose preference P(first > second) is stored.
struct CheckpointPair {
    CheckpointId first;
    CheckpointId second;

    CheckpointPair reversed() const { return {second, first}; }
    auto operator<=>(const CheckpointPair&) const = default;
};

enum class OcrQuality { readable, ambiguous, unknown };
enum class JudgeMode { pointwise, listwise, pairwise };
enum class PairWinner { a, b, tie };
enum class PairSide { a, b };
enum class VerdictSource { judge, human };

std::string to_string(OcrQuality q);
std::string to_string(JudgeMode m);
std::string to_string(PairWinner w);
std::optional<OcrQuality> parse_ocr_quality(const std::string& s);
std::optional<JudgeMode> parse_judge_mode(const std::string& s);

struct EvaluationSample {
    std::string sample_id;
    std::string image_ref;
    std::string query;
    OcrQuality ocr_quality = OcrQuality::unknown;
    std::optional<std::string> language_tag;
    std::vector<std::string> tags;

    // Throws DataError when a required field is empty.
    void validate() const;
    bool operator==(const EvaluationSample&) const = default;
};

struct CandidateResponse {
    std::string sample_id;
    CheckpointId checkpoint_id;
    std::string text;  // may be empty

    bool operator==(const CandidateResponse&) const = default;
};

struct PointwiseVerdict {
    std::string sample_id;
    CheckpointId checkpoint_id;
    double score = 0.0;  // [0, 1]
    std::optional<std::string> rationale;

    void validate() const;
    bool operator==(const PointwiseVerdict&) const = default;
};

// One judged ranking of K candidates, best first. rank_scores holds the
// Borda points K - position (best gets K-1, worst gets 0).
struct ListwiseVerdict {
    std::string sample_id;
    std::vector<CheckpointId> ordering;
    std::vector<CheckpointId> presented_order;
    std::map<CheckpointId, double> rank_scores;

    static ListwiseVerdict from_ordering(std::string sample_id, std::vector<CheckpointId> ordering,
                                         std::vector<CheckpointId> presented_order);

    // Position of c in `ordering` (0 = best). Throws if absent.
    std::size_t position_of(const CheckpointId& c) const;
    void validate() const;
    bool operator==(const ListwiseVerdict&) const = default;
};

struct PairwiseVerdict {
    std::string sample_id;
    CheckpointId a;
    CheckpointId b;
    PairWinner winner = PairWinner::tie;
    PairSide presented_first = PairSide::a;
    VerdictSource source = VerdictSource::judge;
    std::optional<std::string> reviewer_id;
    std::optional<std::string> ticket_id;

    // Points credited to `who` (1 win, 0.5 tie, 0 loss). `who` must be a or b.
    double points_for(const CheckpointId& who) const;
    void validate() const;
    bool operator==(const PairwiseVerdict&) const = default;
};

using Verdict = std::variant<PointwiseVerdict, ListwiseVerdict, PairwiseVerdict>;

// Dense checkpoints x samples score table with an explicit missing mask.
class ScoreMatrix {
public:
    ScoreMatrix() = default;
    // All cells start missing.
    ScoreMatrix(std::vector<CheckpointId> checkpoints, std::vector<std::string> sample_ids);

    std::size_t n_checkpoints() const noexcept { return checkpoints_.size(); }
    std::size_t n_samples() const noexcept { return sample_ids_.size(); }
    const std::vector<CheckpointId>& checkpoints() const noexcept { return checkpoints_; }
    const std::vector<std::string>& sample_ids() const noexcept { return sample_ids_; }

    std::size_t row_of(const CheckpointId& c) const;
    std::size_t column_of(const std::string& sample_id) const;

    void set(std::size_t row, std::size_t col, double value);
    void clear(std::size_t row, std::size_t col);
    bool missing(std::size_t row, std::size_t col) const { return missing_[row * n_samples() + col] != 0; }
    double value(std::size_t row, std::size_t col) const { return scores_[row * n_samples() + col]; }

    // Non-missing values of a row in sample order.
    std::vector<double> row_values(std::size_t row) const;
    // Restriction to a subset of rows, preserving the given order.
    ScoreMatrix select_rows(const std::vector<CheckpointId>& rows) const;

    bool operator==(const ScoreMatrix&) const = default;

private:
    std::vector<CheckpointId> checkpoints_;
    std::vector<std::string> sample_ids_;
    std::vector<double> scores_;
    std::vector<unsigned char> missing_;
};

struct DuplicateResponse {
    CandidateResponse first;
    CandidateResponse second;
    bool operator==(const DuplicateResponse&) const = default;
};

struct ValidationReport {
    bool complete = false;
    std::vector<std::string> duplicate_sample_ids;
    std::vector<DuplicateResponse> duplicate_responses;
    std::vector<CandidateResponse> dangling_responses;
    std::vector<std::pair<std::string, CheckpointId>> missing_pairs;
    std::map<CheckpointId, std::size_t> coverage;  // responses per checkpoint

    std::size_t issue_count() const {
        return duplicate_sample_ids.size() + duplicate_responses.size() + dangling_responses.size() +
               missing_pairs.size();
    }
    bool operator==(const ValidationReport&) const = default;
};

// Checks id uniqueness, dangling references and (sample, checkpoint) coverage.
// The checkpoint set is every checkpoint named by some response.
ValidationReport validate_dataset(const std::vector<EvaluationSample>& samples,
                                  const std::vector<CandidateResponse>& responses);

// Sum of Borda points for a K-way ranking: K(K-1)/2.
constexpr double borda_total(std::size_t k) { return static_cast<double>(k * (k - 1)) / 2.0; }

}  // namespace ckpt_arbiter

template <>
struct std::hash<ckpt_arbiter::CheckpointId> {
    std::size_t operator()(const ckpt_arbiter::CheckpointId& c) const noexcept {
        return std::hash<std::string>{}(c.str());
    }
};
