#pragma once

// Rubric prompts, candidate blinding and structured verdict parsing.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ckpt_arbiter/types.hpp"

namespace ckpt_arbiter {

struct RubricDimension {
    std::string name;
    std::string description;
    double weight = 0.0;
    bool operator==(const RubricDimension&) const = default;
};

struct Rubric {
    std::vector<RubricDimension> dimensions;
    bool grounding_priority = true;
    std::string output_schema_version = "1";

    // Five equally weighted dimensions for multimodal visual question answering.
    static Rubric default_rubric();
    // Weights must be non-negative and sum to 1 when there are dimensions.
    void validate() const;
    bool operator==(const Rubric&) const = default;
};

struct BlindedCandidate {
    std::string label;  // "Response A"
    std::string text;
    bool operator==(const BlindedCandidate&) const = default;
};

struct JudgeRequest {
    JudgeMode mode = JudgeMode::pointwise;
    EvaluationSample sample;
    std::vector<BlindedCandidate> candidates;  // presentation order
    Rubric rubric;
    std::string nonce;
    std::string prompt_text;
    bool operator==(const JudgeRequest&) const = default;
};

// Server-side record that undoes the blinding of one request. Keys are the
// short labels the judge replies with ("A", "B", ...).
struct LabelMap {
    std::string sample_id;
    std::map<std::string, CheckpointId> by_label;
    std::vector<CheckpointId> presented_order;
    // Pairwise orientation: verdicts are reported as (pair_a, pair_b).
    std::optional<CheckpointId> pair_a;
    std::optional<CheckpointId> pair_b;
    bool operator==(const LabelMap&) const = default;
};

struct BlindedRequest {
    JudgeRequest request;
    LabelMap label_map;
};

constexpr std::size_t kMaxListwiseCandidates = 8;

std::string candidate_label(std::size_t index);  // 0 -> "Response A"
std::string short_label(std::size_t index);      // 0 -> "A"

// Candidates are put in canonical (checkpoint id) order and then shuffled with
// a seed-derived uniform permutation. For pairwise mode responses[0] becomes
// verdict side `a`.
BlindedRequest build_request(JudgeMode mode, const EvaluationSample& sample,
                             const std::vector<CandidateResponse>& responses, const Rubric& rubric,
                             std::uint64_t seed);

// Same pair presented A-first and B-first.
std::pair<BlindedRequest, BlindedRequest> pairwise_both_orders(const EvaluationSample& sample,
                                                               const CandidateResponse& resp_a,
                                                               const CandidateResponse& resp_b,
                                                               const Rubric& rubric, std::uint64_t seed);

// Throws VerdictParseError with a distinct kind per failure class.
Verdict parse_verdict(const std::string& raw, JudgeMode mode, const LabelMap& label_map);

// Inverse of parse_verdict: the reply a well-behaved judge would send.
std::string format_reply(const Verdict& verdict, const LabelMap& label_map);

// Re-prompt used once when a reply cannot be parsed.
JudgeRequest make_repair_request(const JudgeRequest& original, const std::string& problem);

nlohmann::json request_to_json(const JudgeRequest& request);

}  // namespace ckpt_arbiter
