#pragma once

// Multi-stage checkpoint selection: pointwise filter, listwise ranking,
// pairwise refinement and human verification, gated by preference confidence.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ckpt_arbiter/aggregate.hpp"
#include "ckpt_arbiter/confidence.hpp"
#include "ckpt_arbiter/judge.hpp"
#include "ckpt_arbiter/judge_backend.hpp"
#include "ckpt_arbiter/types.hpp"

namespace ckpt_arbiter {

class AdjudicationQueue;

struct PipelineConfig {
    std::size_t top_k_after_pointwise = 6;
    AggregatorKind aggregator = AggregatorKind::mean;
    double finalize_threshold = 0.90;
    std::pair<double, double> near_tie_band{0.45, 0.55};
    ResampleConfig resample;
    ScoringWeights weights;
    bool human_loop_enabled = true;
    std::size_t max_pairwise_pairs = 3;
    std::optional<std::size_t> stage_sample_cap;
    double variance_escalation_threshold = 0.5;
    double judge_failure_abort_rate = 0.2;
    std::size_t stability_trials = 200;
    std::size_t human_samples_per_pair = 3;
    std::size_t max_verdicts_per_ticket = 5;

    void validate() const;
    bool in_band(double p) const { return p >= near_tie_band.first && p <= near_tie_band.second; }
    bool operator==(const PipelineConfig&) const = default;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
// Flat object; absent keys keep their defaults.
void from_json(const nlohmann::json& j, PipelineConfig& c);

enum class Stage { pointwise, listwise, pairwise, human };
enum class StageAction { finalize, escalate };
std::string to_string(Stage s);
std::string to_string(StageAction a);

struct StageDecision {
    Stage stage = Stage::pointwise;
    std::vector<CheckpointId> surviving;             // best first
    std::map<CheckpointPair, double> confidences;    // P(first > second)
    StageAction action = StageAction::escalate;
    std::string rationale;
    std::map<CheckpointId, double> scores;
    std::vector<CheckpointPair> escalated_pairs;
    bool operator==(const StageDecision&) const = default;
};

// Win points of `pair.first` on one sample, pooled over presentation orders
// and any human verdicts.
struct SampleEvidence {
    std::string sample_id;
    double a_points = 0.0;
    std::size_t n = 0;
    bool operator==(const SampleEvidence&) const = default;
};

struct PairEvidence {
    CheckpointPair pair;
    std::vector<SampleEvidence> per_sample;
    double rate() const;  // 0.5 when there is no evidence
    std::size_t total() const;
    bool operator==(const PairEvidence&) const = default;
};

struct HumanTicketRef {
    std::string ticket_id;
    std::string sample_id;
    CheckpointPair pair;
    std::size_t verdicts = 0;
    bool open = true;
    bool operator==(const HumanTicketRef&) const = default;
};

struct StageCallLog {
    std::size_t requests = 0;
    std::size_t attempts = 0;
    std::size_t repairs = 0;
    std::size_t failures = 0;
    bool operator==(const StageCallLog&) const = default;
};

struct StabilitySummary {
    double flip_rate = 0.0;
    double inter_run_agreement = 1.0;
    double top1_consistency = 1.0;
    std::size_t trials = 0;
    std::size_t subsample_size = 0;
    bool operator==(const StabilitySummary&) const = default;
};

struct SelectionReport {
    int schema_version = 1;
    CheckpointId winner;
    CheckpointId machine_winner;  // winner before any human evidence
    std::string status = "final";  // "final" | "provisional"
    std::vector<StageDecision> stages;
    std::optional<StabilitySummary> stability;
    std::vector<std::string> pending_human;
    std::vector<HumanTicketRef> tickets;
    std::vector<PairEvidence> pair_evidence;
    std::vector<CheckpointId> borda_order;
    bool human_machine_disagreement = false;
    std::map<std::string, StageCallLog> judge_calls;  // keyed by stage name
    PipelineConfig config_echo;
    bool operator==(const SelectionReport&) const = default;
};

void to_json(nlohmann::json& j, const StageDecision& d);
void from_json(const nlohmann::json& j, StageDecision& d);
void to_json(nlohmann::json& j, const SelectionReport& r);
void from_json(const nlohmann::json& j, SelectionReport& r);

// Aggregates every checkpoint and keeps the top K. Never finalizes.
StageDecision stage_pointwise_filter(const ScoreMatrix& matrix, const PipelineConfig& config);

// Borda ranking of the candidates every verdict ranks; finalizes when
// P(rank1 > rank2) >= finalize_threshold.
StageDecision stage_listwise(const std::vector<ListwiseVerdict>& verdicts, const PipelineConfig& config);

// Per-sample pairwise evidence; every (pair, sample) must have been judged in
// both presentation orders.
std::vector<PairEvidence> collect_pair_evidence(const std::vector<PairwiseVerdict>& verdicts,
                                                const std::vector<CheckpointPair>& pairs);

struct RefinementOutcome {
    StageDecision decision;
    CheckpointId winner;
    std::vector<CheckpointPair> low_confidence;  // oriented as in the evidence
    bool cycle = false;
};

// Decides from pooled evidence; `fallback_order` (listwise Borda order) settles
// unrefined pairs and cycles.
RefinementOutcome decide_refinement(const std::vector<PairEvidence>& evidence,
                                    const std::vector<CheckpointId>& fallback_order, const PipelineConfig& config,
                                    Stage stage = Stage::pairwise);

StageDecision stage_pairwise_refine(const std::vector<PairwiseVerdict>& verdicts,
                                    const std::vector<CheckpointPair>& pairs,
                                    const std::vector<CheckpointId>& fallback_order, const PipelineConfig& config);

// Sends a batch of blinded requests, repairs unparseable replies once and
// applies the failure-abort rule. Output order matches input order.
struct JudgeStageResult {
    std::vector<std::optional<Verdict>> verdicts;
    StageCallLog log;
};
JudgeStageResult run_judge_stage(const std::string& stage_name, const std::vector<BlindedRequest>& requests,
                                 JudgeBackend& backend, const JudgeBackendConfig& backend_config,
                                 double abort_rate);

struct PipelineInputs {
    std::vector<EvaluationSample> samples;
    std::vector<CandidateResponse> responses;
    Rubric rubric = Rubric::default_rubric();
};

// `queue` receives human tickets when the pipeline escalates past pairwise
// refinement and the human loop is enabled; may be null.
SelectionReport run_pipeline(const PipelineInputs& inputs, JudgeBackend& backend,
                             const JudgeBackendConfig& backend_config, const PipelineConfig& config,
                             AdjudicationQueue* queue = nullptr);

// Merges human verdicts into the pairwise evidence and re-decides. Throws
// UnknownTicketError for verdicts whose ticket the report does not know.
SelectionReport resolve_human_verdicts(const SelectionReport& report, const std::vector<PairwiseVerdict>& human);

}  // namespace ckpt_arbiter
