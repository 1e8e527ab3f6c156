#pragma once

// Synthetic worlds with known checkpoint qualities and a noisy in-process
// judge, used to check the selection pipeline against ground truth.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "ckpt_arbiter/judge_backend.hpp"
#include "ckpt_arbiter/orchestrator.hpp"
#include "ckpt_arbiter/types.hpp"

namespace ckpt_arbiter {

struct WorldConfig {
    std::size_t n_checkpoints = 4;
    std::vector<double> true_qualities{0.70, 0.65, 0.60, 0.55};
    std::size_t n_samples = 200;
    double ambiguous_fraction = 0.0;
    double noise_sigma_readable = 0.1;
    double noise_sigma_ambiguous = 0.3;
    double tail_failure_prob = 0.0;
    double position_bias = 0.0;  // added to the first-presented candidate in comparisons
    std::uint64_t seed = 0;

    // Latent-model extensions (all zero reproduces the plain additive model).
    double latent_sigma = 0.0;             // per-(checkpoint, sample) latent jitter
    double difficulty_sigma = 0.0;         // per-sample difficulty shared by all checkpoints
    double calibration_sigma = 0.0;        // fixed per-checkpoint pointwise offset
    double calibration_drift_sigma = 0.0;  // per-session, per-checkpoint pointwise offset
    double shared_context_fraction = 0.0;  // share of noise variance that cancels when candidates are judged together
    double listwise_crowding = 0.0;        // comparative noise variance grows by this factor per candidate beyond two

    void validate() const;
    bool operator==(const WorldConfig&) const = default;
};

void to_json(nlohmann::json& j, const WorldConfig& c);
void from_json(const nlohmann::json& j, WorldConfig& c);

struct WorldLog {
    std::size_t tail_failures = 0;
    std::size_t ambiguous_samples = 0;
};

struct SyntheticWorld {
    WorldConfig config;
    std::vector<CheckpointId> checkpoints;
    std::vector<EvaluationSample> samples;
    std::vector<CandidateResponse> responses;
    std::vector<double> difficulty;            // per sample
    std::vector<double> latent;                // checkpoint-major, n_checkpoints x n_samples
    std::vector<unsigned char> tail_failed;    // same layout
    std::vector<double> calibration_offset;    // per checkpoint
    WorldLog log;

    double u(std::size_t checkpoint, std::size_t sample) const { return latent[checkpoint * samples.size() + sample]; }
    double sigma_for(std::size_t sample) const;
    std::size_t best_index() const;  // argmax true quality, ties to the lowest index
    const CheckpointId& best() const { return checkpoints[best_index()]; }
    double true_quality(const CheckpointId& c) const;
    std::size_t checkpoint_index(const CheckpointId& c) const;

    struct Locator {
        std::size_t checkpoint;
        std::size_t sample;
    };
    std::optional<Locator> locate(const std::string& response_text) const;

private:
    friend SyntheticWorld make_world(const WorldConfig& config);
    std::unordered_map<std::string, Locator> by_text_;
};

// Deterministic in config (including seed).
SyntheticWorld make_world(const WorldConfig& config);

// In-process judge over a world. Noise is a pure function of (session_seed,
// request nonce), so replies are reproducible and thread-safe; a new
// session_seed behaves like an independent judging session.
class SyntheticJudge : public JudgeBackend {
public:
    SyntheticJudge(const SyntheticWorld& world, std::uint64_t session_seed) : world_(world), session_(session_seed) {}
    std::string complete(const JudgeRequest& request, const JudgeBackendConfig& config) override;
    Verdict judge(const JudgeRequest& request) const;

private:
    double drift(std::size_t checkpoint) const;
    const SyntheticWorld& world_;
    std::uint64_t session_;
};

// Raw reply text for one request. Throws DataError for candidates the world does not know.
std::string synthetic_judge(const SyntheticWorld& world, const JudgeRequest& request, std::uint64_t session_seed = 0);

// Backend settings for in-process judging (no backoff, no endpoint).
JudgeBackendConfig in_process_backend_config();

struct MethodMetrics {
    double top1_consistency = 0.0;
    double flip_rate = 0.0;
    double inter_run_agreement = 0.0;
    double selection_error = 0.0;   // winner != true best
    double worst_case_error = 0.0;  // winner's true quality more than delta below the best
};

struct ExperimentOptions {
    std::size_t n_campaigns = 20;
    std::optional<std::size_t> subsample_size;  // samples per campaign; all when unset
    double worst_case_delta = 0.05;
    bool include_listwise = true;
    bool include_pipeline = false;
};

struct ExperimentMetrics {
    std::map<std::string, MethodMetrics> methods;  // pointwise_mean, pointwise_percentile, listwise_borda, pipeline
    double gaussian_vs_bootstrap_max_diff = 0.0;   // for the two best checkpoints, over campaigns
    std::size_t n_campaigns = 0;
};

void to_json(nlohmann::json& j, const MethodMetrics& m);
void to_json(nlohmann::json& j, const ExperimentMetrics& m);

// Campaign k judges a without-replacement subsample in its own judge session
// derived from (world seed, k).
ExperimentMetrics run_experiment(const SyntheticWorld& world, const PipelineConfig& config,
                                 const ExperimentOptions& options);

}  // namespace ckpt_arbiter
