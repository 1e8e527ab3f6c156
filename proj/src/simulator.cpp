#include "ckpt_arbiter/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "ckpt_arbiter/aggregate.hpp"
#include "ckpt_arbiter/confidence.hpp"
#include "ckpt_arbiter/digest.hpp"
#include "ckpt_arbiter/errors.hpp"
#include "ckpt_arbiter/json_io.hpp"
#include "ckpt_arbiter/kernels.hpp"
#include "ckpt_arbiter/rng.hpp"
#include "ckpt_arbiter/stability.hpp"

namespace ckpt_arbiter {
namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

std::string checkpoint_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_%02zu", i);
    return buf;
}

std::string sample_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%05zu", i);
    return buf;
}

}  // namespace

void WorldConfig::validate() const {
    if (n_checkpoints < 1) throw std::invalid_argument("world needs at least one checkpoint");
    if (true_qualities.size() != n_checkpoints)
        throw std::invalid_argument("true_qualities has " + std::to_string(true_qualities.size()) + " entries for " +
                                    std::to_string(n_checkpoints) + " checkpoints");
    for (double q : true_qualities)
        if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("true qualities must lie in [0,1]");
    if (n_samples < 1) throw std::invalid_argument("world needs at least one sample");
    if (!(ambiguous_fraction >= 0.0 && ambiguous_fraction <= 1.0))
        throw std::invalid_argument("ambiguous_fraction must lie in [0,1]");
    if (!(tail_failure_prob >= 0.0 && tail_failure_prob <= 1.0))
        throw std::invalid_argument("tail_failure_prob must lie in [0,1]");
    for (double s : {noise_sigma_readable, noise_sigma_ambiguous, latent_sigma, difficulty_sigma, calibration_sigma,
                     calibration_drift_sigma, listwise_crowding})
        if (!finite_nonneg(s)) throw std::invalid_argument("world sigmas must be finite and >= 0");
    if (noise_sigma_ambiguous < noise_sigma_readable)
        throw std::invalid_argument("noise_sigma_ambiguous must be >= noise_sigma_readable");
    if (!std::isfinite(position_bias)) throw std::invalid_argument("position_bias must be finite");
    if (!(shared_context_fraction >= 0.0 && shared_context_fraction < 1.0))
        throw std::invalid_argument("shared_context_fraction must lie in [0,1)");
}

void to_json(json& j, const WorldConfig& c) {
    j = json{{"n_checkpoints", c.n_checkpoints},
             {"true_qualities", c.true_qualities},
             {"n_samples", c.n_samples},
             {"ambiguous_fraction", c.ambiguous_fraction},
             {"noise_sigma_readable", c.noise_sigma_readable},
             {"noise_sigma_ambiguous", c.noise_sigma_ambiguous},
             {"tail_failure_prob", c.tail_failure_prob},
             {"position_bias", c.position_bias},
             {"seed", c.seed},
             {"latent_sigma", c.latent_sigma},
             {"difficulty_sigma", c.difficulty_sigma},
             {"calibration_sigma", c.calibration_sigma},
             {"calibration_drift_sigma", c.calibration_drift_sigma},
             {"shared_context_fraction", c.shared_context_fraction},
             {"listwise_crowding", c.listwise_crowding}};
}

void from_json(const json& j, WorldConfig& c) {
    if (!j.is_object()) throw DataError("world config must be a JSON object");
    try {
        if (j.contains("true_qualities")) {
            c.true_qualities = j.at("true_qualities").get<std::vector<double>>();
            c.n_checkpoints = c.true_qualities.size();
        }
        auto take = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        take("n_checkpoints", c.n_checkpoints);
        take("n_samples", c.n_samples);
        take("ambiguous_fraction", c.ambiguous_fraction);
        take("noise_sigma_readable", c.noise_sigma_readable);
        take("noise_sigma_ambiguous", c.noise_sigma_ambiguous);
        take("tail_failure_prob", c.tail_failure_prob);
        take("position_bias", c.position_bias);
        take("seed", c.seed);
        take("latent_sigma", c.latent_sigma);
        take("difficulty_sigma", c.difficulty_sigma);
        take("calibration_sigma", c.calibration_sigma);
        take("calibration_drift_sigma", c.calibration_drift_sigma);
        take("shared_context_fraction", c.shared_context_fraction);
        take("listwise_crowding", c.listwise_crowding);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("world config: ") + e.what());
    }
}

double SyntheticWorld::sigma_for(std::size_t sample) const {
    return samples.at(sample).ocr_quality == OcrQuality::readable ? config.noise_sigma_readable
                                                                  : config.noise_sigma_ambiguous;
}

std::size_t SyntheticWorld::best_index() const {
    const auto& q = config.true_qualities;
    return static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
}

std::size_t SyntheticWorld::checkpoint_index(const CheckpointId& c) const {
    const auto it = std::find(checkpoints.begin(), checkpoints.end(), c);
    if (it == checkpoints.end()) throw DataError("checkpoint not in world: " + c.str());
    return static_cast<std::size_t>(it - checkpoints.begin());
}

double SyntheticWorld::true_quality(const CheckpointId& c) const {
    return config.true_qualities[checkpoint_index(c)];
}

std::optional<SyntheticWorld::Locator> SyntheticWorld::locate(const std::string& response_text) const {
    const auto it = by_text_.find(response_text);
    if (it == by_text_.end()) return std::nullopt;
    return it->second;
}

SyntheticWorld make_world(const WorldConfig& config) {
    config.validate();
    SyntheticWorld w;
    w.config = config;
    const auto n = config.n_samples;
    const auto k = config.n_checkpoints;

    for (std::size_t c = 0; c < k; ++c) w.checkpoints.emplace_back(checkpoint_name(c));

    // Independent streams, so worlds differing in one knob share everything else.
    Rng amb_rng(derive_seed(config.seed, "ambiguity"));
    Rng diff_rng(derive_seed(config.seed, "difficulty"));
    Rng latent_rng(derive_seed(config.seed, "latent"));
    Rng tail_rng(derive_seed(config.seed, "tail"));
    Rng cal_rng(derive_seed(config.seed, "calibration"));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    amb_rng.shuffle(order);
    const auto n_ambiguous = static_cast<std::size_t>(std::llround(config.ambiguous_fraction * static_cast<double>(n)));
    std::vector<unsigned char> ambiguous(n, 0);
    for (std::size_t i = 0; i < n_ambiguous; ++i) ambiguous[order[i]] = 1;
    w.log.ambiguous_samples = n_ambiguous;

    for (std::size_t i = 0; i < n; ++i) {
        EvaluationSample s;
        s.sample_id = sample_name(i);
        s.image_ref = "synthetic://image/" + s.sample_id;
        s.query = "What does the text in image " + s.sample_id + " say?";
        s.ocr_quality = ambiguous[i] ? OcrQuality::ambiguous : OcrQuality::readable;
        w.samples.push_back(std::move(s));
        w.difficulty.push_back(diff_rng.normal(0.0, config.difficulty_sigma));
    }

    w.latent.resize(k * n);
    w.tail_failed.assign(k * n, 0);
    for (std::size_t c = 0; c < k; ++c) {
        w.calibration_offset.push_back(cal_rng.normal(0.0, config.calibration_sigma));
        for (std::size_t i = 0; i < n; ++i) {
            const double jitter = latent_rng.normal(0.0, config.latent_sigma);
            double u = clamp01(config.true_qualities[c] + w.difficulty[i] + jitter);
            if (tail_rng.bernoulli(config.tail_failure_prob)) {
                u = tail_rng.uniform(0.0, 0.2);
                w.tail_failed[c * n + i] = 1;
                ++w.log.tail_failures;
            }
            w.latent[c * n + i] = u;
        }
    }

    const auto token_seed = std::to_string(config.seed);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) {
            // Opaque text: the judge must not be able to read identities off it.
            auto text = "answer " + sha256_hex(token_seed + '/' + w.checkpoints[c].str() + '/' + w.samples[i].sample_id)
                                        .substr(0, 20);
            w.by_text_.emplace(text, SyntheticWorld::Locator{c, i});
            w.responses.push_back({w.samples[i].sample_id, w.checkpoints[c], std::move(text)});
        }
    }
    return w;
}

double SyntheticJudge::drift(std::size_t checkpoint) const {
    if (world_.config.calibration_drift_sigma == 0.0) return 0.0;
    Rng rng(derive_seed(session_, "drift/" + world_.checkpoints[checkpoint].str()));
    return rng.normal(0.0, world_.config.calibration_drift_sigma);
}

Verdict SyntheticJudge::judge(const JudgeRequest& request) const {
    if (request.candidates.empty()) throw DataError("judge request without candidates");
    std::vector<SyntheticWorld::Locator> where;
    for (const auto& cand : request.candidates) {
        const auto loc = world_.locate(cand.text);
        if (!loc) throw DataError("unknown candidate in request " + request.nonce);
        if (world_.samples[loc->sample].sample_id != request.sample.sample_id)
            throw DataError("candidate does not answer sample " + request.sample.sample_id);
        where.push_back(*loc);
    }
    const auto sample = where.front().sample;
    const double sigma = world_.sigma_for(sample);
    Rng rng(derive_seed(session_, request.nonce));

    std::vector<CheckpointId> presented;
    for (const auto& loc : where) presented.push_back(world_.checkpoints[loc.checkpoint]);

    if (request.mode == JudgeMode::pointwise) {
        if (where.size() != 1) throw DataError("pointwise request must carry one candidate");
        const auto c = where.front().checkpoint;
        const double score =
            clamp01(world_.u(c, sample) + rng.normal(0.0, sigma) + world_.calibration_offset[c] + drift(c));
        return PointwiseVerdict{request.sample.sample_id, presented.front(), score, std::string("synthetic")};
    }

    const double extra = where.size() > 2 ? static_cast<double>(where.size() - 2) : 0.0;
    const double crowding = 1.0 + world_.config.listwise_crowding * extra;
    const double comparative_sigma = sigma * std::sqrt((1.0 - world_.config.shared_context_fraction) * crowding);
    std::vector<double> value;
    for (std::size_t k = 0; k < where.size(); ++k) {
        double v = world_.u(where[k].checkpoint, sample) + rng.normal(0.0, comparative_sigma);
        if (k == 0) v += world_.config.position_bias;
        value.push_back(v);
    }

    if (request.mode == JudgeMode::listwise) {
        std::vector<std::size_t> idx(where.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return value[x] > value[y]; });
        std::vector<CheckpointId> ordering;
        for (auto i : idx) ordering.push_back(presented[i]);
        return ListwiseVerdict::from_ordering(request.sample.sample_id, std::move(ordering), presented);
    }

    if (where.size() != 2) throw DataError("pairwise request must carry two candidates");
    PairwiseVerdict v;
    v.sample_id = request.sample.sample_id;
    v.a = presented[0];
    v.b = presented[1];
    v.presented_first = PairSide::a;
    v.winner = value[0] > value[1] ? PairWinner::a : (value[0] < value[1] ? PairWinner::b : PairWinner::tie);
    return v;
}

std::string SyntheticJudge::complete(const JudgeRequest& request, const JudgeBackendConfig&) {
    const auto verdict = judge(request);
    LabelMap labels;
    labels.sample_id = request.sample.sample_id;
    for (std::size_t k = 0; k < request.candidates.size(); ++k) {
        const auto loc = world_.locate(request.candidates[k].text);
        labels.by_label.emplace(short_label(k), world_.checkpoints[loc->checkpoint]);
    }
    return format_reply(verdict, labels);
}

std::string synthetic_judge(const SyntheticWorld& world, const JudgeRequest& request, std::uint64_t session_seed) {
    SyntheticJudge judge(world, session_seed);
    return judge.complete(request, in_process_backend_config());
}

JudgeBackendConfig in_process_backend_config() {
    JudgeBackendConfig cfg;
    cfg.endpoint = "in-process";
    cfg.model_name = "synthetic";
    cfg.max_retries = 0;
    cfg.backoff_initial = std::chrono::milliseconds(0);
    cfg.batch_size = 1;
    return cfg;
}

void to_json(json& j, const MethodMetrics& m) {
    j = json{{"top1_consistency", m.top1_consistency},
             {"flip_rate", m.flip_rate},
             {"inter_run_agreement", m.inter_run_agreement},
             {"selection_error", m.selection_error},
             {"worst_case_error", m.worst_case_error}};
}

void to_json(json& j, const ExperimentMetrics& m) {
    json methods = json::object();
    for (const auto& [name, mm] : m.methods) methods[name] = mm;
    j = json{{"schema_version", kSchemaVersion},
             {"n_campaigns", m.n_campaigns},
             {"methods", methods},
             {"gaussian_vs_bootstrap_max_diff", m.gaussian_vs_bootstrap_max_diff}};
}

namespace {

struct MethodRuns {
    std::vector<std::map<CheckpointId, double>> scores;
    std::vector<CheckpointId> winners;
};

MethodMetrics summarize_method(const SyntheticWorld& world, const MethodRuns& runs, double delta) {
    MethodMetrics m;
    const auto& best = world.best();
    const double best_q = world.true_quality(best);
    std::size_t wrong = 0, bad = 0;
    for (const auto& w : runs.winners) {
        wrong += w != best ? 1 : 0;
        bad += world.true_quality(w) < best_q - delta ? 1 : 0;
    }
    const double n = static_cast<double>(runs.winners.size());
    m.selection_error = static_cast<double>(wrong) / n;
    m.worst_case_error = static_cast<double>(bad) / n;
    if (runs.scores.size() >= 2) {
        const auto trials = trials_from_scores(runs.scores);
        m.top1_consistency = top1_consistency(trials);
        m.flip_rate = flip_rate(trials);
        m.inter_run_agreement = inter_run_agreement(trials);
    } else {
        m.top1_consistency = 1.0;
        m.inter_run_agreement = 1.0;
    }
    return m;
}

}  // namespace

ExperimentMetrics run_experiment(const SyntheticWorld& world, const PipelineConfig& config,
                                 const ExperimentOptions& options) {
    config.validate();
    if (options.n_campaigns < 1) throw std::invalid_argument("experiment needs at least one campaign");
    if (world.checkpoints.size() < 2) throw std::invalid_argument("experiment needs at least two checkpoints");
    const auto n = world.samples.size();
    const auto m = std::min(options.subsample_size.value_or(n), n);
    if (m < 1) throw std::invalid_argument("subsample_size must be >= 1");

    const auto rubric = Rubric::default_rubric();
    const auto mean_agg = make_aggregator(AggregatorKind::mean);
    const auto pct_agg = make_aggregator(AggregatorKind::percentile, config.weights);
    const bool listwise_ok = options.include_listwise && world.checkpoints.size() <= kMaxListwiseCandidates;

    // Two best checkpoints by true quality, for the estimator comparison.
    std::vector<std::size_t> by_quality(world.checkpoints.size());
    std::iota(by_quality.begin(), by_quality.end(), std::size_t{0});
    std::stable_sort(by_quality.begin(), by_quality.end(), [&](std::size_t x, std::size_t y) {
        return world.config.true_qualities[x] > world.config.true_qualities[y];
    });

    std::map<std::string, MethodRuns> runs;
    ExperimentMetrics out;
    out.n_campaigns = options.n_campaigns;
    const auto campaign_root = derive_seed(world.config.seed, "campaign");

    for (std::size_t k = 0; k < options.n_campaigns; ++k) {
        const auto session = derive_seed(campaign_root, static_cast<std::uint64_t>(k));
        std::vector<std::size_t> subset(n);
        std::iota(subset.begin(), subset.end(), std::size_t{0});
        if (m < n) subset = kernels::draw_without_replacement(n, m, derive_seed(session, "subset"));

        SyntheticJudge judge(world, session);
        std::vector<std::string> ids;
        for (auto i : subset) ids.push_back(world.samples[i].sample_id);
        ScoreMatrix matrix(world.checkpoints, ids);
        for (std::size_t col = 0; col < subset.size(); ++col) {
            const auto i = subset[col];
            for (std::size_t c = 0; c < world.checkpoints.size(); ++c) {
                const auto req = build_request(JudgeMode::pointwise, world.samples[i],
                                               {world.responses[i * world.checkpoints.size() + c]}, rubric, session);
                const auto v = std::get<PointwiseVerdict>(judge.judge(req.request));
                matrix.set(c, col, v.score);
            }
        }
        for (const auto& [name, agg] : {std::pair{std::string("pointwise_mean"), &mean_agg},
                                        std::pair{std::string("pointwise_percentile"), &pct_agg}}) {
            auto scores = aggregate_rows(matrix, *agg);
            runs[name].winners.push_back(rank_from_scores(scores).front());
            runs[name].scores.push_back(std::move(scores));
        }

        const auto top = by_quality[0];
        const auto second = by_quality[1];
        const auto a = matrix.row_values(top);
        const auto b = matrix.row_values(second);
        if (a.size() >= 2) {
            try {
                auto rc = config.resample;
                rc.seed = derive_seed(session, "bootstrap");
                rc.replacement = true;
                const double g = gaussian_preference(summarize(a), summarize(b));
                const double boot = bootstrap_preference(a, b, rc, mean_agg);
                out.gaussian_vs_bootstrap_max_diff = std::max(out.gaussian_vs_bootstrap_max_diff, std::abs(g - boot));
            } catch (const std::domain_error&) {
                // Degenerate (noiseless, equal) pair: no comparison to make.
            }
        }

        if (listwise_ok) {
            std::vector<ListwiseVerdict> lists;
            for (auto i : subset) {
                std::vector<CandidateResponse> group(world.responses.begin() + static_cast<std::ptrdiff_t>(i * world.checkpoints.size()),
                                                     world.responses.begin() + static_cast<std::ptrdiff_t>((i + 1) * world.checkpoints.size()));
                const auto req = build_request(JudgeMode::listwise, world.samples[i], group, rubric, session);
                lists.push_back(std::get<ListwiseVerdict>(judge.judge(req.request)));
            }
            auto scores = borda_scores(lists);
            runs["listwise_borda"].winners.push_back(rank_from_scores(scores).front());
            runs["listwise_borda"].scores.push_back(std::move(scores));
        }

        if (options.include_pipeline) {
            PipelineInputs inputs;
            for (auto i : subset) {
                inputs.samples.push_back(world.samples[i]);
                for (std::size_t c = 0; c < world.checkpoints.size(); ++c)
                    inputs.responses.push_back(world.responses[i * world.checkpoints.size() + c]);
            }
            auto cfg = config;
            cfg.resample.seed = session;
            cfg.human_loop_enabled = false;
            auto backend_cfg = in_process_backend_config();
            const auto report = run_pipeline(inputs, judge, backend_cfg, cfg);
            runs["pipeline"].winners.push_back(report.winner);
        }
    }

    for (const auto& [name, r] : runs) out.methods[name] = summarize_method(world, r, options.worst_case_delta);
    return out;
}

}  // namespace ckpt_arbiter
