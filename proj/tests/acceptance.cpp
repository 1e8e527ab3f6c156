// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ckpt_arbiter/aggregate.hpp"
#include "ckpt_arbiter/confidence.hpp"
#include "ckpt_arbiter/json_io.hpp"
#include "ckpt_arbiter/judge.hpp"
#include "ckpt_arbiter/orchestrator.hpp"
#include "ckpt_arbiter/rng.hpp"
#include "ckpt_arbiter/simulator.hpp"
#include "oracles.hpp"

using namespace ckpt_arbiter;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

CheckpointId ck(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_%02zu", i);
    return CheckpointId(buf);
}

// Dyadic score in [0, 1]: k / 64, so sums and means are exact in binary.
double dyadic(Rng& rng) { return static_cast<double>(rng.index(65)) / 64.0; }

// Pointwise mean, Borda points, win rate and percentile score against brute force.
Outcome formula_exactness() {
    Rng rng(derive_seed(2024, "formula"));
    std::size_t mismatches = 0;
    const ScoringWeights w{0.5, 0.25};
    for (int inst = 0; inst < 1000; ++inst) {
        const auto k = 2 + rng.index(5);
        const auto n = 1 + rng.index(20);
        std::vector<CheckpointId> cks;
        for (std::size_t c = 0; c < k; ++c) cks.push_back(ck(c));
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i));

        // pointwise mean with missing cells
        ScoreMatrix m(cks, ids);
        std::vector<std::vector<double>> vals(k, std::vector<double>(n));
        std::vector<std::vector<bool>> miss(k, std::vector<bool>(n));
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t i = 0; i < n; ++i) {
                vals[c][i] = dyadic(rng);
                miss[c][i] = i > 0 && rng.bernoulli(0.2);
                if (!miss[c][i]) m.set(c, i, vals[c][i]);
            }
            if (pointwise_mean(m, cks[c]) != oracle::mean(vals[c], miss[c])) ++mismatches;
        }

        // Borda points
        std::vector<ListwiseVerdict> lists;
        std::map<std::string, double> totals;
        for (std::size_t i = 0; i < n; ++i) {
            auto order = cks;
            rng.shuffle(order);
            lists.push_back(ListwiseVerdict::from_ordering(ids[i], order, order));
            std::vector<std::string> names;
            for (const auto& c : order) names.push_back(c.str());
            for (const auto& [c, p] : oracle::borda_points(names)) totals[c] += p;
        }
        for (const auto& [c, s] : borda_scores(lists))
            if (s != totals[c.str()] / static_cast<double>(n)) ++mismatches;

        // win rate
        std::vector<PairwiseVerdict> pv;
        std::vector<std::string> outcomes;
        for (std::size_t i = 0; i < n; ++i) {
            PairwiseVerdict v;
            v.sample_id = ids[i];
            const bool flipped = rng.bernoulli(0.5);
            v.a = flipped ? cks[1] : cks[0];
            v.b = flipped ? cks[0] : cks[1];
            const auto r = rng.index(3);
            v.winner = r == 0 ? PairWinner::a : (r == 1 ? PairWinner::b : PairWinner::tie);
            const bool x_won = (v.winner == PairWinner::a) != flipped;
            outcomes.push_back(v.winner == PairWinner::tie ? "tie" : (x_won ? "x" : "y"));
            pv.push_back(v);
        }
        if (win_rate_from_pairwise(pv, cks[0], cks[1]).rate != oracle::win_rate(outcomes)) ++mismatches;

        // percentile score
        const auto row = vals[0];
        if (percentile_score(percentile_summary(row), w) != oracle::robust_score(row, w.beta, w.gamma)) ++mismatches;
    }
    return {mismatches == 0, std::to_string(mismatches) + " mismatches over 1000 instances"};
}

// Total Borda points of each checkpoint equal its pairwise wins inside the lists.
Outcome borda_identity() {
    Rng rng(derive_seed(2024, "borda"));
    std::size_t bad = 0;
    for (int set = 0; set < 500; ++set) {
        const auto k = 2 + rng.index(7);
        const auto n = 1 + rng.index(30);
        std::vector<CheckpointId> cks;
        for (std::size_t c = 0; c < k; ++c) cks.push_back(ck(c));
        std::vector<ListwiseVerdict> lists;
        for (std::size_t i = 0; i < n; ++i) {
            auto order = cks;
            rng.shuffle(order);
            lists.push_back(ListwiseVerdict::from_ordering("s" + std::to_string(i), order, cks));
        }
        const auto scores = borda_scores(lists);
        for (const auto& c : cks) {
            double wins = 0.0;
            for (const auto& o : cks)
                if (o != c) wins += win_rate_from_listwise(lists, c, o).wins;
            if (scores.at(c) != wins / static_cast<double>(n)) ++bad;
        }
    }
    return {bad == 0, std::to_string(bad) + " mismatches over 500 verdict sets"};
}

Outcome gaussian_vs_bootstrap() {
    int within = 0;
    double worst = 0.0;
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(derive_seed(seed, "iid"));
        std::vector<double> a(200), b(200);
        for (auto& x : a) x = rng.normal(0.51, 0.1);
        for (auto& x : b) x = rng.normal(0.50, 0.1);
        ResampleConfig rc;
        rc.n_resamples = 10000;
        rc.seed = static_cast<std::uint64_t>(seed);
        const double g = gaussian_preference(summarize(a), summarize(b));
        const double boot = bootstrap_preference(a, b, rc, make_aggregator(AggregatorKind::mean));
        const double d = std::abs(g - boot);
        worst = std::max(worst, d);
        within += d <= 0.03 ? 1 : 0;
    }
    return {within >= 19, std::to_string(within) + "/20 seeds within 0.03, max diff " + fmt("%.4f", worst)};
}

Outcome parametric_interval() {
    const auto [lo, hi] = parametric_ci(MomentSummary{0.8, 0.1, 100}, 0.95);
    const bool ok = std::abs(lo - 0.7804) <= 1e-4 && std::abs(hi - 0.8196) <= 1e-4;
    return {ok, fmt("(%.6f, %.6f)", lo, hi)};
}

// Curation: the same world with and without ambiguous samples.
Outcome curation_direction() {
    int flips = 0, agree = 0;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        WorldConfig wc;
        wc.n_checkpoints = 4;
        wc.true_qualities = {0.62, 0.60, 0.58, 0.56};
        wc.n_samples = 200;
        wc.noise_sigma_readable = 0.1;
        wc.noise_sigma_ambiguous = 0.3;
        wc.seed = derive_seed(rep, "curation");
        ExperimentOptions opt;
        opt.n_campaigns = 20;
        opt.subsample_size = 120;
        opt.include_listwise = false;
        PipelineConfig pc;
        wc.ambiguous_fraction = 0.0;
        const auto curated = run_experiment(make_world(wc), pc, opt).methods.at("pointwise_mean");
        wc.ambiguous_fraction = 0.6;
        const auto ambiguous = run_experiment(make_world(wc), pc, opt).methods.at("pointwise_mean");
        flips += curated.flip_rate < ambiguous.flip_rate ? 1 : 0;
        agree += curated.inter_run_agreement > ambiguous.inter_run_agreement ? 1 : 0;
    }
    return {flips >= 18 && agree >= 18, std::to_string(flips) + "/20 lower flip rate, " + std::to_string(agree) +
                                            "/20 higher inter-run agreement"};
}

WorldConfig near_tie_world(std::uint64_t seed) {
    WorldConfig wc;
    wc.n_checkpoints = 4;
    wc.true_qualities = {0.62, 0.60, 0.58, 0.56};
    wc.n_samples = 600;
    wc.noise_sigma_readable = 0.15;
    wc.noise_sigma_ambiguous = 0.45;
    wc.calibration_drift_sigma = 0.02;
    wc.shared_context_fraction = 0.5;
    wc.listwise_crowding = 0.25;
    wc.seed = seed;
    return wc;
}

// Listwise top-1 consistency beats pointwise in a near-tie world.
Outcome listwise_vs_pointwise() {
    int wins = 0;
    double mean_gap = 0.0;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        const auto world = make_world(near_tie_world(derive_seed(rep, "listwise_consistency")));
        ExperimentOptions opt;
        opt.n_campaigns = 30;
        const auto m = run_experiment(world, PipelineConfig{}, opt);
        const double gap = m.methods.at("listwise_borda").top1_consistency - m.methods.at("pointwise_mean").top1_consistency;
        mean_gap += gap / 20.0;
        wins += gap >= 0.15 ? 1 : 0;
    }
    return {wins >= 16, std::to_string(wins) + "/20 replications with gap >= 0.15, mean gap " + fmt("%.3f", mean_gap)};
}

double oriented(const std::map<CheckpointPair, double>& conf, const CheckpointId& a, const CheckpointId& b) {
    if (auto it = conf.find({a, b}); it != conf.end()) return it->second;
    if (auto it = conf.find({b, a}); it != conf.end()) return 1.0 - it->second;
    return std::nan("");
}

// Stage confidences for the true-best pair grow through the pipeline.
// Each seeded campaign averages the stage confidences over several judge sessions.
struct StageConfidences {
    double pointwise = 0.0, listwise = 0.0, pairwise = 0.0;
};

StageConfidences session_confidences(const SyntheticWorld& world, std::uint64_t session) {
    const auto rubric = Rubric::default_rubric();
    const auto k = world.checkpoints.size();
    const auto& best = world.checkpoints[0];
    const auto& second = world.checkpoints[1];
    const auto backend_cfg = in_process_backend_config();
    SyntheticJudge judge(world, session);
    PipelineConfig pc;
    pc.resample.seed = session;
    std::vector<std::string> ids;
    for (const auto& s : world.samples) ids.push_back(s.sample_id);
    ScoreMatrix matrix(world.checkpoints, ids);
    std::vector<ListwiseVerdict> lists;
    std::vector<PairwiseVerdict> pairs;
    for (std::size_t i = 0; i < world.samples.size(); ++i) {
        const auto& sample = world.samples[i];
        std::vector<CandidateResponse> group(world.responses.begin() + static_cast<std::ptrdiff_t>(i * k),
                                             world.responses.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
        for (std::size_t c = 0; c < k; ++c) {
            const auto req = build_request(JudgeMode::pointwise, sample, {group[c]}, rubric, session);
            matrix.set(c, i, std::get<PointwiseVerdict>(judge.judge(req.request)).score);
        }
        const auto lreq = build_request(JudgeMode::listwise, sample, group, rubric, session);
        lists.push_back(std::get<ListwiseVerdict>(
            parse_verdict(judge.complete(lreq.request, backend_cfg), JudgeMode::listwise, lreq.label_map)));
        const auto [ab, ba] = pairwise_both_orders(sample, group[0], group[1], rubric, session);
        for (const auto* r : {&ab, &ba})
            pairs.push_back(std::get<PairwiseVerdict>(
                parse_verdict(judge.complete(r->request, backend_cfg), JudgeMode::pairwise, r->label_map)));
    }
    const auto pw = stage_pointwise_filter(matrix, pc);
    const auto lw = stage_listwise(lists, pc);
    const auto pr = stage_pairwise_refine(pairs, {{best, second}}, lw.surviving, pc);
    return {oriented(pw.confidences, best, second), oriented(lw.confidences, best, second),
            oriented(pr.confidences, best, second)};
}

Outcome stage_confidence_order() {
    constexpr int kSessions = 16;
    int ordered = 0;
    StageConfidences overall;
    for (std::uint64_t camp = 0; camp < 20; ++camp) {
        WorldConfig wc = near_tie_world(derive_seed(camp, "stage_confidence"));
        wc.n_samples = 200;
        const auto world = make_world(wc);
        StageConfidences mean;
        for (int s = 0; s < kSessions; ++s) {
            const auto c = session_confidences(world, derive_seed(wc.seed, static_cast<std::uint64_t>(s) + 1));
            mean.pointwise += c.pointwise / kSessions;
            mean.listwise += c.listwise / kSessions;
            mean.pairwise += c.pairwise / kSessions;
        }
        overall.pointwise += mean.pointwise / 20.0;
        overall.listwise += mean.listwise / 20.0;
        overall.pairwise += mean.pairwise / 20.0;
        ordered += mean.pointwise <= mean.listwise && mean.listwise <= mean.pairwise ? 1 : 0;
    }
    return {ordered >= 16, std::to_string(ordered) + "/20 campaigns ordered; mean P " +
                               fmt("pointwise %.3f listwise %.3f pairwise %.3f", overall.pointwise,
                                   overall.listwise, overall.pairwise)};
}

// Percentile aggregation limits worst-case error under tail failures.
Outcome heavy_tail() {
    int ok = 0;
    double mean_err = 0.0, pct_err = 0.0;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        WorldConfig wc;
        wc.n_checkpoints = 6;
        wc.true_qualities = {0.70, 0.67, 0.64, 0.61, 0.58, 0.55};
        wc.n_samples = 200;
        wc.noise_sigma_readable = 0.05;
        wc.tail_failure_prob = 0.15;
        wc.seed = derive_seed(rep, "heavy_tail");
        ExperimentOptions opt;
        opt.n_campaigns = 50;
        opt.subsample_size = 20;
        opt.include_listwise = false;
        const auto m = run_experiment(make_world(wc), PipelineConfig{}, opt);
        const double pe = m.methods.at("pointwise_percentile").worst_case_error;
        const double me = m.methods.at("pointwise_mean").worst_case_error;
        mean_err += me / 20.0;
        pct_err += pe / 20.0;
        ok += pe <= me ? 1 : 0;
    }
    return {ok >= 16, std::to_string(ok) + "/20 replications; mean worst-case error percentile " +
                          fmt("%.3f vs mean %.3f", pct_err, mean_err)};
}

Outcome position_bias() {
    WorldConfig wc;
    wc.n_checkpoints = 2;
    wc.true_qualities = {0.6, 0.6};
    wc.n_samples = 1000;
    wc.position_bias = 0.3;
    wc.seed = 99;
    const auto world = make_world(wc);
    SyntheticJudge judge(world, 1);
    const auto rubric = Rubric::default_rubric();
    const auto cfg = in_process_backend_config();
    std::vector<PairwiseVerdict> dual, single;
    for (std::size_t i = 0; i < world.samples.size(); ++i) {
        const auto [ab, ba] =
            pairwise_both_orders(world.samples[i], world.responses[2 * i], world.responses[2 * i + 1], rubric, 7);
        const auto first = std::get<PairwiseVerdict>(
            parse_verdict(judge.complete(ab.request, cfg), JudgeMode::pairwise, ab.label_map));
        const auto second = std::get<PairwiseVerdict>(
            parse_verdict(judge.complete(ba.request, cfg), JudgeMode::pairwise, ba.label_map));
        single.push_back(first);
        dual.push_back(first);
        dual.push_back(second);
    }
    const double d = win_rate_from_pairwise(dual, world.checkpoints[0], world.checkpoints[1]).rate;
    const double s = win_rate_from_pairwise(single, world.checkpoints[0], world.checkpoints[1]).rate;
    return {std::abs(d - 0.5) <= 0.05 && s > 0.60, fmt("dual-order %.4f, single-order %.4f", d, s)};
}

WorldConfig toy_world() {
    WorldConfig wc;
    wc.n_checkpoints = 4;
    wc.true_qualities = {0.72, 0.70, 0.62, 0.55};
    wc.n_samples = 50;
    wc.noise_sigma_readable = 0.12;
    wc.noise_sigma_ambiguous = 0.36;
    wc.seed = 7;
    return wc;
}

PipelineConfig toy_config() {
    PipelineConfig pc;
    pc.top_k_after_pointwise = 4;
    pc.resample.n_resamples = 1000;
    pc.resample.subsample_size = 40;
    pc.resample.seed = 11;
    pc.stability_trials = 100;
    pc.max_pairwise_pairs = 2;
    return pc;
}

PipelineInputs inputs_of(const SyntheticWorld& world) {
    PipelineInputs in;
    in.samples = world.samples;
    in.responses = world.responses;
    return in;
}

Outcome determinism() {
    const auto world = make_world(toy_world());
    auto once = [&] {
        SyntheticJudge judge(world, 3);
        return nlohmann::json(run_pipeline(inputs_of(world), judge, in_process_backend_config(), toy_config())).dump();
    };
    const auto first = once();
    const auto second = once();
    return {first == second, std::to_string(first.size()) + " bytes, " + (first == second ? "identical" : "differ")};
}

Outcome call_budget() {
    const auto world = make_world(toy_world());
    SyntheticJudge inner(world, 3);
    CountingBackend judge(inner);
    const auto report = run_pipeline(inputs_of(world), judge, in_process_backend_config(), toy_config());
    const std::size_t n = world.samples.size(), k = world.checkpoints.size();
    std::size_t refined = 0;
    bool reached_pairwise = false;
    for (const auto& st : report.stages) {
        if (st.stage == Stage::listwise) refined = st.action == StageAction::escalate ? st.escalated_pairs.size() : 0;
        reached_pairwise = reached_pairwise || st.stage == Stage::pairwise;
    }
    const auto logged = [&](const char* s) {
        auto it = report.judge_calls.find(s);
        return it == report.judge_calls.end() ? std::size_t{0} : it->second.requests;
    };
    const bool ok = logged("pointwise") == n * k && judge.calls(JudgeMode::pointwise) == n * k &&
                    logged("listwise") == n && judge.calls(JudgeMode::listwise) == n &&
                    logged("pairwise") == 2 * n * refined && judge.calls(JudgeMode::pairwise) == 2 * n * refined &&
                    reached_pairwise && refined > 0;
    char buf[200];
    std::snprintf(buf, sizeof buf, "pointwise %zu (expect %zu), listwise %zu (expect %zu), pairwise %zu (expect %zu)",
                  judge.calls(JudgeMode::pointwise), n * k, judge.calls(JudgeMode::listwise), n,
                  judge.calls(JudgeMode::pairwise), 2 * n * refined);
    return {ok, buf};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"formula_exactness", formula_exactness},
        {"borda_pairwise_identity", borda_identity},
        {"gaussian_vs_bootstrap_agreement", gaussian_vs_bootstrap},
        {"parametric_ci", parametric_interval},
        {"curation_flip_rate_and_agreement", curation_direction},
        {"listwise_top1_consistency", listwise_vs_pointwise},
        {"stage_confidence_ordering", stage_confidence_order},
        {"heavy_tail_worst_case", heavy_tail},
        {"position_bias_mitigation", position_bias},
        {"determinism", determinism},
        {"pipeline_call_budget", call_budget},
    };
    const std::string only = argc > 1 ? argv[1] : "";
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        if (!only.empty() && name != only) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
