#include <doctest.h>

#include "ckpt_arbiter/errors.hpp"
#include "ckpt_arbiter/types.hpp"
#include "ckpt_arbiter/json_io.hpp"
#include "ckpt_arbiter/simulator.hpp"

using namespace ckpt_arbiter;

namespace {

WorldConfig small_world(std::uint64_t seed = 1) {
    WorldConfig c;
    c.n_samples = 40;
    c.seed = seed;
    return c;
}

BlindedRequest pair_request(const SyntheticWorld& w, std::size_t sample, std::size_t x, std::size_t y,
                            std::uint64_t seed) {
    const auto k = w.checkpoints.size();
    return pairwise_both_orders(w.samples[sample], w.responses[sample * k + x], w.responses[sample * k + y],
                                Rubric::default_rubric(), seed)
        .first;
}

}  // namespace

TEST_CASE("world config validation") {
    auto c = small_world();
    CHECK_NOTHROW(c.validate());
    c.true_qualities = {0.5};
    CHECK_THROWS(c.validate());
    c = small_world();
    c.noise_sigma_ambiguous = 0.05;
    CHECK_THROWS(c.validate());
    c = small_world();
    c.ambiguous_fraction = 1.5;
    CHECK_THROWS(c.validate());
    c = small_world();
    c.listwise_crowding = -0.1;
    CHECK_THROWS(c.validate());
}

TEST_CASE("world config JSON round trip") {
    auto c = small_world(9);
    c.tail_failure_prob = 0.1;
    c.listwise_crowding = 0.25;
    c.shared_context_fraction = 0.5;
    CHECK(json(c).get<WorldConfig>() == c);
}

TEST_CASE("worlds are complete, deterministic and blind") {
    const auto w = make_world(small_world(5));
    CHECK(w.samples.size() == 40);
    CHECK(w.responses.size() == 160);
    CHECK(validate_dataset(w.samples, w.responses).complete);
    for (const auto& s : w.samples) CHECK(s.ocr_quality == OcrQuality::readable);
    for (const auto& r : w.responses)
        CHECK(r.text.find(r.checkpoint_id.str()) == std::string::npos);

    const auto again = make_world(small_world(5));
    CHECK(again.responses == w.responses);
    CHECK(again.latent == w.latent);
    CHECK(make_world(small_world(6)).responses != w.responses);
    CHECK(w.best() == w.checkpoints[0]);
    CHECK(w.true_quality(w.checkpoints[2]) == 0.60);
}

TEST_CASE("ambiguous fraction and tail failures follow the config") {
    auto c = small_world();
    c.ambiguous_fraction = 0.25;
    const auto w = make_world(c);
    CHECK(w.log.ambiguous_samples == 10);
    std::size_t amb = 0;
    for (const auto& s : w.samples) amb += s.ocr_quality == OcrQuality::ambiguous ? 1 : 0;
    CHECK(amb == 10);

    WorldConfig t;
    t.n_checkpoints = 1;
    t.true_qualities = {0.8};
    t.n_samples = 10000;
    t.tail_failure_prob = 0.1;
    t.seed = 3;
    const auto tw = make_world(t);
    CHECK(tw.log.tail_failures >= 880);
    CHECK(tw.log.tail_failures <= 1120);
    for (std::size_t i = 0; i < 10000; ++i)
        if (tw.tail_failed[i]) CHECK(tw.u(0, i) <= 0.2);
}

TEST_CASE("noiseless judge reproduces the true ordering") {
    auto c = small_world();
    c.noise_sigma_readable = 0.0;
    c.noise_sigma_ambiguous = 0.0;
    const auto w = make_world(c);
    SyntheticJudge judge(w, 1);
    for (std::size_t i = 0; i < 10; ++i) {
        std::vector<CandidateResponse> group(w.responses.begin() + static_cast<long>(i * 4),
                                             w.responses.begin() + static_cast<long>(i * 4 + 4));
        const auto req = build_request(JudgeMode::listwise, w.samples[i], group, Rubric::default_rubric(), i);
        const auto reply = judge.complete(req.request, in_process_backend_config());
        const auto v = std::get<ListwiseVerdict>(parse_verdict(reply, JudgeMode::listwise, req.label_map));
        CHECK(v.ordering == w.checkpoints);

        const auto point = build_request(JudgeMode::pointwise, w.samples[i], {group[1]}, Rubric::default_rubric(), i);
        const auto pv = std::get<PointwiseVerdict>(judge.judge(point.request));
        CHECK(pv.score == doctest::Approx(w.u(1, i)));
    }
}

TEST_CASE("judge replies are a pure function of session and nonce") {
    const auto w = make_world(small_world());
    const auto req = build_request(JudgeMode::pointwise, w.samples[0], {w.responses[0]}, Rubric::default_rubric(), 3);
    SyntheticJudge a(w, 11), b(w, 11);
    CHECK(a.complete(req.request, in_process_backend_config()) == b.complete(req.request, in_process_backend_config()));
    CHECK(synthetic_judge(w, req.request, 11) == a.complete(req.request, in_process_backend_config()));
}

TEST_CASE("equal qualities split pairwise verdicts evenly") {
    WorldConfig c;
    c.n_checkpoints = 2;
    c.true_qualities = {0.6, 0.6};
    c.n_samples = 1000;
    c.seed = 2;
    const auto w = make_world(c);
    SyntheticJudge judge(w, 4);
    int first_wins = 0;
    for (std::size_t i = 0; i < 1000; ++i) {
        const auto req = pair_request(w, i, 0, 1, i);
        const auto v = std::get<PairwiseVerdict>(parse_verdict(judge.complete(req.request, in_process_backend_config()),
                                                               JudgeMode::pairwise, req.label_map));
        first_wins += v.winner == PairWinner::a ? 1 : 0;
    }
    CHECK(first_wins >= 450);
    CHECK(first_wins <= 550);
}

TEST_CASE("position bias favours the first-presented candidate") {
    WorldConfig c;
    c.n_checkpoints = 2;
    c.true_qualities = {0.6, 0.6};
    c.n_samples = 500;
    c.position_bias = 0.3;
    c.seed = 2;
    const auto w = make_world(c);
    SyntheticJudge judge(w, 4);
    int presented_first_wins = 0;
    for (std::size_t i = 0; i < 500; ++i) {
        const auto v = std::get<PairwiseVerdict>(judge.judge(pair_request(w, i, 0, 1, i).request));
        presented_first_wins += v.winner == PairWinner::a ? 1 : 0;
    }
    CHECK(presented_first_wins >= 450);
}

TEST_CASE("judge rejects requests it cannot locate") {
    const auto w = make_world(small_world());
    auto req = build_request(JudgeMode::pointwise, w.samples[0], {w.responses[0]}, Rubric::default_rubric(), 1);
    req.request.candidates[0].text = "something else";
    SyntheticJudge judge(w, 1);
    CHECK_THROWS_AS(judge.judge(req.request), DataError);

    auto wrong_sample = build_request(JudgeMode::pointwise, w.samples[0], {w.responses[0]}, Rubric::default_rubric(), 1);
    wrong_sample.request.sample = w.samples[1];
    CHECK_THROWS_AS(judge.judge(wrong_sample.request), DataError);
}

TEST_CASE("noiseless experiment has zero selection error") {
    auto c = small_world();
    c.noise_sigma_readable = 0.0;
    c.noise_sigma_ambiguous = 0.0;
    const auto w = make_world(c);
    PipelineConfig pc;
    pc.resample.n_resamples = 200;
    pc.resample.subsample_size = 10;
    pc.stability_trials = 5;
    ExperimentOptions opts;
    opts.n_campaigns = 4;
    opts.subsample_size = 20;
    opts.include_pipeline = true;
    const auto m = run_experiment(w, pc, opts);
    CHECK(m.n_campaigns == 4);
    for (const auto& name : {"pointwise_mean", "pointwise_percentile", "listwise_borda", "pipeline"}) {
        REQUIRE(m.methods.count(name) == 1);
        CHECK(m.methods.at(name).selection_error == 0.0);
        CHECK(m.methods.at(name).top1_consistency == 1.0);
    }
    const auto j = json(m);
    CHECK(j.at("schema_version") == kSchemaVersion);
    CHECK(j.at("methods").at("pointwise_mean").at("selection_error") == 0.0);
}

TEST_CASE("experiment options are checked") {
    const auto w = make_world(small_world());
    ExperimentOptions opts;
    opts.n_campaigns = 0;
    CHECK_THROWS(run_experiment(w, PipelineConfig{}, opts));
}
