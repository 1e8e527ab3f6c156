#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <map>
#include <set>
#include <thread>

#include "ckpt_arbiter/errors.hpp"
#include "ckpt_arbiter/judge.hpp"
#include "ckpt_arbiter/judge_backend.hpp"

using namespace ckpt_arbiter;

namespace {

const EvaluationSample kSample{"s1", "img/s1.png", "How many cups?", OcrQuality::readable, std::nullopt, {}};

CandidateResponse resp(const std::string& c, const std::string& text) { return {"s1", CheckpointId(c), text}; }

std::vector<CandidateResponse> four() {
    return {resp("c1", "one"), resp("c2", "two"), resp("c3", "three"), resp("c4", "four")};
}

LabelMap abc_map() {
    LabelMap m;
    m.sample_id = "s1";
    m.by_label = {{"A", CheckpointId("ckpt1")}, {"B", CheckpointId("ckpt2")}, {"C", CheckpointId("ckpt3")}};
    m.presented_order = {CheckpointId("ckpt1"), CheckpointId("ckpt2"), CheckpointId("ckpt3")};
    return m;
}

VerdictErrorKind kind_of(const std::string& raw, JudgeMode mode, const LabelMap& map) {
    try {
        parse_verdict(raw, mode, map);
    } catch (const VerdictParseError& e) {
        return e.kind();
    }
    FAIL("expected VerdictParseError");
    return VerdictErrorKind::unparseable;
}

struct ScriptedBackend : JudgeBackend {
    std::atomic<int> calls{0};
    int fail_first = 0;
    std::string complete(const JudgeRequest& r, const JudgeBackendConfig&) override {
        if (calls.fetch_add(1) < fail_first) throw JudgeBackendError(BackendFailureKind::timeout, "slow");
        return "reply:" + r.nonce;
    }
};

struct AlwaysFails : JudgeBackend {
    std::string complete(const JudgeRequest&, const JudgeBackendConfig&) override {
        throw JudgeBackendError(BackendFailureKind::transport, "down");
    }
};

JudgeBackendConfig fast_config() {
    JudgeBackendConfig c;
    c.endpoint = "http://127.0.0.1:1/judge";
    c.model_name = "m";
    c.backoff_initial = std::chrono::milliseconds(0);
    return c;
}

std::vector<JudgeRequest> requests(int n) {
    std::vector<JudgeRequest> out;
    for (int i = 0; i < n; ++i) {
        JudgeRequest r;
        r.nonce = "n" + std::to_string(i);
        out.push_back(r);
    }
    return out;
}

}  // namespace

TEST_CASE("default rubric has five equal weights") {
    const auto r = Rubric::default_rubric();
    REQUIRE(r.dimensions.size() == 5);
    for (const auto& d : r.dimensions) CHECK(d.weight == doctest::Approx(0.2));
    CHECK_NOTHROW(r.validate());
    auto bad = r;
    bad.dimensions[0].weight = 0.5;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("listwise blinding is a seeded permutation") {
    const auto a = build_request(JudgeMode::listwise, kSample, four(), Rubric::default_rubric(), 7);
    const auto b = build_request(JudgeMode::listwise, kSample, four(), Rubric::default_rubric(), 7);
    CHECK(a.label_map == b.label_map);
    CHECK(a.request == b.request);
    std::set<CheckpointId> mapped;
    for (const auto& [label, c] : a.label_map.by_label) mapped.insert(c);
    CHECK(mapped.size() == 4);
    REQUIRE(a.request.candidates.size() == 4);
    CHECK(a.request.candidates[0].label == "Response A");
    CHECK(a.request.candidates[3].label == "Response D");
}

TEST_CASE("prompts never contain checkpoint ids") {
    const auto a = build_request(JudgeMode::listwise, kSample, four(), Rubric::default_rubric(), 3);
    for (auto id : {"c1", "c2", "c3", "c4"}) CHECK(a.request.prompt_text.find(id) == std::string::npos);
    CHECK(a.request.prompt_text.find("How many cups?") != std::string::npos);
}

TEST_CASE("pairwise label A lands on each checkpoint about half the time") {
    int c1_first = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto r = build_request(JudgeMode::pairwise, kSample, {resp("c1", "x"), resp("c2", "y")},
                                     Rubric::default_rubric(), seed);
        c1_first += r.label_map.by_label.at("A") == CheckpointId("c1") ? 1 : 0;
    }
    CHECK(c1_first >= 35);
    CHECK(c1_first <= 65);
}

TEST_CASE("arity and foreign responses are request errors") {
    CHECK_THROWS_AS(build_request(JudgeMode::pointwise, kSample, {resp("c1", "x"), resp("c2", "y")},
                                  Rubric::default_rubric(), 0),
                    RequestError);
    CHECK_THROWS_AS(build_request(JudgeMode::pairwise, kSample, {resp("c1", "x")}, Rubric::default_rubric(), 0),
                    RequestError);
    CandidateResponse foreign{"other", CheckpointId("c2"), "y"};
    CHECK_THROWS_AS(build_request(JudgeMode::pairwise, kSample, {resp("c1", "x"), foreign}, Rubric::default_rubric(), 0),
                    RequestError);
}

TEST_CASE("listwise reply maps back through the label map") {
    const auto v = std::get<ListwiseVerdict>(parse_verdict(R"({"ranking":["B","A","C"]})", JudgeMode::listwise, abc_map()));
    CHECK(v.ordering == std::vector<CheckpointId>{CheckpointId("ckpt2"), CheckpointId("ckpt1"), CheckpointId("ckpt3")});
    CHECK(v.rank_scores.at(CheckpointId("ckpt2")) == 2.0);
    CHECK(v.rank_scores.at(CheckpointId("ckpt1")) == 1.0);
    CHECK(v.rank_scores.at(CheckpointId("ckpt3")) == 0.0);
}

TEST_CASE("reply text around the JSON object is tolerated") {
    const auto v = parse_verdict("Sure. ```json\n{\"ranking\":[\"Response C\",\"A\",\"B\"]}\n```", JudgeMode::listwise,
                                 abc_map());
    CHECK(std::get<ListwiseVerdict>(v).ordering.front() == CheckpointId("ckpt3"));
}

TEST_CASE("each failure class has its own kind") {
    LabelMap one;
    one.sample_id = "s1";
    one.by_label = {{"A", CheckpointId("c")}};
    one.presented_order = {CheckpointId("c")};
    CHECK(kind_of(R"({"score":1.3})", JudgeMode::pointwise, one) == VerdictErrorKind::out_of_range);
    CHECK(kind_of(R"({"ranking":["A","A","B"]})", JudgeMode::listwise, abc_map()) ==
          VerdictErrorKind::incomplete_ranking);
    CHECK(kind_of(R"({"ranking":["A","B","Z"]})", JudgeMode::listwise, abc_map()) == VerdictErrorKind::unknown_label);
    CHECK(kind_of("no json here", JudgeMode::listwise, abc_map()) == VerdictErrorKind::unparseable);
    CHECK(kind_of(R"({"verdict":"A"})", JudgeMode::pairwise, abc_map()) == VerdictErrorKind::unparseable);
}

TEST_CASE("format_reply inverts parse_verdict") {
    const auto req = build_request(JudgeMode::listwise, kSample, four(), Rubric::default_rubric(), 11);
    const std::vector<CheckpointId> order{CheckpointId("c3"), CheckpointId("c1"), CheckpointId("c4"), CheckpointId("c2")};
    const Verdict v = ListwiseVerdict::from_ordering("s1", order, req.label_map.presented_order);
    CHECK(std::get<ListwiseVerdict>(parse_verdict(format_reply(v, req.label_map), JudgeMode::listwise, req.label_map)) ==
          std::get<ListwiseVerdict>(v));
}

TEST_CASE("dual-order requests present each side first once") {
    const auto [ab, ba] =
        pairwise_both_orders(kSample, resp("c1", "x"), resp("c2", "y"), Rubric::default_rubric(), 5);
    CHECK(ab.label_map.presented_order.front() == CheckpointId("c1"));
    CHECK(ba.label_map.presented_order.front() == CheckpointId("c2"));
    CHECK(ab.request.nonce != ba.request.nonce);

    // Judge picks the first-presented answer both times: a symmetric split.
    const auto v1 = std::get<PairwiseVerdict>(parse_verdict(R"({"winner":"A"})", JudgeMode::pairwise, ab.label_map));
    const auto v2 = std::get<PairwiseVerdict>(parse_verdict(R"({"winner":"A"})", JudgeMode::pairwise, ba.label_map));
    CHECK(v1.presented_first == PairSide::a);
    CHECK(v2.presented_first == PairSide::b);
    CHECK(v1.points_for(CheckpointId("c1")) + v2.points_for(CheckpointId("c1")) == 1.0);

    // Judge picks c1 both times.
    const auto w2 = std::get<PairwiseVerdict>(parse_verdict(R"({"winner":"B"})", JudgeMode::pairwise, ba.label_map));
    CHECK(v1.winner == PairWinner::a);
    CHECK(w2.winner == PairWinner::a);
}

TEST_CASE("repair request keeps the candidates and changes the nonce") {
    const auto req = build_request(JudgeMode::pairwise, kSample, {resp("c1", "x"), resp("c2", "y")},
                                   Rubric::default_rubric(), 1);
    const auto fix = make_repair_request(req.request, "missing winner");
    CHECK(fix.candidates == req.request.candidates);
    CHECK(fix.nonce != req.request.nonce);
    CHECK(fix.prompt_text.find("missing winner") != std::string::npos);
    CHECK(request_to_json(fix).at("nonce") == fix.nonce);
}

TEST_CASE("batch of five succeeds in input order") {
    ScriptedBackend backend;
    auto cfg = fast_config();
    cfg.batch_size = 3;
    const auto out = submit_batch(cfg, backend, requests(5));
    REQUIRE(out.size() == 5);
    for (int i = 0; i < 5; ++i) {
        CHECK(out[i].ok());
        CHECK(*out[i].reply == "reply:n" + std::to_string(i));
        CHECK(out[i].attempts == 1);
    }
}

TEST_CASE("one retry recovers a transient failure") {
    ScriptedBackend backend;
    backend.fail_first = 1;
    auto cfg = fast_config();
    cfg.max_retries = 1;
    cfg.batch_size = 1;
    const auto out = submit_batch(cfg, backend, requests(1));
    CHECK(out[0].ok());
    CHECK(out[0].attempts == 2);
}

TEST_CASE("persistent failure records every attempt") {
    AlwaysFails backend;
    auto cfg = fast_config();
    cfg.max_retries = 2;
    const auto out = submit_batch(cfg, backend, requests(2));
    for (const auto& o : out) {
        CHECK_FALSE(o.ok());
        CHECK(o.attempts == 3);
        CHECK(o.failure == BackendFailureKind::transport);
    }
}

TEST_CASE("HTTP backend posts the prompt and returns the body") {
    httplib::Server server;
    std::string seen_auth, seen_model;
    server.Post("/judge", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        const auto body = nlohmann::json::parse(req.body);
        seen_model = body.at("model_name");
        res.set_content(R"({"winner":"tie"})", "application/json");
    });
    server.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpJudgeBackend backend("secret");
    auto cfg = fast_config();
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/judge";
    cfg.timeout = std::chrono::milliseconds(2000);
    JudgeRequest r;
    r.prompt_text = "p";
    r.nonce = "n";
    CHECK(backend.complete(r, cfg) == R"({"winner":"tie"})");
    CHECK(seen_auth == "Bearer secret");
    CHECK(seen_model == "m");

    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/broken";
    try {
        backend.complete(r, cfg);
        FAIL("expected JudgeBackendError");
    } catch (const JudgeBackendError& e) {
        CHECK(e.kind() == BackendFailureKind::bad_status);
    }
    server.stop();
    t.join();
}

TEST_CASE("counting backend tallies calls per mode") {
    ScriptedBackend inner;
    CountingBackend counter(inner);
    JudgeRequest r;
    r.mode = JudgeMode::listwise;
    counter.complete(r, fast_config());
    counter.complete(r, fast_config());
    r.mode = JudgeMode::pairwise;
    counter.complete(r, fast_config());
    CHECK(counter.calls(JudgeMode::listwise) == 2);
    CHECK(counter.calls(JudgeMode::pairwise) == 1);
    CHECK(counter.total_calls() == 3);
}
