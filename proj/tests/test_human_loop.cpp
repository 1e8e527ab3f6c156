#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <httplib.h>

#include "ckpt_arbiter/errors.hpp"
#include "ckpt_arbiter/human_loop.hpp"
#include "ckpt_arbiter/human_loop_server.hpp"
#include "ckpt_arbiter/json_io.hpp"

using namespace ckpt_arbiter;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("ckpt_arbiter_hl_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

AdjudicationItem item(const std::string& sample, const std::string& image = "img.png") {
    EvaluationSample s{sample, image, "what does the sign say?", OcrQuality::readable, std::nullopt, {}};
    return {s, {sample, CheckpointId("ckpt-a"), "OPEN " + sample}, {sample, CheckpointId("ckpt-b"), "CLOSED " + sample}};
}

std::vector<AdjudicationItem> three_items() { return {item("s1"), item("s2"), item("s3")}; }

}  // namespace

TEST_CASE("enqueue creates pending tickets and is idempotent") {
    AdjudicationQueue q;
    const auto ids = q.enqueue(three_items());
    REQUIRE(ids.size() == 3);
    CHECK(q.status_counts()[TicketStatus::pending] == 3);
    CHECK(q.enqueue({item("s2")}) == std::vector{ids[1]});
    CHECK(q.status_counts()[TicketStatus::pending] == 3);
    CHECK(ids[0] == make_ticket_id("s1", CheckpointId("ckpt-b"), CheckpointId("ckpt-a")));
}

TEST_CASE("enqueue rejects malformed items") {
    AdjudicationQueue q;
    auto bad = item("s1");
    bad.b.checkpoint_id = bad.a.checkpoint_id;
    CHECK_THROWS_AS(q.enqueue({bad}), DataError);
    bad = item("s1");
    bad.a.sample_id = "s9";
    CHECK_THROWS_AS(q.enqueue({bad}), DataError);
}

TEST_CASE("left/right assignment is balanced across seeds") {
    int a_left = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        AdjudicationQueue q(AdjudicationQueue::Options{seed, 5, std::nullopt});
        const auto id = q.enqueue({item("s1")}).front();
        a_left += q.ticket(id)->hidden_map.at("left") == CheckpointId("ckpt-a") ? 1 : 0;
    }
    CHECK(a_left >= 35);
    CHECK(a_left <= 65);
}

TEST_CASE("reviewers are served the oldest ticket they have not answered") {
    AdjudicationQueue q;
    CHECK_FALSE(q.next_ticket("r1").has_value());
    const auto ids = q.enqueue(three_items());
    const auto first = q.next_ticket("r1");
    REQUIRE(first);
    CHECK(first->ticket_id == ids[0]);
    CHECK(first->queue_depth == 3);
    CHECK(first->image_url == "/api/ticket/" + ids[0] + "/image");

    q.submit_verdict(ids[0], "r1", ReviewChoice::left);
    CHECK(q.next_ticket("r1")->ticket_id == ids[1]);
    CHECK(q.next_ticket("r2")->ticket_id == ids[0]);
    CHECK(q.next_ticket("r3")->ticket_id == ids[0]);
}

TEST_CASE("verdicts are unblinded through the hidden map") {
    AdjudicationQueue q;
    const auto id = q.enqueue({item("s1")}).front();
    const auto t = *q.ticket(id);

    const auto left = q.submit_verdict(id, "r1", ReviewChoice::left);
    const auto chosen = t.hidden_map.at("left");
    CHECK((left.winner == PairWinner::a ? left.a : left.b) == chosen);
    CHECK(left.source == VerdictSource::human);
    CHECK(left.ticket_id == id);
    CHECK(left.reviewer_id == "r1");

    const auto right = q.submit_verdict(id, "r2", ReviewChoice::right);
    CHECK((right.winner == PairWinner::a ? right.a : right.b) == t.hidden_map.at("right"));

    CHECK(q.submit_verdict(id, "r3", ReviewChoice::tie).winner == PairWinner::tie);
    CHECK_THROWS_AS(q.submit_verdict(id, "r1", ReviewChoice::right), ConflictError);
    CHECK_THROWS_AS(q.submit_verdict("t-missing", "r1", ReviewChoice::left), UnknownTicketError);
    CHECK(q.verdicts_for(id).size() == 3);
}

TEST_CASE("tickets stop being served at the verdict cap or when closed") {
    AdjudicationQueue q(AdjudicationQueue::Options{0, 2, std::nullopt});
    const auto ids = q.enqueue({item("s1"), item("s2")});
    q.submit_verdict(ids[0], "r1", ReviewChoice::left);
    q.submit_verdict(ids[0], "r2", ReviewChoice::left);
    CHECK(q.ticket(ids[0])->status == TicketStatus::answered);
    CHECK(q.next_ticket("r3")->ticket_id == ids[1]);
    q.close(ids[1]);
    CHECK_FALSE(q.next_ticket("r3").has_value());
    CHECK_THROWS_AS(q.close("t-missing"), UnknownTicketError);
}

TEST_CASE("expired tickets are not served") {
    AdjudicationQueue q(AdjudicationQueue::Options{0, 5, std::chrono::seconds(0)});
    q.enqueue({item("s1")});
    CHECK_FALSE(q.next_ticket("r1").has_value());
    CHECK(q.status_counts()[TicketStatus::expired] == 1);
}

TEST_CASE("a durable queue survives a restart") {
    const auto root = scratch_dir("durable");
    std::vector<std::string> ids;
    {
        AdjudicationQueue q(RunStore::open(root, "run1"), {});
        ids = q.enqueue(three_items());
        q.submit_verdict(ids[0], "r1", ReviewChoice::left);
        q.close(ids[2]);
    }
    AdjudicationQueue q(RunStore::open(root, "run1"), {});
    CHECK(q.verdicts().size() == 1);
    CHECK(q.verdicts_for(ids[0]).front().reviewer_id == "r1");
    CHECK(q.ticket(ids[2])->status == TicketStatus::answered);
    CHECK(q.next_ticket("r1")->ticket_id == ids[1]);
    CHECK_THROWS_AS(q.submit_verdict(ids[0], "r1", ReviewChoice::right), ConflictError);
    CHECK(q.enqueue({item("s4")}).size() == 1);
    CHECK(q.status_counts()[TicketStatus::pending] == 3);
}

TEST_CASE("ticket JSON round trip keeps the hidden map") {
    AdjudicationQueue q;
    const auto t = *q.ticket(q.enqueue({item("s1")}).front());
    const auto back = ticket_from_json(ticket_to_json(t));
    CHECK(back.ticket_id == t.ticket_id);
    CHECK(back.hidden_map == t.hidden_map);
    CHECK(back.pair == t.pair);
    CHECK(back.left_text == t.left_text);
}

namespace {

struct Served {
    AdjudicationQueue queue;
    std::unique_ptr<AdjudicationService> service;
    std::unique_ptr<httplib::Client> client;

    explicit Served(ServiceOptions opts = {}) {
        opts.port = 0;
        service = std::make_unique<AdjudicationService>(queue, opts);
        const int port = service->start();
        client = std::make_unique<httplib::Client>("127.0.0.1", port);
    }
    ~Served() { service->stop(); }

    httplib::Result post(const json& body) {
        return client->Post("/api/verdicts", body.dump(), "application/json");
    }
};

bool leaks_checkpoints(const std::string& body) {
    return body.find("ckpt-a") != std::string::npos || body.find("ckpt-b") != std::string::npos;
}

}  // namespace

TEST_CASE("GET /api/queue/next") {
    Served s;
    auto res = s.client->Get("/api/queue/next");
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(json::parse(res->body).contains("schema_version"));

    res = s.client->Get("/api/queue/next?reviewer=r1");
    REQUIRE(res);
    CHECK(res->status == 204);

    const auto ids = s.queue.enqueue(three_items());
    res = s.client->Get("/api/queue/next?reviewer=r1");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto body = json::parse(res->body);
    CHECK(body.at("ticket_id") == ids[0]);
    CHECK(body.at("queue_depth") == 3);
    CHECK(body.contains("schema_version"));
    CHECK(body.contains("left_text"));
    CHECK_FALSE(body.contains("hidden_map"));
    CHECK_FALSE(leaks_checkpoints(res->body));
}

TEST_CASE("POST /api/verdicts") {
    Served s;
    const auto id = s.queue.enqueue({item("s1")}).front();

    auto res = s.post({{"ticket_id", id}, {"reviewer_id", "r1"}, {"choice", "left"}});
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body).at("accepted") == true);
    CHECK_FALSE(leaks_checkpoints(res->body));
    CHECK(s.queue.verdicts_for(id).size() == 1);

    res = s.post({{"ticket_id", id}, {"reviewer_id", "r1"}, {"choice", "right"}});
    REQUIRE(res);
    CHECK(res->status == 409);

    res = s.post({{"ticket_id", "t-nope"}, {"reviewer_id", "r1"}, {"choice", "tie"}});
    REQUIRE(res);
    CHECK(res->status == 404);

    res = s.post({{"ticket_id", id}, {"reviewer_id", "r2"}, {"choice", "both"}});
    REQUIRE(res);
    CHECK(res->status == 400);

    res = s.post({{"ticket_id", id}, {"choice", "tie"}});
    REQUIRE(res);
    CHECK(res->status == 400);

    res = s.client->Post("/api/verdicts", "{not json", "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(json::parse(res->body).contains("schema_version"));
}

TEST_CASE("GET /api/status") {
    Served s;
    const auto ids = s.queue.enqueue(three_items());
    s.queue.close(ids[0]);
    auto res = s.client->Get("/api/status");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto body = json::parse(res->body);
    CHECK(body.at("counts").at("pending") == 2);
    CHECK(body.at("counts").at("answered") == 1);
    CHECK(body.at("counts").at("expired") == 0);
    CHECK(body.contains("schema_version"));
}

TEST_CASE("GET /api/ticket/<id>/image") {
    const auto dir = scratch_dir("images");
    {
        std::ofstream out(dir / "pic.png", std::ios::binary);
        out << "PNGDATA";
    }
    ServiceOptions opts;
    opts.image_root = dir;
    Served s(opts);
    const auto local = s.queue.enqueue({item("s1", "pic.png")}).front();
    const auto remote = s.queue.enqueue({item("s2", "https://example.org/x.jpg")}).front();
    const auto missing = s.queue.enqueue({item("s3", "absent.png")}).front();

    auto res = s.client->Get("/api/ticket/" + local + "/image");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body == "PNGDATA");
    CHECK(res->get_header_value("Content-Type") == "image/png");

    res = s.client->Get("/api/ticket/" + remote + "/image");
    REQUIRE(res);
    CHECK(res->status == 302);
    CHECK(res->get_header_value("Location") == "https://example.org/x.jpg");

    res = s.client->Get("/api/ticket/" + missing + "/image");
    REQUIRE(res);
    CHECK(res->status == 404);

    res = s.client->Get("/api/ticket/t-nope/image");
    REQUIRE(res);
    CHECK(res->status == 404);
}

TEST_CASE("bearer token guards the API") {
    ServiceOptions opts;
    opts.bearer_token = "sekrit";
    Served s(opts);
    s.queue.enqueue({item("s1")});

    auto res = s.client->Get("/api/status");
    REQUIRE(res);
    CHECK(res->status == 401);

    res = s.client->Get("/api/status", {{"Authorization", "Bearer wrong"}});
    REQUIRE(res);
    CHECK(res->status == 401);

    res = s.client->Get("/api/queue/next?reviewer=r1", {{"Authorization", "Bearer sekrit"}});
    REQUIRE(res);
    CHECK(res->status == 200);
}
