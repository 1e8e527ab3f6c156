#include <doctest.h>

#include <algorithm>

#include "ckpt_arbiter/aggregate.hpp"
#include "ckpt_arbiter/rng.hpp"
#include "oracles.hpp"

using namespace ckpt_arbiter;

namespace {

CheckpointId id(const std::string& s) { return CheckpointId(s); }

ScoreMatrix one_row(const std::vector<double>& v) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < v.size(); ++i) ids.push_back("s" + std::to_string(i));
    ScoreMatrix m({id("c")}, ids);
    for (std::size_t i = 0; i < v.size(); ++i) m.set(0, i, v[i]);
    return m;
}

ListwiseVerdict list(const std::vector<std::string>& order) {
    std::vector<CheckpointId> o;
    for (const auto& s : order) o.push_back(id(s));
    return ListwiseVerdict::from_ordering("s", o, o);
}

PairwiseVerdict pv(const std::string& a, const std::string& b, PairWinner w) {
    return {"s", id(a), id(b), w};
}

}  // namespace

TEST_CASE("pointwise mean examples") {
    CHECK(pointwise_mean(one_row({0.5, 0.5, 0.5}), id("c")) == 0.5);
    CHECK(pointwise_mean(one_row({1.0, 0.0}), id("c")) == 0.5);
    CHECK(pointwise_mean(one_row({0.92, 0.88, 0.75, 0.85}), id("c")) == doctest::Approx(0.85).epsilon(1e-12));
}

TEST_CASE("pointwise mean skips missing cells") {
    auto m = one_row({0.2, 0.4, 0.9});
    m.clear(0, 2);
    CHECK(pointwise_mean(m, id("c")) == doctest::Approx(0.3));
}

TEST_CASE("borda examples") {
    const auto single = borda_scores({list({"c1", "c2", "c3"})});
    CHECK(single.at(id("c1")) == 2.0);
    CHECK(single.at(id("c2")) == 1.0);
    CHECK(single.at(id("c3")) == 0.0);

    const auto sym = borda_scores({list({"c1", "c2"}), list({"c2", "c1"})});
    CHECK(sym.at(id("c1")) == 0.5);
    CHECK(sym.at(id("c2")) == 0.5);

    // Three lists over four candidates, summed by hand:
    // a: 3+1+2 = 6, b: 2+3+0 = 5, c: 1+0+3 = 4, d: 0+2+1 = 3.
    const auto k4 = borda_scores({list({"a", "b", "c", "d"}), list({"b", "d", "a", "c"}), list({"c", "a", "d", "b"})});
    CHECK(k4.at(id("a")) == 2.0);
    CHECK(k4.at(id("b")) == doctest::Approx(5.0 / 3.0));
    CHECK(k4.at(id("c")) == doctest::Approx(4.0 / 3.0));
    CHECK(k4.at(id("d")) == 1.0);
}

TEST_CASE("borda rejects mixed candidate sets") {
    CHECK_THROWS(borda_scores({list({"a", "b"}), list({"a", "c"})}));
    CHECK_THROWS(borda_scores({}));
}

TEST_CASE("pairwise win rate examples") {
    std::vector<PairwiseVerdict> v;
    for (int i = 0; i < 6; ++i) v.push_back(pv("a", "b", PairWinner::a));
    for (int i = 0; i < 4; ++i) v.push_back(pv("b", "a", PairWinner::a));
    const auto e = win_rate_from_pairwise(v, id("a"), id("b"));
    CHECK(e.rate == doctest::Approx(0.6));
    CHECK(e.total == 10);
    CHECK(win_rate_from_pairwise(v, id("b"), id("a")).rate == doctest::Approx(0.4));

    const std::vector<PairwiseVerdict> ties(5, pv("a", "b", PairWinner::tie));
    CHECK(win_rate_from_pairwise(ties, id("a"), id("b")).rate == 0.5);
    CHECK_THROWS(win_rate_from_pairwise(v, id("a"), id("a")));
    CHECK_THROWS(win_rate_from_pairwise(v, id("a"), id("z")));
}

TEST_CASE("listwise win rate examples") {
    CHECK(win_rate_from_listwise({list({"a", "x", "b"})}, id("a"), id("b")).rate == 1.0);
    const auto e = win_rate_from_listwise({list({"a", "b"}), list({"b", "a"}), list({"a", "b"})}, id("a"), id("b"));
    CHECK(e.rate == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS(win_rate_from_listwise({list({"a", "b"})}, id("a"), id("a")));
}

TEST_CASE("percentile summary examples") {
    const std::vector<double> one{0.5};
    CHECK(percentile_summary(one) == PercentileSummary{0.5, 0.5, 0.5});
    const std::vector<double> two{0.0, 1.0};
    const auto s2 = percentile_summary(two);
    CHECK(s2.p20 == doctest::Approx(0.2));
    CHECK(s2.p50 == doctest::Approx(0.5));
    CHECK(s2.p80 == doctest::Approx(0.8));
    const std::vector<double> five{0.5, 0.1, 0.4, 0.2, 0.3};
    const auto s5 = percentile_summary(five);
    CHECK(s5.p20 == doctest::Approx(0.18));
    CHECK(s5.p50 == doctest::Approx(0.3));
    CHECK(s5.p80 == doctest::Approx(0.42));
    CHECK_THROWS(percentile_summary(std::vector<double>{}));
}

TEST_CASE("percentile score examples") {
    CHECK(percentile_score({0.7, 0.7, 0.7}, {0.9, 0.4}) == doctest::Approx(0.7));
    CHECK(percentile_score({0.6, 0.8, 0.9}, {0.5, 0.25}) == doctest::Approx(0.725));
    CHECK(percentile_score({0.1, 0.55, 0.95}, {0.0, 0.0}) == 0.55);
    CHECK_THROWS(ScoringWeights{-1.0, 0.0}.validate());
}

TEST_CASE("rank_from_scores orders by score then id") {
    CHECK(rank_from_scores({{id("c1"), 0.9}, {id("c2"), 0.8}}) == std::vector<CheckpointId>{id("c1"), id("c2")});
    CHECK(rank_from_scores({{id("b"), 0.5}, {id("a"), 0.5}}) == std::vector<CheckpointId>{id("a"), id("b")});
    CHECK_THROWS(rank_from_scores({}));
}

TEST_CASE("rank_from_scores matches a brute-force selection sort") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        std::map<CheckpointId, double> scores;
        for (int c = 0; c < 5; ++c) scores[id("c" + std::to_string(c))] = static_cast<double>(rng.index(4)) / 4.0;
        std::vector<std::pair<CheckpointId, double>> rest(scores.begin(), scores.end());
        std::vector<CheckpointId> expected;
        while (!rest.empty()) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < rest.size(); ++k) {
                const bool higher = rest[k].second > rest[best].second;
                const bool tie_smaller = rest[k].second == rest[best].second && rest[k].first < rest[best].first;
                if (higher || tie_smaller) best = k;
            }
            expected.push_back(rest[best].first);
            rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(best));
        }
        CHECK(rank_from_scores(scores) == expected);
    }
}

TEST_CASE("property: percentile matches the oracle and is bounded") {
    Rng rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> v(1 + rng.index(30));
        for (auto& x : v) x = rng.uniform();
        const double q = rng.uniform();
        const double p = percentile(v, q);
        CHECK(p == oracle::percentile(v, q));
        CHECK(p >= *std::min_element(v.begin(), v.end()));
        CHECK(p <= *std::max_element(v.begin(), v.end()));
    }
}

TEST_CASE("property: Borda points sum to K(K-1)/2 per list") {
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const auto k = 2 + rng.index(7);
        std::vector<std::string> names;
        for (std::size_t c = 0; c < k; ++c) names.push_back("c" + std::to_string(c));
        rng.shuffle(names);
        const auto v = list(names);
        double total = 0;
        for (const auto& [c, s] : v.rank_scores) total += s;
        CHECK(total == borda_total(k));
    }
}

TEST_CASE("property: win rate of (a,b) and (b,a) sum to one") {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<PairwiseVerdict> v;
        for (std::size_t i = 0; i < 1 + rng.index(20); ++i) {
            const auto r = rng.index(3);
            v.push_back(pv(rng.bernoulli(0.5) ? "a" : "b", "z", PairWinner::a));
            v.back().b = v.back().a == id("a") ? id("b") : id("a");
            v.back().winner = r == 0 ? PairWinner::a : (r == 1 ? PairWinner::b : PairWinner::tie);
        }
        CHECK(win_rate_from_pairwise(v, id("a"), id("b")).rate + win_rate_from_pairwise(v, id("b"), id("a")).rate ==
              doctest::Approx(1.0));
    }
}

TEST_CASE("aggregators applied to every row") {
    ScoreMatrix m({id("a"), id("b")}, {"s1", "s2", "s3"});
    for (std::size_t i = 0; i < 3; ++i) {
        m.set(0, i, 0.25 * static_cast<double>(i + 1));
        m.set(1, i, 0.5);
    }
    const auto means = aggregate_rows(m, make_aggregator(AggregatorKind::mean));
    CHECK(means.at(id("a")) == 0.5);
    const auto pct = aggregate_rows(m, make_aggregator(AggregatorKind::percentile, {0.0, 0.0}));
    CHECK(pct.at(id("a")) == 0.5);
    CHECK(parse_aggregator_kind("percentile") == AggregatorKind::percentile);
    CHECK_THROWS(parse_aggregator_kind("median"));
}
