#include "ckpt_arbiter/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ckpt_arbiter/errors.hpp"
#include "ckpt_arbiter/human_loop.hpp"
#include "ckpt_arbiter/json_io.hpp"
#include "ckpt_arbiter/rng.hpp"
#include "ckpt_arbiter/stability.hpp"

namespace ckpt_arbiter {
namespace {

std::string pair_label(const CheckpointPair& p) { return p.first.str() + " vs " + p.second.str(); }

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(4);
    os << x;
    return os.str();
}

CheckpointPair canonical(const CheckpointPair& p) { return p.first < p.second ? p : p.reversed(); }

ResampleConfig seeded(const PipelineConfig& config, const std::string& stream) {
    auto rc = config.resample;
    rc.seed = derive_seed(config.resample.seed, stream);
    rc.replacement = true;
    return rc;
}

// P(first > second) with the bootstrap moments, for paired per-sample values.
BootstrapResult paired_preference(const std::vector<double>& a, const std::vector<double>& b,
                                  const ResampleConfig& rc) {
    if (a.empty()) return {};
    if (a.size() == 1) {
        BootstrapResult r;
        r.mean_difference = a[0] - b[0];
        r.probability = r.mean_difference > 0 ? 1.0 : (r.mean_difference < 0 ? 0.0 : 0.5);
        r.n_resamples = 1;
        return r;
    }
    return bootstrap_difference(a, b, rc, mean_of);
}

BootstrapResult evidence_preference(const PairEvidence& ev, const PipelineConfig& config) {
    std::vector<double> a, b;
    for (const auto& s : ev.per_sample) {
        if (s.n == 0) continue;
        const double share = s.a_points / static_cast<double>(s.n);
        a.push_back(share);
        b.push_back(1.0 - share);
    }
    return paired_preference(a, b, seeded(config, "pairwise:" + ev.pair.first.str() + "|" + ev.pair.second.str()));
}

}  // namespace

void PipelineConfig::validate() const {
    if (top_k_after_pointwise < 2 || top_k_after_pointwise > kMaxListwiseCandidates)
        throw std::invalid_argument("top_k_after_pointwise must lie in [2, 8]");
    const auto [lo, hi] = near_tie_band;
    if (!(lo >= 0.0 && hi <= 1.0 && lo <= 0.5 && hi >= 0.5))
        throw std::invalid_argument("near_tie_band must lie in [0,1] and contain 0.5");
    if (!(finalize_threshold > hi && finalize_threshold <= 1.0))
        throw std::invalid_argument("finalize_threshold must exceed the near-tie band and be at most 1");
    if (max_pairwise_pairs < 1) throw std::invalid_argument("max_pairwise_pairs must be >= 1");
    if (resample.n_resamples < 1) throw std::invalid_argument("n_resamples must be >= 1");
    if (resample.subsample_size < 1) throw std::invalid_argument("subsample_size must be >= 1");
    if (stage_sample_cap && *stage_sample_cap < 1) throw std::invalid_argument("stage_sample_cap must be >= 1");
    if (!(variance_escalation_threshold >= 0.0)) throw std::invalid_argument("variance_escalation_threshold must be >= 0");
    if (!(judge_failure_abort_rate >= 0.0 && judge_failure_abort_rate <= 1.0))
        throw std::invalid_argument("judge_failure_abort_rate must lie in [0,1]");
    if (stability_trials < 2) throw std::invalid_argument("stability_trials must be >= 2");
    if (human_samples_per_pair < 1) throw std::invalid_argument("human_samples_per_pair must be >= 1");
    if (max_verdicts_per_ticket < 1) throw std::invalid_argument("max_verdicts_per_ticket must be >= 1");
    weights.validate();
}

void to_json(json& j, const PipelineConfig& c) {
    j = json{{"top_k_after_pointwise", c.top_k_after_pointwise},
             {"aggregator", to_string(c.aggregator)},
             {"finalize_threshold", c.finalize_threshold},
             {"near_tie_band", json::array({c.near_tie_band.first, c.near_tie_band.second})},
             {"n_resamples", c.resample.n_resamples},
             {"subsample_size", c.resample.subsample_size},
             {"seed", c.resample.seed},
             {"beta", c.weights.beta},
             {"gamma", c.weights.gamma},
             {"human_loop_enabled", c.human_loop_enabled},
             {"max_pairwise_pairs", c.max_pairwise_pairs},
             {"stage_sample_cap", c.stage_sample_cap ? json(*c.stage_sample_cap) : json(nullptr)},
             {"variance_escalation_threshold", c.variance_escalation_threshold},
             {"judge_failure_abort_rate", c.judge_failure_abort_rate},
             {"stability_trials", c.stability_trials},
             {"human_samples_per_pair", c.human_samples_per_pair},
             {"max_verdicts_per_ticket", c.max_verdicts_per_ticket}};
}

void from_json(const json& j, PipelineConfig& c) {
    if (!j.is_object()) throw DataError("pipeline config must be a JSON object");
    static const std::set<std::string> known{"top_k_after_pointwise", "aggregator", "finalize_threshold",
                                             "near_tie_band", "n_resamples", "subsample_size", "seed", "beta",
                                             "gamma", "human_loop_enabled", "max_pairwise_pairs",
                                             "stage_sample_cap", "variance_escalation_threshold",
                                             "judge_failure_abort_rate", "stability_trials",
                                             "human_samples_per_pair", "max_verdicts_per_ticket"};
    for (const auto& [key, value] : j.items())
        if (!known.contains(key)) throw DataError("unknown pipeline config key: " + key);
    auto take = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    try {
        take("top_k_after_pointwise", c.top_k_after_pointwise);
        if (j.contains("aggregator")) c.aggregator = parse_aggregator_kind(j.at("aggregator").get<std::string>());
        take("finalize_threshold", c.finalize_threshold);
        if (j.contains("near_tie_band")) {
            const auto& band = j.at("near_tie_band");
            if (!band.is_array() || band.size() != 2) throw DataError("near_tie_band must be [low, high]");
            c.near_tie_band = {band[0].get<double>(), band[1].get<double>()};
        }
        take("n_resamples", c.resample.n_resamples);
        take("subsample_size", c.resample.subsample_size);
        take("seed", c.resample.seed);
        take("beta", c.weights.beta);
        take("gamma", c.weights.gamma);
        take("human_loop_enabled", c.human_loop_enabled);
        take("max_pairwise_pairs", c.max_pairwise_pairs);
        if (j.contains("stage_sample_cap")) {
            const auto& cap = j.at("stage_sample_cap");
            c.stage_sample_cap = cap.is_null() ? std::nullopt : std::optional<std::size_t>(cap.get<std::size_t>());
        }
        take("variance_escalation_threshold", c.variance_escalation_threshold);
        take("judge_failure_abort_rate", c.judge_failure_abort_rate);
        take("stability_trials", c.stability_trials);
        take("human_samples_per_pair", c.human_samples_per_pair);
        take("max_verdicts_per_ticket", c.max_verdicts_per_ticket);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("pipeline config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("pipeline config: ") + e.what());
    }
}

std::string to_string(Stage s) {
    switch (s) {
        case Stage::pointwise: return "pointwise";
        case Stage::listwise: return "listwise";
        case Stage::pairwise: return "pairwise";
        case Stage::human: return "human";
    }
    return "pointwise";
}

std::string to_string(StageAction a) { return a == StageAction::finalize ? "finalize" : "escalate"; }

namespace {

Stage parse_stage(const std::string& s) {
    for (auto st : {Stage::pointwise, Stage::listwise, Stage::pairwise, Stage::human})
        if (to_string(st) == s) return st;
    throw DataError("unknown stage: " + s);
}

json scores_to_json(const std::map<CheckpointId, double>& m) {
    json out = json::object();
    for (const auto& [c, v] : m) out[c.str()] = v;
    return out;
}

std::map<CheckpointId, double> scores_from_json(const json& j) {
    std::map<CheckpointId, double> out;
    for (const auto& [k, v] : j.items()) out[CheckpointId(k)] = v.get<double>();
    return out;
}

}  // namespace

void to_json(json& j, const StageDecision& d) {
    j = json{{"stage", to_string(d.stage)},
             {"surviving", d.surviving},
             {"confidences", pair_map_to_json(d.confidences)},
             {"action", to_string(d.action)},
             {"rationale", d.rationale},
             {"scores", scores_to_json(d.scores)},
             {"escalated_pairs", d.escalated_pairs}};
}

void from_json(const json& j, StageDecision& d) {
    d.stage = parse_stage(j.at("stage").get<std::string>());
    d.surviving = j.at("surviving").get<std::vector<CheckpointId>>();
    d.confidences = pair_map_from_json(j.at("confidences"));
    d.action = j.at("action").get<std::string>() == "finalize" ? StageAction::finalize : StageAction::escalate;
    d.rationale = j.at("rationale").get<std::string>();
    d.scores = scores_from_json(j.at("scores"));
    d.escalated_pairs = j.at("escalated_pairs").get<std::vector<CheckpointPair>>();
}

void to_json(json& j, const SelectionReport& r) {
    json evidence = json::array();
    for (const auto& ev : r.pair_evidence) {
        json rows = json::array();
        for (const auto& s : ev.per_sample) rows.push_back({{"sample_id", s.sample_id}, {"a_points", s.a_points}, {"n", s.n}});
        evidence.push_back({{"pair", ev.pair}, {"per_sample", rows}});
    }
    json tickets = json::array();
    for (const auto& t : r.tickets)
        tickets.push_back({{"ticket_id", t.ticket_id},
                           {"sample_id", t.sample_id},
                           {"pair", t.pair},
                           {"verdicts", t.verdicts},
                           {"open", t.open}});
    json calls = json::object();
    for (const auto& [stage, log] : r.judge_calls)
        calls[stage] = {{"requests", log.requests},
                        {"attempts", log.attempts},
                        {"repairs", log.repairs},
                        {"failures", log.failures}};
    json stability = nullptr;
    if (r.stability)
        stability = {{"flip_rate", r.stability->flip_rate},
                     {"inter_run_agreement", r.stability->inter_run_agreement},
                     {"top1_consistency", r.stability->top1_consistency},
                     {"trials", r.stability->trials},
                     {"subsample_size", r.stability->subsample_size}};
    j = json{{"schema_version", r.schema_version},
             {"winner", r.winner},
             {"machine_winner", r.machine_winner},
             {"status", r.status},
             {"stages", r.stages},
             {"stability", stability},
             {"pending_human", r.pending_human},
             {"tickets", tickets},
             {"pair_evidence", evidence},
             {"borda_order", r.borda_order},
             {"human_machine_disagreement", r.human_machine_disagreement},
             {"judge_calls", calls},
             {"config_echo", r.config_echo}};
}

void from_json(const json& j, SelectionReport& r) {
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kSchemaVersion)
        throw DataError("unsupported selection report schema_version " + std::to_string(r.schema_version));
    r.winner = j.at("winner").get<CheckpointId>();
    r.machine_winner = j.at("machine_winner").get<CheckpointId>();
    r.status = j.at("status").get<std::string>();
    r.stages = j.at("stages").get<std::vector<StageDecision>>();
    r.stability.reset();
    if (const auto& s = j.at("stability"); !s.is_null())
        r.stability = StabilitySummary{s.at("flip_rate").get<double>(), s.at("inter_run_agreement").get<double>(),
                                       s.at("top1_consistency").get<double>(), s.at("trials").get<std::size_t>(),
                                       s.at("subsample_size").get<std::size_t>()};
    r.pending_human = j.at("pending_human").get<std::vector<std::string>>();
    r.tickets.clear();
    for (const auto& t : j.at("tickets"))
        r.tickets.push_back({t.at("ticket_id").get<std::string>(), t.at("sample_id").get<std::string>(),
                             t.at("pair").get<CheckpointPair>(), t.at("verdicts").get<std::size_t>(),
                             t.at("open").get<bool>()});
    r.pair_evidence.clear();
    for (const auto& e : j.at("pair_evidence")) {
        PairEvidence ev;
        ev.pair = e.at("pair").get<CheckpointPair>();
        for (const auto& s : e.at("per_sample"))
            ev.per_sample.push_back(
                {s.at("sample_id").get<std::string>(), s.at("a_points").get<double>(), s.at("n").get<std::size_t>()});
        r.pair_evidence.push_back(std::move(ev));
    }
    r.borda_order = j.at("borda_order").get<std::vector<CheckpointId>>();
    r.human_machine_disagreement = j.at("human_machine_disagreement").get<bool>();
    r.judge_calls.clear();
    for (const auto& [stage, log] : j.at("judge_calls").items())
        r.judge_calls[stage] = {log.at("requests").get<std::size_t>(), log.at("attempts").get<std::size_t>(),
                                log.at("repairs").get<std::size_t>(), log.at("failures").get<std::size_t>()};
    r.config_echo = j.at("config_echo").get<PipelineConfig>();
}

double PairEvidence::rate() const {
    double points = 0.0;
    std::size_t n = 0;
    for (const auto& s : per_sample) {
        points += s.a_points;
        n += s.n;
    }
    return n == 0 ? 0.5 : points / static_cast<double>(n);
}

std::size_t PairEvidence::total() const {
    std::size_t n = 0;
    for (const auto& s : per_sample) n += s.n;
    return n;
}

StageDecision stage_pointwise_filter(const ScoreMatrix& matrix, const PipelineConfig& config) {
    if (matrix.n_checkpoints() < 2) throw DataError("pointwise filter needs at least 2 checkpoints");
    const auto aggregator = make_aggregator(config.aggregator, config.weights);

    StageDecision d;
    d.stage = Stage::pointwise;
    d.action = StageAction::escalate;
    d.scores = aggregate_rows(matrix, aggregator);
    auto ranking = rank_from_scores(d.scores);
    const std::size_t keep = std::min(config.top_k_after_pointwise, ranking.size());
    d.surviving.assign(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(keep));

    // Paired bootstrap over samples judged for both checkpoints.
    for (std::size_t i = 0; i < d.surviving.size(); ++i) {
        for (std::size_t k = i + 1; k < d.surviving.size(); ++k) {
            const auto ra = matrix.row_of(d.surviving[i]);
            const auto rb = matrix.row_of(d.surviving[k]);
            std::vector<double> a, b;
            for (std::size_t col = 0; col < matrix.n_samples(); ++col) {
                if (matrix.missing(ra, col) || matrix.missing(rb, col)) continue;
                a.push_back(matrix.value(ra, col));
                b.push_back(matrix.value(rb, col));
            }
            const CheckpointPair p{d.surviving[i], d.surviving[k]};
            const auto rc = seeded(config, "pointwise:" + p.first.str() + "|" + p.second.str());
            d.confidences[p] = a.size() < 2 ? paired_preference(a, b, rc).probability
                                            : bootstrap_difference(a, b, rc, aggregator).probability;
        }
    }
    d.rationale = "pointwise " + to_string(config.aggregator) + " aggregation kept top " + std::to_string(keep) +
                  " of " + std::to_string(ranking.size()) + " checkpoints; pointwise scores never finalize";
    return d;
}

StageDecision stage_listwise(const std::vector<ListwiseVerdict>& verdicts, const PipelineConfig& config) {
    if (verdicts.empty()) throw DataError("listwise stage has no verdicts");
    std::set<CheckpointId> expected(verdicts.front().ordering.begin(), verdicts.front().ordering.end());
    for (const auto& v : verdicts) {
        v.validate();
        if (std::set<CheckpointId>(v.ordering.begin(), v.ordering.end()) != expected)
            throw DataError("listwise verdict coverage gap on sample " + v.sample_id);
    }
    if (expected.size() < 2) throw DataError("listwise stage needs at least 2 candidates");

    StageDecision d;
    d.stage = Stage::listwise;
    d.scores = borda_scores(verdicts);
    d.surviving = rank_from_scores(d.scores);

    std::map<CheckpointId, std::vector<double>> per_sample;
    for (const auto& v : verdicts)
        for (const auto& [c, s] : v.rank_scores) per_sample[c].push_back(s);

    std::map<CheckpointPair, BootstrapResult> results;
    for (std::size_t i = 0; i < d.surviving.size(); ++i) {
        for (std::size_t k = i + 1; k < d.surviving.size(); ++k) {
            const CheckpointPair p{d.surviving[i], d.surviving[k]};
            results[p] = paired_preference(per_sample[p.first], per_sample[p.second],
                                           seeded(config, "listwise:" + p.first.str() + "|" + p.second.str()));
            d.confidences[p] = results[p].probability;
        }
    }

    const CheckpointPair top{d.surviving[0], d.surviving[1]};
    const double p_top = d.confidences.at(top);
    if (p_top >= config.finalize_threshold) {
        d.action = StageAction::finalize;
        d.rationale = "listwise Borda leader " + top.first.str() + " beats " + top.second.str() + " with P=" +
                      fmt(p_top) + " >= " + fmt(config.finalize_threshold);
        return d;
    }

    d.action = StageAction::escalate;
    d.escalated_pairs.push_back(top);
    std::vector<std::pair<double, CheckpointPair>> band;
    for (const auto& [p, prob] : d.confidences)
        if (p != top && config.in_band(prob)) band.emplace_back(std::abs(prob - 0.5), p);
    auto rank_of = [&](const CheckpointId& c) {
        return std::find(d.surviving.begin(), d.surviving.end(), c) - d.surviving.begin();
    };
    std::stable_sort(band.begin(), band.end(), [&](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first < y.first;
        return std::pair(rank_of(x.second.first), rank_of(x.second.second)) <
               std::pair(rank_of(y.second.first), rank_of(y.second.second));
    });
    for (const auto& [dist, p] : band) {
        if (d.escalated_pairs.size() >= config.max_pairwise_pairs) break;
        d.escalated_pairs.push_back(p);
    }
    d.rationale = "listwise leader " + top.first.str() + " over " + top.second.str() + " has P=" + fmt(p_top) +
                  " < " + fmt(config.finalize_threshold) + "; refining " + std::to_string(d.escalated_pairs.size()) +
                  " pair(s)";
    return d;
}

std::vector<PairEvidence> collect_pair_evidence(const std::vector<PairwiseVerdict>& verdicts,
                                                const std::vector<CheckpointPair>& pairs) {
    std::vector<PairEvidence> out;
    std::set<CheckpointPair> seen;
    for (const auto& pair : pairs) {
        if (pair.first == pair.second) throw DataError("refined pair compares " + pair.first.str() + " with itself");
        if (!seen.insert(canonical(pair)).second) throw DataError("pair listed twice: " + pair_label(pair));
        std::map<std::string, SampleEvidence> by_sample;
        std::map<std::string, std::set<CheckpointId>> judge_first;
        for (const auto& v : verdicts) {
            if (!((v.a == pair.first && v.b == pair.second) || (v.a == pair.second && v.b == pair.first))) continue;
            auto& ev = by_sample[v.sample_id];
            ev.sample_id = v.sample_id;
            ev.a_points += v.points_for(pair.first);
            ev.n += 1;
            if (v.source == VerdictSource::judge)
                judge_first[v.sample_id].insert(v.presented_first == PairSide::a ? v.a : v.b);
        }
        for (const auto& [sample, firsts] : judge_first)
            if (firsts.size() < 2)
                throw DataError("missing dual-order verdicts for " + pair_label(pair) + " on sample " + sample);
        PairEvidence ev{pair, {}};
        for (auto& [sample, s] : by_sample) ev.per_sample.push_back(std::move(s));
        out.push_back(std::move(ev));
    }
    return out;
}

RefinementOutcome decide_refinement(const std::vector<PairEvidence>& evidence,
                                    const std::vector<CheckpointId>& fallback_order, const PipelineConfig& config,
                                    Stage stage) {
    if (fallback_order.empty()) throw DataError("pairwise refinement needs a fallback order");

    std::set<CheckpointId> members{fallback_order.front()};
    for (const auto& ev : evidence) {
        members.insert(ev.pair.first);
        members.insert(ev.pair.second);
    }
    std::vector<CheckpointId> contenders;
    for (const auto& c : fallback_order)
        if (members.erase(c)) contenders.push_back(c);
    contenders.insert(contenders.end(), members.begin(), members.end());
    auto position = [&](const CheckpointId& c) {
        return std::find(contenders.begin(), contenders.end(), c) - contenders.begin();
    };

    RefinementOutcome out;
    auto& d = out.decision;
    d.stage = stage;

    std::map<CheckpointPair, const PairEvidence*> by_key;
    std::map<CheckpointPair, BootstrapResult> boot;
    for (const auto& ev : evidence) {
        by_key[canonical(ev.pair)] = &ev;
        boot[ev.pair] = evidence_preference(ev, config);
        d.confidences[ev.pair] = boot[ev.pair].probability;
        d.scores[ev.pair.first] = 0.0;
        d.scores[ev.pair.second] = 0.0;
    }

    // Oriented P(x > y) for a refined pair, or nullopt.
    auto refined_p = [&](const CheckpointId& x, const CheckpointId& y) -> std::optional<double> {
        auto it = by_key.find(canonical({x, y}));
        if (it == by_key.end()) return std::nullopt;
        const double p = boot.at(it->second->pair).probability;
        return it->second->pair.first == x ? p : 1.0 - p;
    };
    auto beats = [&](const CheckpointId& x, const CheckpointId& y) {
        if (auto it = by_key.find(canonical({x, y})); it != by_key.end()) {
            const double r = it->second->rate();
            const double oriented = it->second->pair.first == x ? r : 1.0 - r;
            return oriented > 0.5;
        }
        return position(x) < position(y);
    };

    std::optional<CheckpointId> condorcet;
    for (const auto& x : contenders) {
        bool all = true;
        for (const auto& y : contenders)
            if (x != y && !beats(x, y)) all = false;
        if (all) {
            condorcet = x;
            break;
        }
    }
    // Copeland-style score (pairwise wins among contenders) for the report.
    for (const auto& x : contenders) {
        double wins = 0.0;
        for (const auto& y : contenders)
            if (x != y && beats(x, y)) wins += 1.0;
        d.scores[x] = wins;
    }

    for (const auto& ev : evidence) {
        const auto& b = boot.at(ev.pair);
        const bool high_variance =
            ev.total() > 0 && b.std_difference > config.variance_escalation_threshold * std::abs(b.mean_difference);
        if (config.in_band(b.probability) || high_variance) out.low_confidence.push_back(ev.pair);
    }

    bool confident = false;
    if (condorcet) {
        confident = true;
        for (const auto& y : contenders) {
            if (y == *condorcet) continue;
            if (auto p = refined_p(*condorcet, y); p && *p < config.finalize_threshold) confident = false;
        }
    }
    out.cycle = !condorcet;
    out.winner = condorcet ? *condorcet : contenders.front();

    d.surviving.push_back(out.winner);
    for (const auto& c : contenders)
        if (c != out.winner) d.surviving.push_back(c);

    std::string low_list;
    for (const auto& p : out.low_confidence) low_list += (low_list.empty() ? "" : ", ") + pair_label(p);

    if (condorcet && confident) {
        d.action = StageAction::finalize;
        d.rationale = out.winner.str() + " is undefeated with P >= " + fmt(config.finalize_threshold) +
                      " on every refined pair";
    } else if (config.human_loop_enabled && !out.low_confidence.empty()) {
        d.action = StageAction::escalate;
        d.escalated_pairs = out.low_confidence;
        d.rationale = "low-confidence pair(s) " + low_list + " sent to human review; provisional winner " +
                      out.winner.str() + (condorcet ? "" : " from listwise Borda order (no undefeated candidate)");
    } else {
        d.action = StageAction::finalize;
        if (condorcet)
            d.rationale = out.winner.str() + " finalized by pairwise win rate below the confidence threshold";
        else
            d.rationale = "no undefeated candidate (cycle or tie in win rates); falling back to listwise Borda order, winner " +
                          out.winner.str();
        if (!out.low_confidence.empty()) d.rationale += "; unresolved near-tie pair(s): " + low_list;
    }
    return out;
}

StageDecision stage_pairwise_refine(const std::vector<PairwiseVerdict>& verdicts,
                                    const std::vector<CheckpointPair>& pairs,
                                    const std::vector<CheckpointId>& fallback_order, const PipelineConfig& config) {
    if (pairs.empty()) throw DataError("pairwise refinement needs at least one pair");
    return decide_refinement(collect_pair_evidence(verdicts, pairs), fallback_order, config).decision;
}

JudgeStageResult run_judge_stage(const std::string& stage_name, const std::vector<BlindedRequest>& requests,
                                 JudgeBackend& backend, const JudgeBackendConfig& backend_config, double abort_rate) {
    JudgeStageResult out;
    out.verdicts.resize(requests.size());
    out.log.requests = requests.size();
    if (requests.empty()) return out;

    std::vector<JudgeRequest> first;
    first.reserve(requests.size());
    for (const auto& r : requests) first.push_back(r.request);
    const auto outcomes = submit_batch(backend_config, backend, first);

    std::size_t transport = 0;
    std::size_t unparseable = 0;
    std::vector<std::size_t> repair_index;
    std::vector<JudgeRequest> repairs;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        out.log.attempts += static_cast<std::size_t>(outcomes[i].attempts);
        if (!outcomes[i].ok()) {
            ++transport;
            continue;
        }
        try {
            out.verdicts[i] = parse_verdict(*outcomes[i].reply, requests[i].request.mode, requests[i].label_map);
        } catch (const VerdictParseError& e) {
            repair_index.push_back(i);
            repairs.push_back(make_repair_request(requests[i].request, e.what()));
        }
    }
    if (!repairs.empty()) {
        out.log.repairs = repairs.size();
        const auto second = submit_batch(backend_config, backend, repairs);
        for (std::size_t k = 0; k < second.size(); ++k) {
            const auto i = repair_index[k];
            out.log.attempts += static_cast<std::size_t>(second[k].attempts);
            if (!second[k].ok()) {
                ++transport;
                continue;
            }
            try {
                out.verdicts[i] = parse_verdict(*second[k].reply, requests[i].request.mode, requests[i].label_map);
            } catch (const VerdictParseError&) {
                ++unparseable;
            }
        }
    }
    out.log.failures = transport + unparseable;
    const double rate = static_cast<double>(out.log.failures) / static_cast<double>(requests.size());
    if (rate > abort_rate) {
        const std::string msg = stage_name + " stage aborted: " + std::to_string(out.log.failures) + " of " +
                                std::to_string(requests.size()) + " judge requests failed";
        if (transport > unparseable) throw JudgeBackendError(BackendFailureKind::transport, msg);
        throw DataQualityError(msg);
    }
    return out;
}

namespace {

using ResponseIndex = std::map<std::pair<std::string, CheckpointId>, const CandidateResponse*>;

const CandidateResponse& response_for(const ResponseIndex& index, const std::string& sample, const CheckpointId& c) {
    auto it = index.find({sample, c});
    if (it == index.end()) throw DataError("no response from " + c.str() + " for sample " + sample);
    return *it->second;
}

StabilitySummary stability_of(const ScoreMatrix& matrix, const PipelineConfig& config) {
    const std::size_t n = matrix.n_samples();
    ResampleConfig rc;
    rc.n_resamples = config.stability_trials;
    rc.subsample_size = std::min(config.resample.subsample_size, std::max<std::size_t>(1, (4 * n) / 5));
    rc.seed = derive_seed(config.resample.seed, "stability");
    rc.replacement = false;
    const auto trials = subsample_trials(matrix, rc, make_aggregator(config.aggregator, config.weights));
    return {flip_rate(trials), inter_run_agreement(trials), top1_consistency(trials), rc.n_resamples,
            rc.subsample_size};
}

}  // namespace

SelectionReport run_pipeline(const PipelineInputs& inputs, JudgeBackend& backend,
                             const JudgeBackendConfig& backend_config, const PipelineConfig& config,
                             AdjudicationQueue* queue) {
    config.validate();
    const auto validation = validate_dataset(inputs.samples, inputs.responses);
    if (!validation.complete)
        throw DataError("dataset is not complete: " + std::to_string(validation.issue_count()) + " issue(s)");

    std::vector<EvaluationSample> samples = inputs.samples;
    if (config.stage_sample_cap && samples.size() > *config.stage_sample_cap) samples.resize(*config.stage_sample_cap);
    if (samples.empty()) throw DataError("no samples to evaluate");

    std::vector<CheckpointId> checkpoints;
    for (const auto& [c, count] : validation.coverage) checkpoints.push_back(c);
    if (checkpoints.size() < 2) throw DataError("selection needs at least 2 checkpoints");

    ResponseIndex index;
    for (const auto& r : inputs.responses) index[{r.sample_id, r.checkpoint_id}] = &r;
    const auto seed = config.resample.seed;

    SelectionReport report;
    report.config_echo = config;

    // Pointwise: one request per (sample, checkpoint).
    std::vector<BlindedRequest> requests;
    for (const auto& s : samples)
        for (const auto& c : checkpoints)
            requests.push_back(build_request(JudgeMode::pointwise, s, {response_for(index, s.sample_id, c)},
                                             inputs.rubric, derive_seed(seed, "pointwise")));
    auto pointwise = run_judge_stage("pointwise", requests, backend, backend_config, config.judge_failure_abort_rate);
    report.judge_calls["pointwise"] = pointwise.log;

    std::vector<std::string> sample_ids;
    for (const auto& s : samples) sample_ids.push_back(s.sample_id);
    ScoreMatrix matrix(checkpoints, sample_ids);
    for (const auto& v : pointwise.verdicts) {
        if (!v) continue;
        const auto& pv = std::get<PointwiseVerdict>(*v);
        matrix.set(matrix.row_of(pv.checkpoint_id), matrix.column_of(pv.sample_id), pv.score);
    }
    report.stages.push_back(stage_pointwise_filter(matrix, config));
    const auto survivors = report.stages.back().surviving;
    report.stability = stability_of(matrix, config);

    // Listwise: one request per sample over the survivors.
    requests.clear();
    for (const auto& s : samples) {
        std::vector<CandidateResponse> group;
        for (const auto& c : survivors) group.push_back(response_for(index, s.sample_id, c));
        requests.push_back(build_request(JudgeMode::listwise, s, group, inputs.rubric, derive_seed(seed, "listwise")));
    }
    auto listwise = run_judge_stage("listwise", requests, backend, backend_config, config.judge_failure_abort_rate);
    report.judge_calls["listwise"] = listwise.log;
    std::vector<ListwiseVerdict> lists;
    for (const auto& v : listwise.verdicts)
        if (v) lists.push_back(std::get<ListwiseVerdict>(*v));
    report.stages.push_back(stage_listwise(lists, config));
    const auto& listwise_decision = report.stages.back();
    report.borda_order = listwise_decision.surviving;

    if (listwise_decision.action == StageAction::finalize) {
        report.winner = report.machine_winner = listwise_decision.surviving.front();
        report.status = "final";
        return report;
    }

    // Pairwise: both presentation orders for every (sample, refined pair).
    const auto pairs = listwise_decision.escalated_pairs;
    requests.clear();
    for (const auto& s : samples) {
        for (const auto& p : pairs) {
            auto [ab, ba] = pairwise_both_orders(s, response_for(index, s.sample_id, p.first),
                                                 response_for(index, s.sample_id, p.second), inputs.rubric,
                                                 derive_seed(seed, "pairwise"));
            requests.push_back(std::move(ab));
            requests.push_back(std::move(ba));
        }
    }
    auto pairwise = run_judge_stage("pairwise", requests, backend, backend_config, config.judge_failure_abort_rate);
    report.judge_calls["pairwise"] = pairwise.log;
    // A failed request leaves its twin without a partner; keep complete dual-order groups only.
    std::vector<PairwiseVerdict> pair_verdicts;
    for (std::size_t i = 0; i + 1 < pairwise.verdicts.size(); i += 2) {
        if (!pairwise.verdicts[i] || !pairwise.verdicts[i + 1]) continue;
        pair_verdicts.push_back(std::get<PairwiseVerdict>(*pairwise.verdicts[i]));
        pair_verdicts.push_back(std::get<PairwiseVerdict>(*pairwise.verdicts[i + 1]));
    }
    report.pair_evidence = collect_pair_evidence(pair_verdicts, pairs);
    auto outcome = decide_refinement(report.pair_evidence, report.borda_order, config);
    report.stages.push_back(outcome.decision);
    report.winner = report.machine_winner = outcome.winner;

    if (outcome.decision.action == StageAction::finalize) {
        report.status = "final";
        return report;
    }

    // Human verification on the samples where the judge was least decisive.
    std::map<std::string, const EvaluationSample*> sample_by_id;
    for (const auto& s : samples) sample_by_id[s.sample_id] = &s;
    std::vector<AdjudicationItem> items;
    for (const auto& pair : outcome.low_confidence) {
        const auto ev_it = std::find_if(report.pair_evidence.begin(), report.pair_evidence.end(),
                                        [&](const PairEvidence& e) { return e.pair == pair; });
        std::vector<std::pair<double, std::string>> ranked;
        if (ev_it != report.pair_evidence.end())
            for (const auto& s : ev_it->per_sample)
                ranked.emplace_back(std::abs(s.a_points / static_cast<double>(s.n) - 0.5), s.sample_id);
        if (ranked.empty())
            for (const auto& s : samples) ranked.emplace_back(0.0, s.sample_id);
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto& x, const auto& y) { return x.first < y.first; });
        const auto take = std::min(config.human_samples_per_pair, ranked.size());
        for (std::size_t k = 0; k < take; ++k) {
            const auto& sid = ranked[k].second;
            items.push_back({*sample_by_id.at(sid), response_for(index, sid, pair.first),
                             response_for(index, sid, pair.second)});
            report.tickets.push_back({make_ticket_id(sid, pair.first, pair.second), sid, pair, 0, true});
        }
    }
    if (queue) queue->enqueue(items);
    for (const auto& t : report.tickets) report.pending_human.push_back(t.ticket_id);

    StageDecision human;
    human.stage = Stage::human;
    human.surviving = outcome.decision.surviving;
    human.confidences = outcome.decision.confidences;
    human.scores = outcome.decision.scores;
    human.escalated_pairs = outcome.low_confidence;
    human.action = StageAction::escalate;
    human.rationale = "awaiting human verdicts on " + std::to_string(report.tickets.size()) + " ticket(s); " +
                      outcome.winner.str() + " is provisional";
    report.stages.push_back(std::move(human));
    report.status = "provisional";
    return report;
}

SelectionReport resolve_human_verdicts(const SelectionReport& report, const std::vector<PairwiseVerdict>& human) {
    if (human.empty()) return report;
    SelectionReport out = report;

    std::map<std::string, HumanTicketRef*> tickets;
    for (auto& t : out.tickets) tickets[t.ticket_id] = &t;
    for (const auto& v : human) {
        if (!v.ticket_id || !tickets.contains(*v.ticket_id))
            throw UnknownTicketError("human verdict references unknown ticket: " + v.ticket_id.value_or("<none>"));
        auto& ticket = *tickets.at(*v.ticket_id);
        if (canonical({v.a, v.b}) != canonical(ticket.pair) || v.sample_id != ticket.sample_id)
            throw DataError("human verdict does not match ticket " + ticket.ticket_id);
        v.validate();

        auto ev = std::find_if(out.pair_evidence.begin(), out.pair_evidence.end(),
                               [&](const PairEvidence& e) { return canonical(e.pair) == canonical(ticket.pair); });
        if (ev == out.pair_evidence.end()) {
            out.pair_evidence.push_back({ticket.pair, {}});
            ev = std::prev(out.pair_evidence.end());
        }
        auto row = std::find_if(ev->per_sample.begin(), ev->per_sample.end(),
                                [&](const SampleEvidence& s) { return s.sample_id == v.sample_id; });
        if (row == ev->per_sample.end()) {
            ev->per_sample.push_back({v.sample_id, 0.0, 0});
            std::sort(ev->per_sample.begin(), ev->per_sample.end(),
                      [](const auto& x, const auto& y) { return x.sample_id < y.sample_id; });
            row = std::find_if(ev->per_sample.begin(), ev->per_sample.end(),
                               [&](const SampleEvidence& s) { return s.sample_id == v.sample_id; });
        }
        row->a_points += v.points_for(ev->pair.first);
        row->n += 1;
        ++ticket.verdicts;
    }

    const auto& config = out.config_echo;
    auto outcome = decide_refinement(out.pair_evidence, out.borda_order, config, Stage::human);
    std::set<CheckpointPair> still_low;
    for (const auto& p : outcome.low_confidence) still_low.insert(canonical(p));

    out.pending_human.clear();
    for (auto& t : out.tickets) {
        if (outcome.decision.action == StageAction::finalize || !still_low.contains(canonical(t.pair)) ||
            t.verdicts >= config.max_verdicts_per_ticket)
            t.open = false;
        if (t.open) out.pending_human.push_back(t.ticket_id);
    }

    auto& d = outcome.decision;
    if (d.action == StageAction::finalize) {
        out.status = "final";
        d.rationale = "human evidence merged: " + d.rationale;
    } else if (out.pending_human.empty()) {
        out.status = "final";
        d.action = StageAction::finalize;
        d.escalated_pairs.clear();
        d.rationale = "human quorum reached without resolving the near-tie; " + outcome.winner.str() +
                      " selected by win rate with listwise tie-break";
    } else {
        out.status = "provisional";
        d.rationale = "unresolved after human review; awaiting more verdicts on " +
                      std::to_string(out.pending_human.size()) + " ticket(s); " + outcome.winner.str() +
                      " remains provisional";
    }
    out.winner = outcome.winner;
    out.human_machine_disagreement = out.winner != out.machine_winner;

    if (!out.stages.empty() && out.stages.back().stage == Stage::human) out.stages.pop_back();
    out.stages.push_back(std::move(d));
    return out;
}

}  // namespace ckpt_arbiter
