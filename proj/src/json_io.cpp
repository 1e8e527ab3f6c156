#include "ckpt_arbiter/json_io.hpp"

#include "ckpt_arbiter/errors.hpp"

namespace ckpt_arbiter {

void to_json(json& j, const CheckpointId& c) { j = c.str(); }
void from_json(const json& j, CheckpointId& c) { c = CheckpointId(j.get<std::string>()); }

void to_json(json& j, const CheckpointPair& p) { j = json::array({p.first, p.second}); }
void from_json(const json& j, CheckpointPair& p) {
    p.first = j.at(0).get<CheckpointId>();
    p.second = j.at(1).get<CheckpointId>();
}

void to_json(json& j, OcrQuality q) { j = to_string(q); }
void from_json(const json& j, OcrQuality& q) {
    auto parsed = parse_ocr_quality(j.get<std::string>());
    if (!parsed) throw DataError("invalid ocr_quality");
    q = *parsed;
}

void to_json(json& j, const EvaluationSample& s) {
    j = json{{"sample_id", s.sample_id},
             {"image_ref", s.image_ref},
             {"query", s.query},
             {"ocr_quality", s.ocr_quality},
             {"tags", s.tags}};
    if (s.language_tag) j["language_tag"] = *s.language_tag;
}

void from_json(const json& j, EvaluationSample& s) {
    s.sample_id = j.at("sample_id").get<std::string>();
    s.image_ref = j.at("image_ref").get<std::string>();
    s.query = j.at("query").get<std::string>();
    s.ocr_quality = j.at("ocr_quality").get<OcrQuality>();
    s.language_tag.reset();
    if (auto it = j.find("language_tag"); it != j.end() && !it->is_null())
        s.language_tag = it->get<std::string>();
    s.tags.clear();
    if (auto it = j.find("tags"); it != j.end() && !it->is_null()) s.tags = it->get<std::vector<std::string>>();
}

void to_json(json& j, const CandidateResponse& r) {
    j = json{{"sample_id", r.sample_id}, {"checkpoint_id", r.checkpoint_id}, {"text", r.text}};
}

void from_json(const json& j, CandidateResponse& r) {
    r.sample_id = j.at("sample_id").get<std::string>();
    r.checkpoint_id = j.at("checkpoint_id").get<CheckpointId>();
    r.text = j.at("text").get<std::string>();
}

void to_json(json& j, const PointwiseVerdict& v) {
    j = json{{"sample_id", v.sample_id}, {"checkpoint_id", v.checkpoint_id}, {"score", v.score}};
    if (v.rationale) j["rationale"] = *v.rationale;
}

void from_json(const json& j, PointwiseVerdict& v) {
    v.sample_id = j.at("sample_id").get<std::string>();
    v.checkpoint_id = j.at("checkpoint_id").get<CheckpointId>();
    v.score = j.at("score").get<double>();
    v.rationale.reset();
    if (auto it = j.find("rationale"); it != j.end() && !it->is_null()) v.rationale = it->get<std::string>();
    v.validate();
}

void to_json(json& j, const ListwiseVerdict& v) {
    json scores = json::object();
    for (const auto& [c, s] : v.rank_scores) scores[c.str()] = s;
    j = json{{"sample_id", v.sample_id},
             {"ordering", v.ordering},
             {"presented_order", v.presented_order},
             {"rank_scores", scores}};
}

void from_json(const json& j, ListwiseVerdict& v) {
    v.sample_id = j.at("sample_id").get<std::string>();
    v.ordering = j.at("ordering").get<std::vector<CheckpointId>>();
    v.presented_order = j.at("presented_order").get<std::vector<CheckpointId>>();
    v.rank_scores.clear();
    for (const auto& [k, s] : j.at("rank_scores").items()) v.rank_scores[CheckpointId(k)] = s.get<double>();
    v.validate();
}

void to_json(json& j, const PairwiseVerdict& v) {
    j = json{{"sample_id", v.sample_id},
             {"a", v.a},
             {"b", v.b},
             {"winner", to_string(v.winner)},
             {"presented_first", v.presented_first == PairSide::a ? "a" : "b"},
             {"source", v.source == VerdictSource::judge ? "judge" : "human"}};
    if (v.reviewer_id) j["reviewer_id"] = *v.reviewer_id;
    if (v.ticket_id) j["ticket_id"] = *v.ticket_id;
}

void from_json(const json& j, PairwiseVerdict& v) {
    v.sample_id = j.at("sample_id").get<std::string>();
    v.a = j.at("a").get<CheckpointId>();
    v.b = j.at("b").get<CheckpointId>();
    const auto w = j.at("winner").get<std::string>();
    if (w == "a") v.winner = PairWinner::a;
    else if (w == "b") v.winner = PairWinner::b;
    else if (w == "tie") v.winner = PairWinner::tie;
    else throw DataError("invalid pairwise winner: " + w);
    const auto first = j.value("presented_first", std::string("a"));
    if (first != "a" && first != "b") throw DataError("invalid presented_first: " + first);
    v.presented_first = first == "a" ? PairSide::a : PairSide::b;
    v.source = j.value("source", std::string("judge")) == "human" ? VerdictSource::human : VerdictSource::judge;
    v.reviewer_id.reset();
    v.ticket_id.reset();
    if (auto it = j.find("reviewer_id"); it != j.end() && !it->is_null()) v.reviewer_id = it->get<std::string>();
    if (auto it = j.find("ticket_id"); it != j.end() && !it->is_null()) v.ticket_id = it->get<std::string>();
    v.validate();
}

void to_json(json& j, const ScoreMatrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.n_checkpoints(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < m.n_samples(); ++c)
            row.push_back(m.missing(r, c) ? json(nullptr) : json(m.value(r, c)));
        rows.push_back(std::move(row));
    }
    j = json{{"checkpoints", m.checkpoints()}, {"sample_ids", m.sample_ids()}, {"scores", rows}};
}

void from_json(const json& j, ScoreMatrix& m) {
    ScoreMatrix out(j.at("checkpoints").get<std::vector<CheckpointId>>(),
                    j.at("sample_ids").get<std::vector<std::string>>());
    const auto& rows = j.at("scores");
    if (rows.size() != out.n_checkpoints()) throw DataError("score matrix: row count mismatch");
    for (std::size_t r = 0; r < out.n_checkpoints(); ++r) {
        if (rows[r].size() != out.n_samples()) throw DataError("score matrix: column count mismatch");
        for (std::size_t c = 0; c < out.n_samples(); ++c)
            if (!rows[r][c].is_null()) out.set(r, c, rows[r][c].get<double>());
    }
    m = std::move(out);
}

void to_json(json& j, const ValidationReport& r) {
    json dups = json::array();
    for (const auto& d : r.duplicate_responses) dups.push_back(json{{"first", d.first}, {"second", d.second}});
    json missing = json::array();
    for (const auto& [s, c] : r.missing_pairs) missing.push_back(json{{"sample_id", s}, {"checkpoint_id", c}});
    json coverage = json::object();
    for (const auto& [c, n] : r.coverage) coverage[c.str()] = n;
    j = json{{"complete", r.complete},
             {"issue_count", r.issue_count()},
             {"duplicate_sample_ids", r.duplicate_sample_ids},
             {"duplicate_responses", dups},
             {"dangling_responses", r.dangling_responses},
             {"missing_pairs", missing},
             {"coverage", coverage}};
}

json pair_map_to_json(const std::map<CheckpointPair, double>& m) {
    json out = json::array();
    for (const auto& [p, v] : m) out.push_back(json{{"first", p.first}, {"second", p.second}, {"value", v}});
    return out;
}

std::map<CheckpointPair, double> pair_map_from_json(const json& j) {
    std::map<CheckpointPair, double> out;
    for (const auto& e : j)
        out[{e.at("first").get<CheckpointId>(), e.at("second").get<CheckpointId>()}] = e.at("value").get<double>();
    return out;
}

}  // namespace ckpt_arbiter
