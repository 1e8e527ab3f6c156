#include "ckpt_arbiter/judge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "ckpt_arbiter/digest.hpp"
#include "ckpt_arbiter/errors.hpp"
#include "ckpt_arbiter/json_io.hpp"
#include "ckpt_arbiter/rng.hpp"

namespace ckpt_arbiter {
namespace {

std::size_t expected_min(JudgeMode mode) { return mode == JudgeMode::pointwise ? 1 : 2; }
std::size_t expected_max(JudgeMode mode) {
    switch (mode) {
        case JudgeMode::pointwise: return 1;
        case JudgeMode::pairwise: return 2;
        case JudgeMode::listwise: return kMaxListwiseCandidates;
    }
    return 1;
}

std::string format_weight(double w) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", w);
    return buf;
}

std::string reply_instructions(JudgeMode mode, std::size_t n) {
    std::ostringstream out;
    out << "Reply with exactly one JSON object and nothing else.\n";
    switch (mode) {
        case JudgeMode::pointwise:
            out << "Format: {\"score\": <number from 0 to 1>, \"rationale\": \"<one sentence>\"}\n"
                << "Score the single response against the rubric; 1 means fully correct, grounded and complete.";
            break;
        case JudgeMode::listwise: {
            out << "Format: {\"ranking\": [";
            for (std::size_t i = 0; i < n; ++i) out << (i ? ", " : "") << '"' << short_label(i) << '"';
            out << "]} reordered best first.\n"
                << "List every response letter exactly once. Ties are not allowed.";
            break;
        }
        case JudgeMode::pairwise:
            out << "Format: {\"winner\": \"A\"} or {\"winner\": \"B\"} or {\"winner\": \"tie\"}\n"
                << "Choose tie only when the responses are equally good under every rubric dimension.";
            break;
    }
    return out.str();
}

std::string build_prompt(JudgeMode mode, const EvaluationSample& sample,
                         const std::vector<BlindedCandidate>& candidates, const Rubric& rubric) {
    std::ostringstream out;
    out << "You are judging answers to a visual question about an image.\n"
        << "Evaluation mode: " << to_string(mode) << "\n"
        << "Image: " << sample.image_ref << "\n"
        << "Question: " << sample.query << "\n\n"
        << "Rubric (schema " << rubric.output_schema_version << "):\n";
    for (std::size_t i = 0; i < rubric.dimensions.size(); ++i) {
        const auto& d = rubric.dimensions[i];
        out << i + 1 << ". " << d.name << " (weight " << format_weight(d.weight) << "): " << d.description << "\n";
    }
    if (rubric.grounding_priority)
        out << "When two answers are otherwise comparable, prefer the one whose claims can be checked "
               "against what is visible in the image; fluent but unsupported text must not win.\n";
    out << "\n";
    for (const auto& c : candidates) out << "[" << c.label << "]\n" << c.text << "\n[end of " << c.label << "]\n\n";
    out << reply_instructions(mode, candidates.size()) << "\n";
    return out.str();
}

std::string make_nonce(JudgeMode mode, const EvaluationSample& sample, const std::vector<BlindedCandidate>& candidates,
                       std::uint64_t seed) {
    std::string material = to_string(mode) + '\x1f' + sample.sample_id + '\x1f' + std::to_string(seed);
    for (const auto& c : candidates) material += '\x1f' + c.label + '\x1e' + c.text;
    return sha256_hex(material).substr(0, 24);
}

BlindedRequest assemble(JudgeMode mode, const EvaluationSample& sample, const std::vector<CandidateResponse>& shown,
                        const Rubric& rubric, std::uint64_t seed) {
    BlindedRequest out;
    out.label_map.sample_id = sample.sample_id;
    out.request.mode = mode;
    out.request.sample = sample;
    out.request.rubric = rubric;
    for (std::size_t i = 0; i < shown.size(); ++i) {
        out.request.candidates.push_back({candidate_label(i), shown[i].text});
        out.label_map.by_label.emplace(short_label(i), shown[i].checkpoint_id);
        out.label_map.presented_order.push_back(shown[i].checkpoint_id);
    }
    out.request.nonce = make_nonce(mode, sample, out.request.candidates, seed);
    out.request.prompt_text = build_prompt(mode, sample, out.request.candidates, rubric);
    return out;
}

void check_responses(JudgeMode mode, const EvaluationSample& sample, const std::vector<CandidateResponse>& responses) {
    if (responses.size() < expected_min(mode) || responses.size() > expected_max(mode))
        throw RequestError("arity mismatch: " + to_string(mode) + " request with " + std::to_string(responses.size()) +
                           " responses");
    std::set<CheckpointId> seen;
    for (const auto& r : responses) {
        if (r.sample_id != sample.sample_id)
            throw RequestError("response from " + r.checkpoint_id.str() + " references sample " + r.sample_id +
                               ", expected " + sample.sample_id);
        if (!seen.insert(r.checkpoint_id).second)
            throw RequestError("checkpoint " + r.checkpoint_id.str() + " appears twice in one request");
    }
}

// Accepts "A" or "Response A".
std::string normalize_label(std::string label) {
    static const std::string prefix = "Response ";
    if (label.starts_with(prefix)) label.erase(0, prefix.size());
    return label;
}

json extract_object(const std::string& raw) {
    const auto open = raw.find('{');
    const auto close = raw.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open)
        throw VerdictParseError(VerdictErrorKind::unparseable, "reply contains no JSON object");
    try {
        auto j = json::parse(raw.substr(open, close - open + 1));
        if (!j.is_object()) throw VerdictParseError(VerdictErrorKind::unparseable, "reply is not a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw VerdictParseError(VerdictErrorKind::unparseable, std::string("reply is not valid JSON: ") + e.what());
    }
}

const CheckpointId& lookup(const LabelMap& map, const std::string& label) {
    auto it = map.by_label.find(normalize_label(label));
    if (it == map.by_label.end()) throw VerdictParseError(VerdictErrorKind::unknown_label, "unknown label: " + label);
    return it->second;
}

std::string label_of(const LabelMap& map, const CheckpointId& c) {
    for (const auto& [label, id] : map.by_label)
        if (id == c) return label;
    throw std::invalid_argument("checkpoint " + c.str() + " not in label map");
}

}  // namespace

Rubric Rubric::default_rubric() {
    Rubric r;
    r.dimensions = {
        {"content understanding and relevance",
         "Does the answer address what was asked about this image, without drifting off topic?", 0.2},
        {"factual accuracy and visual grounding",
         "Are the stated facts, numbers and transcribed text actually supported by the image?", 0.2},
        {"response clarity and completeness",
         "Is the answer clear, well organized and does it cover every part of the question?", 0.2},
        {"appropriate handling of unsupported requests",
         "When the image cannot support an answer, does the response say so instead of guessing?", 0.2},
        {"explicit detection of hallucinations and errors",
         "Penalize invented text, misread characters and claims that contradict the image.", 0.2},
    };
    r.grounding_priority = true;
    r.output_schema_version = "1";
    return r;
}

void Rubric::validate() const {
    if (dimensions.empty()) return;
    double sum = 0.0;
    for (const auto& d : dimensions) {
        if (!(d.weight >= 0.0) || !std::isfinite(d.weight))
            throw std::invalid_argument("rubric weight must be finite and >= 0: " + d.name);
        sum += d.weight;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("rubric weights must sum to 1");
}

std::string short_label(std::size_t index) {
    if (index >= 26) throw std::out_of_range("too many candidates to label");
    return std::string(1, static_cast<char>('A' + index));
}

std::string candidate_label(std::size_t index) { return "Response " + short_label(index); }

BlindedRequest build_request(JudgeMode mode, const EvaluationSample& sample,
                             const std::vector<CandidateResponse>& responses, const Rubric& rubric,
                             std::uint64_t seed) {
    check_responses(mode, sample, responses);
    rubric.validate();

    auto shown = responses;
    std::sort(shown.begin(), shown.end(),
              [](const CandidateResponse& x, const CandidateResponse& y) { return x.checkpoint_id < y.checkpoint_id; });
    Rng rng(derive_seed(seed, sample.sample_id));
    rng.shuffle(shown);

    auto out = assemble(mode, sample, shown, rubric, seed);
    if (mode == JudgeMode::pairwise) {
        out.label_map.pair_a = responses[0].checkpoint_id;
        out.label_map.pair_b = responses[1].checkpoint_id;
    }
    return out;
}

std::pair<BlindedRequest, BlindedRequest> pairwise_both_orders(const EvaluationSample& sample,
                                                               const CandidateResponse& resp_a,
                                                               const CandidateResponse& resp_b,
                                                               const Rubric& rubric, std::uint64_t seed) {
    check_responses(JudgeMode::pairwise, sample, {resp_a, resp_b});
    rubric.validate();
    auto a_first = assemble(JudgeMode::pairwise, sample, {resp_a, resp_b}, rubric, seed);
    auto b_first = assemble(JudgeMode::pairwise, sample, {resp_b, resp_a}, rubric, seed);
    for (auto* r : {&a_first, &b_first}) {
        r->label_map.pair_a = resp_a.checkpoint_id;
        r->label_map.pair_b = resp_b.checkpoint_id;
    }
    return {std::move(a_first), std::move(b_first)};
}

Verdict parse_verdict(const std::string& raw, JudgeMode mode, const LabelMap& label_map) {
    const json obj = extract_object(raw);
    switch (mode) {
        case JudgeMode::pointwise: {
            auto it = obj.find("score");
            if (it == obj.end() || !it->is_number())
                throw VerdictParseError(VerdictErrorKind::unparseable, "pointwise reply lacks a numeric score");
            const double score = it->get<double>();
            if (!(score >= 0.0 && score <= 1.0))
                throw VerdictParseError(VerdictErrorKind::out_of_range, "score outside [0,1]: " + it->dump());
            if (label_map.by_label.size() != 1)
                throw std::invalid_argument("pointwise label map must hold exactly one candidate");
            PointwiseVerdict v{label_map.sample_id, label_map.by_label.begin()->second, score, std::nullopt};
            if (auto r = obj.find("rationale"); r != obj.end() && r->is_string()) v.rationale = r->get<std::string>();
            return v;
        }
        case JudgeMode::listwise: {
            auto it = obj.find("ranking");
            if (it == obj.end() || !it->is_array() ||
                !std::all_of(it->begin(), it->end(), [](const json& x) { return x.is_string(); }))
                throw VerdictParseError(VerdictErrorKind::unparseable, "listwise reply lacks a ranking array");
            std::vector<CheckpointId> ordering;
            for (const auto& label : *it) ordering.push_back(lookup(label_map, label.get<std::string>()));
            const std::set<CheckpointId> distinct(ordering.begin(), ordering.end());
            if (ordering.size() != label_map.by_label.size() || distinct.size() != ordering.size())
                throw VerdictParseError(VerdictErrorKind::incomplete_ranking,
                                        "ranking is not a complete permutation of the presented responses");
            return ListwiseVerdict::from_ordering(label_map.sample_id, std::move(ordering), label_map.presented_order);
        }
        case JudgeMode::pairwise: {
            auto it = obj.find("winner");
            if (it == obj.end() || !it->is_string())
                throw VerdictParseError(VerdictErrorKind::unparseable, "pairwise reply lacks a winner");
            if (!label_map.pair_a || !label_map.pair_b || label_map.presented_order.size() != 2)
                throw std::invalid_argument("pairwise label map lacks the pair orientation");
            PairwiseVerdict v;
            v.sample_id = label_map.sample_id;
            v.a = *label_map.pair_a;
            v.b = *label_map.pair_b;
            v.presented_first = label_map.presented_order.front() == v.a ? PairSide::a : PairSide::b;
            const auto w = it->get<std::string>();
            if (w == "tie" || w == "TIE" || w == "Tie") {
                v.winner = PairWinner::tie;
            } else {
                const auto& winner = lookup(label_map, w);
                v.winner = winner == v.a ? PairWinner::a : PairWinner::b;
            }
            v.validate();
            return v;
        }
    }
    throw std::logic_error("unhandled judge mode");
}

std::string format_reply(const Verdict& verdict, const LabelMap& label_map) {
    json out;
    if (const auto* p = std::get_if<PointwiseVerdict>(&verdict)) {
        out["score"] = p->score;
        if (p->rationale) out["rationale"] = *p->rationale;
    } else if (const auto* l = std::get_if<ListwiseVerdict>(&verdict)) {
        json ranking = json::array();
        for (const auto& c : l->ordering) ranking.push_back(label_of(label_map, c));
        out["ranking"] = ranking;
    } else {
        const auto& pw = std::get<PairwiseVerdict>(verdict);
        if (pw.winner == PairWinner::tie) out["winner"] = "tie";
        else out["winner"] = label_of(label_map, pw.winner == PairWinner::a ? pw.a : pw.b);
    }
    return out.dump();
}

JudgeRequest make_repair_request(const JudgeRequest& original, const std::string& problem) {
    JudgeRequest repaired = original;
    repaired.nonce = original.nonce + "-repair";
    repaired.prompt_text = original.prompt_text + "\nYour previous reply could not be used (" + problem +
                           "). Answer again with only the JSON object described above.\n";
    return repaired;
}

json request_to_json(const JudgeRequest& request) {
    json candidates = json::array();
    for (const auto& c : request.candidates) candidates.push_back(json{{"label", c.label}, {"text", c.text}});
    json dims = json::array();
    for (const auto& d : request.rubric.dimensions)
        dims.push_back(json{{"name", d.name}, {"description", d.description}, {"weight", d.weight}});
    return json{{"mode", to_string(request.mode)},
                {"sample", request.sample},
                {"candidates", candidates},
                {"rubric",
                 {{"dimensions", dims},
                  {"grounding_priority", request.rubric.grounding_priority},
                  {"output_schema_version", request.rubric.output_schema_version}}},
                {"nonce", request.nonce},
                {"prompt_text", request.prompt_text}};
}

}  // namespace ckpt_arbiter
