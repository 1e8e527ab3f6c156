#include "ckpt_arbiter/human_loop.hpp"

#include <algorithm>
#include <cstdio>

#include "ckpt_arbiter/digest.hpp"
#include "ckpt_arbiter/errors.hpp"
#include "ckpt_arbiter/json_io.hpp"
#include "ckpt_arbiter/rng.hpp"

namespace ckpt_arbiter {
namespace {

std::int64_t now_seconds() {
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

TicketStatus parse_status(const std::string& s) {
    if (s == "answered") return TicketStatus::answered;
    if (s == "expired") return TicketStatus::expired;
    return TicketStatus::pending;
}

std::string verdict_artifact_name(std::uint64_t index) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "human_verdict_%08llu", static_cast<unsigned long long>(index));
    return buf;
}

}  // namespace

std::string to_string(TicketStatus s) {
    switch (s) {
        case TicketStatus::pending: return "pending";
        case TicketStatus::answered: return "answered";
        case TicketStatus::expired: return "expired";
    }
    return "pending";
}

std::optional<ReviewChoice> parse_review_choice(const std::string& s) {
    if (s == "left") return ReviewChoice::left;
    if (s == "right") return ReviewChoice::right;
    if (s == "tie") return ReviewChoice::tie;
    return std::nullopt;
}

json to_json_view(const TicketView& v) {
    return json{{"schema_version", kSchemaVersion}, {"ticket_id", v.ticket_id},   {"image_url", v.image_url},
                {"query", v.query},                 {"left_text", v.left_text},   {"right_text", v.right_text},
                {"queue_depth", v.queue_depth}};
}

json ticket_to_json(const AdjudicationTicket& t) {
    json hidden = json::object();
    for (const auto& [side, c] : t.hidden_map) hidden[side] = c.str();
    return json{{"ticket_id", t.ticket_id}, {"sequence", t.sequence},     {"sample", t.sample},
                {"pair", t.pair},           {"left_text", t.left_text},   {"right_text", t.right_text},
                {"hidden_map", hidden},     {"status", to_string(t.status)}, {"created_at", t.created_at}};
}

AdjudicationTicket ticket_from_json(const json& j) {
    AdjudicationTicket t;
    t.ticket_id = j.at("ticket_id").get<std::string>();
    t.sequence = j.at("sequence").get<std::uint64_t>();
    t.sample = j.at("sample").get<EvaluationSample>();
    t.pair = j.at("pair").get<CheckpointPair>();
    t.left_text = j.at("left_text").get<std::string>();
    t.right_text = j.at("right_text").get<std::string>();
    for (const auto& [side, c] : j.at("hidden_map").items()) t.hidden_map[side] = CheckpointId(c.get<std::string>());
    t.status = parse_status(j.at("status").get<std::string>());
    t.created_at = j.at("created_at").get<std::int64_t>();
    return t;
}

std::string make_ticket_id(const std::string& sample_id, const CheckpointId& x, const CheckpointId& y) {
    const auto& lo = std::min(x, y);
    const auto& hi = std::max(x, y);
    return "t" + sha256_hex(sample_id + '\x1f' + lo.str() + '\x1f' + hi.str()).substr(0, 16);
}

AdjudicationQueue::AdjudicationQueue(Options options) : options_(options) {}

AdjudicationQueue::AdjudicationQueue(RunStore store, Options options) : options_(options), store_(std::move(store)) {
    std::vector<AdjudicationTicket> loaded;
    for (const auto& name : store_->names_with_prefix("ticket_t")) loaded.push_back(ticket_from_json(store_->load(name)));
    std::sort(loaded.begin(), loaded.end(), [](const auto& x, const auto& y) { return x.sequence < y.sequence; });
    for (auto& t : loaded) {
        next_sequence_ = std::max(next_sequence_, t.sequence + 1);
        order_.push_back(t.ticket_id);
        tickets_.emplace(t.ticket_id, std::move(t));
    }
    for (const auto& name : store_->names_with_prefix("human_verdict_")) {
        auto v = store_->load(name).get<PairwiseVerdict>();
        verdicts_[v.ticket_id.value_or("")].push_back(std::move(v));
        ++next_verdict_;
    }
    for (const auto& name : store_->names_with_prefix("ticket_closed_")) {
        const auto id = name.substr(std::string("ticket_closed_").size());
        if (auto it = tickets_.find(id); it != tickets_.end()) it->second.status = TicketStatus::answered;
    }
    for (auto& [id, t] : tickets_)
        if (verdicts_[id].size() >= options_.max_verdicts_per_ticket) t.status = TicketStatus::answered;
}

void AdjudicationQueue::persist_locked(const std::string& name, const json& payload) {
    if (store_) store_->persist(name, payload);
}

std::vector<std::string> AdjudicationQueue::enqueue(const std::vector<AdjudicationItem>& items) {
    std::lock_guard lock(mutex_);
    std::vector<std::string> ids;
    ids.reserve(items.size());
    for (const auto& item : items) {
        if (item.a.sample_id != item.sample.sample_id || item.b.sample_id != item.sample.sample_id)
            throw DataError("adjudication item responses do not belong to sample " + item.sample.sample_id);
        if (item.a.checkpoint_id == item.b.checkpoint_id)
            throw DataError("adjudication item compares " + item.a.checkpoint_id.str() + " with itself");
        const auto id = make_ticket_id(item.sample.sample_id, item.a.checkpoint_id, item.b.checkpoint_id);
        ids.push_back(id);
        if (tickets_.contains(id)) continue;

        AdjudicationTicket t;
        t.ticket_id = id;
        t.sequence = next_sequence_++;
        t.sample = item.sample;
        t.pair = {item.a.checkpoint_id, item.b.checkpoint_id};
        t.created_at = now_seconds();
        Rng rng(derive_seed(options_.seed, id));
        const bool a_left = rng.bernoulli(0.5);
        const auto& left = a_left ? item.a : item.b;
        const auto& right = a_left ? item.b : item.a;
        t.left_text = left.text;
        t.right_text = right.text;
        t.hidden_map = {{"left", left.checkpoint_id}, {"right", right.checkpoint_id}};
        persist_locked("ticket_" + id, ticket_to_json(t));
        order_.push_back(id);
        tickets_.emplace(id, std::move(t));
    }
    return ids;
}

void AdjudicationQueue::refresh_expiry_locked() {
    if (!options_.expiry) return;
    const auto now = now_seconds();
    for (auto& [id, t] : tickets_)
        if (t.status == TicketStatus::pending && now - t.created_at >= options_.expiry->count())
            t.status = TicketStatus::expired;
}

std::optional<TicketView> AdjudicationQueue::next_ticket(const std::string& reviewer_id) {
    std::lock_guard lock(mutex_);
    refresh_expiry_locked();
    std::size_t depth = 0;
    for (const auto& [id, t] : tickets_) depth += t.status == TicketStatus::pending ? 1 : 0;
    for (const auto& id : order_) {
        const auto& t = tickets_.at(id);
        if (t.status != TicketStatus::pending) continue;
        const auto& given = verdicts_[id];
        const bool answered = std::any_of(given.begin(), given.end(),
                                          [&](const PairwiseVerdict& v) { return v.reviewer_id == reviewer_id; });
        if (answered) continue;
        return TicketView{t.ticket_id, "/api/ticket/" + t.ticket_id + "/image", t.sample.query, t.left_text,
                          t.right_text, depth};
    }
    return std::nullopt;
}

PairwiseVerdict AdjudicationQueue::submit_verdict(const std::string& ticket_id, const std::string& reviewer_id,
                                                  ReviewChoice choice) {
    std::lock_guard lock(mutex_);
    auto it = tickets_.find(ticket_id);
    if (it == tickets_.end()) throw UnknownTicketError("unknown ticket: " + ticket_id);
    auto& ticket = it->second;
    auto& given = verdicts_[ticket_id];
    if (std::any_of(given.begin(), given.end(), [&](const PairwiseVerdict& v) { return v.reviewer_id == reviewer_id; }))
        throw ConflictError("reviewer " + reviewer_id + " already answered ticket " + ticket_id);

    PairwiseVerdict v;
    v.sample_id = ticket.sample.sample_id;
    v.a = ticket.pair.first;
    v.b = ticket.pair.second;
    v.presented_first = ticket.hidden_map.at("left") == v.a ? PairSide::a : PairSide::b;
    v.source = VerdictSource::human;
    v.reviewer_id = reviewer_id;
    v.ticket_id = ticket_id;
    if (choice == ReviewChoice::tie) {
        v.winner = PairWinner::tie;
    } else {
        const auto& chosen = ticket.hidden_map.at(choice == ReviewChoice::left ? "left" : "right");
        v.winner = chosen == v.a ? PairWinner::a : PairWinner::b;
    }
    persist_locked(verdict_artifact_name(next_verdict_++), json(v));
    given.push_back(v);
    if (given.size() >= options_.max_verdicts_per_ticket) ticket.status = TicketStatus::answered;
    return v;
}

void AdjudicationQueue::close(const std::string& ticket_id) {
    std::lock_guard lock(mutex_);
    auto it = tickets_.find(ticket_id);
    if (it == tickets_.end()) throw UnknownTicketError("unknown ticket: " + ticket_id);
    if (it->second.status == TicketStatus::answered) return;
    it->second.status = TicketStatus::answered;
    if (store_ && !store_->contains("ticket_closed_" + ticket_id))
        persist_locked("ticket_closed_" + ticket_id, json{{"ticket_id", ticket_id}});
}

std::optional<AdjudicationTicket> AdjudicationQueue::ticket(const std::string& ticket_id) const {
    std::lock_guard lock(mutex_);
    auto it = tickets_.find(ticket_id);
    if (it == tickets_.end()) return std::nullopt;
    return it->second;
}

std::vector<PairwiseVerdict> AdjudicationQueue::verdicts() const {
    std::lock_guard lock(mutex_);
    std::vector<PairwiseVerdict> out;
    for (const auto& id : order_)
        if (auto it = verdicts_.find(id); it != verdicts_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
    return out;
}

std::vector<PairwiseVerdict> AdjudicationQueue::verdicts_for(const std::string& ticket_id) const {
    std::lock_guard lock(mutex_);
    if (auto it = verdicts_.find(ticket_id); it != verdicts_.end()) return it->second;
    return {};
}

std::map<TicketStatus, std::size_t> AdjudicationQueue::status_counts() const {
    std::lock_guard lock(mutex_);
    std::map<TicketStatus, std::size_t> counts{
        {TicketStatus::pending, 0}, {TicketStatus::answered, 0}, {TicketStatus::expired, 0}};
    for (const auto& [id, t] : tickets_) ++counts[t.status];
    return counts;
}

}  // namespace ckpt_arbiter
