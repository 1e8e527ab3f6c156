#pragma once

// Adjudication queue for low-confidence pairwise comparisons. Reviewers see
// blinded left/right responses; the queue keeps the side -> checkpoint map.

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ckpt_arbiter/run_store.hpp"
#include "ckpt_arbiter/types.hpp"

namespace ckpt_arbiter {

enum class TicketStatus { pending, answered, expired };
enum class ReviewChoice { left, right, tie };

std::string to_string(TicketStatus s);
std::optional<ReviewChoice> parse_review_choice(const std::string& s);

struct AdjudicationItem {
    EvaluationSample sample;
    CandidateResponse a;
    CandidateResponse b;
};

struct AdjudicationTicket {
    std::string ticket_id;
    std::uint64_t sequence = 0;  // enqueue order
    EvaluationSample sample;
    CheckpointPair pair;  // (a, b) orientation of the original request
    std::string left_text;
    std::string right_text;
    std::map<std::string, CheckpointId> hidden_map;  // "left"/"right" -> checkpoint; never sent to clients
    TicketStatus status = TicketStatus::pending;
    std::int64_t created_at = 0;  // unix seconds
};

// What a reviewer's client receives.
struct TicketView {
    std::string ticket_id;
    std::string image_url;
    std::string query;
    std::string left_text;
    std::string right_text;
    std::size_t queue_depth = 0;
};

nlohmann::json to_json_view(const TicketView& view);
nlohmann::json ticket_to_json(const AdjudicationTicket& ticket);  // server-side record
AdjudicationTicket ticket_from_json(const nlohmann::json& j);

// Deterministic, orientation-insensitive ticket id for (sample, pair).
std::string make_ticket_id(const std::string& sample_id, const CheckpointId& x, const CheckpointId& y);

class AdjudicationQueue {
public:
    struct Options {
        std::uint64_t seed = 0;
        std::size_t max_verdicts_per_ticket = 5;
        std::optional<std::chrono::seconds> expiry;  // tickets never expire by default
    };

    AdjudicationQueue() : AdjudicationQueue(Options{}) {}
    explicit AdjudicationQueue(Options options);
    // Durable queue: reloads every ticket and verdict already in the store.
    AdjudicationQueue(RunStore store, Options options);

    // One ticket per item; an item already queued returns its existing id.
    std::vector<std::string> enqueue(const std::vector<AdjudicationItem>& items);

    // Oldest pending ticket this reviewer has not answered.
    std::optional<TicketView> next_ticket(const std::string& reviewer_id);

    // Throws UnknownTicketError, or ConflictError on a second (ticket, reviewer) submission.
    PairwiseVerdict submit_verdict(const std::string& ticket_id, const std::string& reviewer_id, ReviewChoice choice);

    // Marks a ticket answered so it is no longer served.
    void close(const std::string& ticket_id);

    std::optional<AdjudicationTicket> ticket(const std::string& ticket_id) const;
    std::vector<PairwiseVerdict> verdicts() const;
    std::vector<PairwiseVerdict> verdicts_for(const std::string& ticket_id) const;
    std::map<TicketStatus, std::size_t> status_counts() const;

private:
    void refresh_expiry_locked();
    void persist_locked(const std::string& name, const nlohmann::json& payload);

    Options options_;
    std::optional<RunStore> store_;
    mutable std::mutex mutex_;
    std::map<std::string, AdjudicationTicket> tickets_;
    std::vector<std::string> order_;
    std::map<std::string, std::vector<PairwiseVerdict>> verdicts_;
    std::uint64_t next_sequence_ = 0;
    std::uint64_t next_verdict_ = 0;
};

}  // namespace ckpt_arbiter
