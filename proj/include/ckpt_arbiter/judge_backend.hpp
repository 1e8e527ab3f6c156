#pragma once

// Pluggable judge backends and the batched, retrying submitter.

#include <array>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ckpt_arbiter/errors.hpp"
#include "ckpt_arbiter/judge.hpp"

namespace ckpt_arbiter {

struct JudgeBackendConfig {
    std::string endpoint;  // http(s)://host[:port]/path
    std::string model_name;
    int max_retries = 2;
    std::chrono::milliseconds timeout{60000};
    std::size_t batch_size = 8;
    double temperature = 0.0;
    std::chrono::milliseconds backoff_initial{250};

    void validate() const;
};

// Implementations must be callable from several threads at once.
class JudgeBackend {
public:
    virtual ~JudgeBackend() = default;
    // Returns the raw reply text; throws JudgeBackendError on failure.
    virtual std::string complete(const JudgeRequest& request, const JudgeBackendConfig& config) = 0;
};

struct BatchOutcome {
    std::string nonce;
    std::optional<std::string> reply;
    std::optional<BackendFailureKind> failure;
    std::string error;
    int attempts = 0;

    bool ok() const noexcept { return reply.has_value(); }
};

// Each request gets up to 1 + max_retries attempts with exponential backoff.
// At most batch_size requests are in flight. Output order matches input order.
std::vector<BatchOutcome> submit_batch(const JudgeBackendConfig& config, JudgeBackend& backend,
                                       const std::vector<JudgeRequest>& requests);

// POSTs {model_name, prompt_text, nonce, temperature} as JSON; the reply body
// is the raw verdict text. Sends "Authorization: Bearer $CKPT_ARBITER_JUDGE_TOKEN"
// when that variable is set.
class HttpJudgeBackend : public JudgeBackend {
public:
    HttpJudgeBackend();
    explicit HttpJudgeBackend(std::string bearer_token) : token_(std::move(bearer_token)) {}

    std::string complete(const JudgeRequest& request, const JudgeBackendConfig& config) override;

private:
    std::string token_;
};

// Wraps another backend and counts calls per mode.
class CountingBackend : public JudgeBackend {
public:
    explicit CountingBackend(JudgeBackend& inner) : inner_(inner) {}

    std::string complete(const JudgeRequest& request, const JudgeBackendConfig& config) override;

    std::size_t calls(JudgeMode mode) const { return counts_[static_cast<std::size_t>(mode)].load(); }
    std::size_t total_calls() const;

private:
    JudgeBackend& inner_;
    std::array<std::atomic<std::size_t>, 3> counts_{};
};

}  // namespace ckpt_arbiter
