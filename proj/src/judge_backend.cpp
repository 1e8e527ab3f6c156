#include "ckpt_arbiter/judge_backend.hpp"

#include <algorithm>
#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>

#include "ckpt_arbiter/json_io.hpp"

namespace ckpt_arbiter {

void JudgeBackendConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
    if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
}

std::vector<BatchOutcome> submit_batch(const JudgeBackendConfig& config, JudgeBackend& backend,
                                       const std::vector<JudgeRequest>& requests) {
    config.validate();
    std::vector<BatchOutcome> out(requests.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < requests.size(); i = next.fetch_add(1)) {
            auto& outcome = out[i];
            outcome.nonce = requests[i].nonce;
            auto delay = config.backoff_initial;
            for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
                if (attempt > 0 && delay.count() > 0) {
                    std::this_thread::sleep_for(delay);
                    delay *= 2;
                }
                ++outcome.attempts;
                try {
                    outcome.reply = backend.complete(requests[i], config);
                    outcome.failure.reset();
                    outcome.error.clear();
                    break;
                } catch (const JudgeBackendError& e) {
                    outcome.failure = e.kind();
                    outcome.error = e.what();
                } catch (const std::exception& e) {
                    // Not a transient backend fault; retrying cannot help.
                    outcome.failure = BackendFailureKind::bad_status;
                    outcome.error = e.what();
                    break;
                }
            }
        }
    };

    const auto n_threads = std::min(config.batch_size, requests.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    return out;
}

HttpJudgeBackend::HttpJudgeBackend() {
    if (const char* env = std::getenv("CKPT_ARBITER_JUDGE_TOKEN"); env) token_ = env;
}

std::string HttpJudgeBackend::complete(const JudgeRequest& request, const JudgeBackendConfig& config) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config.endpoint, m, url_re))
        throw JudgeBackendError(BackendFailureKind::transport, "invalid judge endpoint: " + config.endpoint);
    const std::string base = m[1];
    const std::string path = m[2].matched ? std::string(m[2]) : "/";

    httplib::Client client(base);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    if (!token_.empty()) client.set_bearer_token_auth(token_);

    const json body{{"model_name", config.model_name},
                    {"prompt_text", request.prompt_text},
                    {"nonce", request.nonce},
                    {"temperature", config.temperature}};
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) {
        const auto err = res.error();
        const bool timed_out = err == httplib::Error::Read || err == httplib::Error::Write ||
                               err == httplib::Error::ConnectionTimeout;
        throw JudgeBackendError(timed_out ? BackendFailureKind::timeout : BackendFailureKind::transport,
                                "judge request failed: " + httplib::to_string(err));
    }
    if (res->status < 200 || res->status >= 300)
        throw JudgeBackendError(BackendFailureKind::bad_status, "judge returned HTTP " + std::to_string(res->status));
    return res->body;
}

std::string CountingBackend::complete(const JudgeRequest& request, const JudgeBackendConfig& config) {
    counts_[static_cast<std::size_t>(request.mode)].fetch_add(1);
    return inner_.complete(request, config);
}

std::size_t CountingBackend::total_calls() const {
    std::size_t n = 0;
    for (const auto& c : counts_) n += c.load();
    return n;
}

}  // namespace ckpt_arbiter
