#pragma once

// HTTP front end for the adjudication queue.
//
//   GET  /api/queue/next?reviewer=<id>   ticket view, or 204 when nothing is pending
//   POST /api/verdicts                   {ticket_id, reviewer_id, choice: left|right|tie}
//   GET  /api/status                     ticket counts by status
//   GET  /api/ticket/<id>/image          redirect (URL image_ref) or file stream
//
// Every JSON body carries schema_version. Checkpoint identities never leave the server.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "ckpt_arbiter/human_loop.hpp"

namespace ckpt_arbiter {

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::optional<std::string> bearer_token;  // required on /api/* when set
    std::optional<std::filesystem::path> static_dir;  // built reviewer UI, served at /
    std::filesystem::path image_root = ".";  // base for relative image_ref paths
};

class AdjudicationService {
public:
    AdjudicationService(AdjudicationQueue& queue, ServiceOptions options);
    ~AdjudicationService();
    AdjudicationService(const AdjudicationService&) = delete;
    AdjudicationService& operator=(const AdjudicationService&) = delete;

    // Binds and serves on a background thread; returns the bound port.
    int start();
    // Binds and serves on the calling thread until stop().
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace ckpt_arbiter
