#include "ckpt_arbiter/human_loop_server.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "ckpt_arbiter/errors.hpp"
#include "ckpt_arbiter/json_io.hpp"

namespace ckpt_arbiter {
namespace {

void send_json(httplib::Response& res, int status, json body) {
    body["schema_version"] = kSchemaVersion;
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, json{{"error", message}});
}

std::string content_type_for(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".gif") return "image/gif";
    if (ext == ".webp") return "image/webp";
    if (ext == ".svg") return "image/svg+xml";
    return "application/octet-stream";
}

}  // namespace

struct AdjudicationService::Impl {
    AdjudicationQueue& queue;
    ServiceOptions options;
    httplib::Server server;
    std::thread thread;

    Impl(AdjudicationQueue& q, ServiceOptions o) : queue(q), options(std::move(o)) { install(); }

    bool authorized(const httplib::Request& req, httplib::Response& res) const {
        if (!options.bearer_token) return true;
        if (req.get_header_value("Authorization") == "Bearer " + *options.bearer_token) return true;
        send_error(res, 401, "missing or invalid bearer token");
        return false;
    }

    void install() {
        server.Get("/api/queue/next", [this](const httplib::Request& req, httplib::Response& res) {
            if (!authorized(req, res)) return;
            const auto reviewer = req.get_param_value("reviewer");
            if (reviewer.empty()) return send_error(res, 400, "reviewer query parameter is required");
            const auto view = queue.next_ticket(reviewer);
            if (!view) {
                res.status = 204;
                return;
            }
            send_json(res, 200, to_json_view(*view));
        });

        server.Post("/api/verdicts", [this](const httplib::Request& req, httplib::Response& res) {
            if (!authorized(req, res)) return;
            json body;
            try {
                body = json::parse(req.body);
            } catch (const json::exception&) {
                return send_error(res, 400, "body is not valid JSON");
            }
            if (!body.is_object()) return send_error(res, 400, "body must be a JSON object");
            for (const char* key : {"ticket_id", "reviewer_id", "choice"})
                if (!body.contains(key) || !body[key].is_string() || body[key].get<std::string>().empty())
                    return send_error(res, 400, std::string("missing field ") + key);
            const auto choice = parse_review_choice(body["choice"].get<std::string>());
            if (!choice) return send_error(res, 400, "choice must be left, right or tie");
            const auto ticket_id = body["ticket_id"].get<std::string>();
            const auto reviewer = body["reviewer_id"].get<std::string>();
            try {
                queue.submit_verdict(ticket_id, reviewer, *choice);
            } catch (const UnknownTicketError& e) {
                return send_error(res, 404, e.what());
            } catch (const ConflictError& e) {
                return send_error(res, 409, e.what());
            }
            send_json(res, 200,
                      json{{"accepted", true},
                           {"ticket_id", ticket_id},
                           {"reviewer_id", reviewer},
                           {"choice", body["choice"]}});
        });

        server.Get("/api/status", [this](const httplib::Request& req, httplib::Response& res) {
            if (!authorized(req, res)) return;
            json counts = json::object();
            for (const auto& [status, n] : queue.status_counts()) counts[to_string(status)] = n;
            send_json(res, 200, json{{"counts", counts}});
        });

        server.Get(R"(/api/ticket/([A-Za-z0-9_-]+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
            if (!authorized(req, res)) return;
            const auto ticket = queue.ticket(req.matches[1].str());
            if (!ticket) return send_error(res, 404, "unknown ticket: " + req.matches[1].str());
            const auto& ref = ticket->sample.image_ref;
            if (ref.starts_with("http://") || ref.starts_with("https://")) {
                res.set_redirect(ref, 302);
                return;
            }
            std::filesystem::path path = ref;
            if (ref.starts_with("file://")) path = ref.substr(7);
            if (path.is_relative()) path = options.image_root / path;
            std::ifstream in(path, std::ios::binary);
            if (!in) return send_error(res, 404, "image not available");
            std::ostringstream data;
            data << in.rdbuf();
            res.status = 200;
            res.set_content(data.str(), content_type_for(path));
        });

        if (options.static_dir) server.set_mount_point("/", options.static_dir->string());
    }
};

AdjudicationService::AdjudicationService(AdjudicationQueue& queue, ServiceOptions options)
    : impl_(std::make_unique<Impl>(queue, std::move(options))) {}

AdjudicationService::~AdjudicationService() { stop(); }

int AdjudicationService::start() {
    auto& s = impl_->server;
    int port = impl_->options.port;
    if (port == 0) {
        port = s.bind_to_any_port(impl_->options.host);
    } else if (!s.bind_to_port(impl_->options.host, port)) {
        port = -1;
    }
    if (port < 0) throw std::runtime_error("cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
    impl_->thread = std::thread([&s] { s.listen_after_bind(); });
    s.wait_until_ready();
    return port;
}

void AdjudicationService::run() {
    if (!impl_->server.listen(impl_->options.host, impl_->options.port))
        throw std::runtime_error("cannot listen on " + impl_->options.host + ":" + std::to_string(impl_->options.port));
}

void AdjudicationService::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace ckpt_arbiter
