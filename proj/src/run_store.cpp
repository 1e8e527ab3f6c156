#include "ckpt_arbiter/run_store.hpp"

#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#include "ckpt_arbiter/digest.hpp"
#include "ckpt_arbiter/errors.hpp"

namespace ckpt_arbiter {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_bytes_atomic(const fs::path& p, const std::string& bytes) {
    auto tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out << bytes;
        if (!out) throw DataError("write failed for " + tmp.string());
    }
    fs::rename(tmp, p);
}

bool valid_name(const std::string& name) {
    static const std::regex re("[A-Za-z0-9_.-]+");
    return std::regex_match(name, re) && name != "manifest" && name.find("..") == std::string::npos;
}

}  // namespace

RunStore RunStore::open(const fs::path& root, const std::string& run_id) {
    if (!valid_name(run_id)) throw DataError("invalid run id: " + run_id);
    RunStore store(root, run_id);
    std::error_code ec;
    fs::create_directories(store.run_dir(), ec);
    if (ec) throw DataError("cannot create run directory " + store.run_dir().string() + ": " + ec.message());

    const auto manifest_path = store.run_dir() / "manifest.json";
    if (fs::exists(manifest_path)) {
        json m;
        try {
            m = json::parse(read_bytes(manifest_path));
        } catch (const json::parse_error&) {
            throw IntegrityError("manifest is not valid JSON: " + manifest_path.string());
        }
        for (const auto& [name, entry] : m.at("artifacts").items())
            store.manifest_[name] = {entry.at("path").get<std::string>(), entry.at("sha256").get<std::string>()};
    } else {
        store.write_manifest();
    }
    return store;
}

void RunStore::write_manifest() const {
    json artifacts = json::object();
    for (const auto& [name, e] : manifest_) artifacts[name] = json{{"path", e.path}, {"sha256", e.sha256}};
    json m{{"schema_version", 1}, {"run_id", run_id_}, {"artifacts", artifacts}};
    write_bytes_atomic(run_dir() / "manifest.json", m.dump(2) + "\n");
}

void RunStore::persist(const std::string& name, const json& payload) {
    if (!valid_name(name)) throw DataError("invalid artifact name: " + name);
    if (manifest_.contains(name)) throw ArtifactCollisionError("artifact already exists: " + name);
    const auto rel = name + ".json";
    const auto bytes = payload.dump(2) + "\n";
    if (fs::exists(run_dir() / rel)) throw ArtifactCollisionError("artifact file already exists: " + rel);
    write_bytes_atomic(run_dir() / rel, bytes);
    manifest_[name] = {rel, sha256_hex(bytes)};
    write_manifest();
}

json RunStore::load(const std::string& name) const {
    auto it = manifest_.find(name);
    if (it == manifest_.end()) throw DataError("no artifact named " + name + " in run " + run_id_);
    const auto bytes = read_bytes(run_dir() / it->second.path);
    if (sha256_hex(bytes) != it->second.sha256)
        throw IntegrityError("hash mismatch for artifact " + name + " (" + it->second.path + ")");
    try {
        return json::parse(bytes);
    } catch (const json::parse_error&) {
        throw IntegrityError("artifact " + name + " is not valid JSON");
    }
}

std::vector<std::string> RunStore::names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (auto it = manifest_.lower_bound(prefix); it != manifest_.end() && it->first.starts_with(prefix); ++it)
        out.push_back(it->first);
    return out;
}

RunStore persist_artifact(RunStore store, const std::string& name, const json& payload) {
    store.persist(name, payload);
    return store;
}

json load_artifact(const RunStore& store, const std::string& name) { return store.load(name); }

fs::path default_run_root() {
    if (const char* env = std::getenv("CKPT_ARBITER_RUN_ROOT"); env && *env) return env;
    return "runs";
}

}  // namespace ckpt_arbiter
