#pragma once

// Append-only run directory: <root>/<run_id>/manifest.json plus one JSON file
// per artifact. Every artifact is recorded with its SHA-256 and verified on load.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ckpt_arbiter {

struct ManifestEntry {
    std::string path;  // relative to the run directory
    std::string sha256;
    bool operator==(const ManifestEntry&) const = default;
};

class RunStore {
public:
    // Creates the run directory (and an empty manifest) if needed, otherwise opens it.
    static RunStore open(const std::filesystem::path& root, const std::string& run_id);

    const std::filesystem::path& root_path() const noexcept { return root_; }
    const std::string& run_id() const noexcept { return run_id_; }
    std::filesystem::path run_dir() const { return root_ / run_id_; }
    const std::map<std::string, ManifestEntry>& manifest() const noexcept { return manifest_; }

    bool contains(const std::string& name) const { return manifest_.contains(name); }

    // Writes <name>.json and records its hash. Throws ArtifactCollisionError
    // if the name is already present.
    void persist(const std::string& name, const nlohmann::json& payload);
    // Throws IntegrityError on hash mismatch, DataError if absent.
    nlohmann::json load(const std::string& name) const;

    // Artifact names starting with `prefix`, in manifest order.
    std::vector<std::string> names_with_prefix(const std::string& prefix) const;

private:
    RunStore(std::filesystem::path root, std::string run_id) : root_(std::move(root)), run_id_(std::move(run_id)) {}
    void write_manifest() const;

    std::filesystem::path root_;
    std::string run_id_;
    std::map<std::string, ManifestEntry> manifest_;
};

RunStore persist_artifact(RunStore store, const std::string& name, const nlohmann::json& payload);
nlohmann::json load_artifact(const RunStore& store, const std::string& name);

// Root from CKPT_ARBITER_RUN_ROOT, falling back to "./runs".
std::filesystem::path default_run_root();

}  // namespace ckpt_arbiter
