#include "ckpt_arbiter/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "ckpt_arbiter/errors.hpp"
#include "ckpt_arbiter/json_io.hpp"

namespace ckpt_arbiter {
namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Calls fn(line_number, object) for every non-blank line.
template <class Fn>
void for_each_record(const std::string& text, Fn&& fn) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error&) {
            throw IngestError("line " + std::to_string(lineno) + ": malformed JSON");
        }
        if (!obj.is_object()) throw IngestError("line " + std::to_string(lineno) + ": expected a JSON object");
        fn(lineno, obj);
    }
}

std::string line_prefix(std::size_t lineno) { return "line " + std::to_string(lineno) + ": "; }

std::string required_string(const json& obj, const char* field, std::size_t lineno) {
    auto it = obj.find(field);
    if (it == obj.end() || it->is_null()) throw IngestError(line_prefix(lineno) + "missing field " + field);
    if (!it->is_string()) throw IngestError(line_prefix(lineno) + "field " + field + " must be a string");
    return it->get<std::string>();
}

}  // namespace

std::vector<EvaluationSample> parse_samples_jsonl(const std::string& text) {
    std::vector<EvaluationSample> out;
    std::map<std::string, std::size_t> seen;
    for_each_record(text, [&](std::size_t lineno, const json& obj) {
        EvaluationSample s;
        s.sample_id = required_string(obj, "sample_id", lineno);
        s.image_ref = required_string(obj, "image_ref", lineno);
        s.query = required_string(obj, "query", lineno);
        auto quality = parse_ocr_quality(required_string(obj, "ocr_quality", lineno));
        if (!quality) throw IngestError(line_prefix(lineno) + "invalid ocr_quality");
        s.ocr_quality = *quality;
        if (auto it = obj.find("language_tag"); it != obj.end() && !it->is_null()) {
            if (!it->is_string()) throw IngestError(line_prefix(lineno) + "field language_tag must be a string");
            s.language_tag = it->get<std::string>();
        }
        if (auto it = obj.find("tags"); it != obj.end() && !it->is_null()) {
            if (!it->is_array() || !std::all_of(it->begin(), it->end(), [](const json& t) { return t.is_string(); }))
                throw IngestError(line_prefix(lineno) + "field tags must be a list of strings");
            s.tags = it->get<std::vector<std::string>>();
        }
        try {
            s.validate();
        } catch (const DataError& e) {
            throw IngestError(line_prefix(lineno) + e.what());
        }
        if (auto [it, inserted] = seen.emplace(s.sample_id, lineno); !inserted)
            throw IngestError(line_prefix(lineno) + "duplicate sample_id " + s.sample_id + " (first seen on line " +
                              std::to_string(it->second) + ")");
        out.push_back(std::move(s));
    });
    return out;
}

std::vector<CandidateResponse> parse_responses_jsonl(const std::string& text) {
    std::vector<CandidateResponse> out;
    std::map<std::pair<std::string, std::string>, std::size_t> seen;
    for_each_record(text, [&](std::size_t lineno, const json& obj) {
        CandidateResponse r;
        r.sample_id = required_string(obj, "sample_id", lineno);
        const auto ckpt = required_string(obj, "checkpoint_id", lineno);
        r.text = required_string(obj, "text", lineno);
        if (r.sample_id.empty()) throw IngestError(line_prefix(lineno) + "sample_id must be non-empty");
        if (ckpt.empty()) throw IngestError(line_prefix(lineno) + "checkpoint_id must be non-empty");
        r.checkpoint_id = CheckpointId(ckpt);
        if (auto [it, inserted] = seen.emplace(std::make_pair(r.sample_id, ckpt), lineno); !inserted)
            throw IngestError(line_prefix(lineno) + "duplicate response pair (" + r.sample_id + ", " + ckpt +
                              ") (first seen on line " + std::to_string(it->second) + ")");
        out.push_back(std::move(r));
    });
    return out;
}

std::vector<EvaluationSample> ingest_samples(const std::filesystem::path& path) {
    return parse_samples_jsonl(read_file(path));
}

std::vector<CandidateResponse> ingest_responses(const std::filesystem::path& path) {
    return parse_responses_jsonl(read_file(path));
}

template <class Verdict>
std::vector<Verdict> read_verdicts_jsonl(const std::filesystem::path& path) {
    std::vector<Verdict> out;
    for_each_record(read_file(path), [&](std::size_t lineno, const json& obj) {
        try {
            out.push_back(obj.get<Verdict>());
        } catch (const json::exception& e) {
            throw IngestError(line_prefix(lineno) + e.what());
        } catch (const DataError& e) {
            throw IngestError(line_prefix(lineno) + e.what());
        }
    });
    return out;
}

template std::vector<PointwiseVerdict> read_verdicts_jsonl(const std::filesystem::path&);
template std::vector<ListwiseVerdict> read_verdicts_jsonl(const std::filesystem::path&);
template std::vector<PairwiseVerdict> read_verdicts_jsonl(const std::filesystem::path&);

template <class Record>
void write_jsonl(const std::filesystem::path& path, const std::vector<Record>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& r : records) out << json(r).dump() << '\n';
}

template void write_jsonl(const std::filesystem::path&, const std::vector<EvaluationSample>&);
template void write_jsonl(const std::filesystem::path&, const std::vector<CandidateResponse>&);
template void write_jsonl(const std::filesystem::path&, const std::vector<PointwiseVerdict>&);
template void write_jsonl(const std::filesystem::path&, const std::vector<ListwiseVerdict>&);
template void write_jsonl(const std::filesystem::path&, const std::vector<PairwiseVerdict>&);

CurationResult curate(const std::vector<EvaluationSample>& samples, const CurationPolicy& policy) {
    if (policy.allowed_qualities.empty()) throw std::invalid_argument("curation policy allows no ocr_quality");
    CurationResult result;
    for (const auto& s : samples) {
        if (!policy.allowed_qualities.contains(s.ocr_quality)) {
            result.excluded.push_back({s, "ocr_quality"});
            continue;
        }
        const bool has_tags = std::all_of(policy.required_tags.begin(), policy.required_tags.end(),
                                          [&](const std::string& t) {
                                              return std::find(s.tags.begin(), s.tags.end(), t) != s.tags.end();
                                          });
        if (!has_tags) {
            result.excluded.push_back({s, "missing_tags"});
            continue;
        }
        result.kept.push_back(s);
    }
    if (result.kept.size() < policy.min_samples) throw InsufficientSamplesError(result.kept.size(), policy.min_samples);
    return result;
}

}  // namespace ckpt_arbiter
