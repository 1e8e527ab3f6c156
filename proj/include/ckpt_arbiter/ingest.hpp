#pragma once

// JSONL ingestion and quality-aware curation.

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "ckpt_arbiter/types.hpp"

namespace ckpt_arbiter {

// Errors name the 1-based line: "line 2: missing field query".
std::vector<EvaluationSample> ingest_samples(const std::filesystem::path& path);
std::vector<CandidateResponse> ingest_responses(const std::filesystem::path& path);

// Same parsing over in-memory text; used by the file variants.
std::vector<EvaluationSample> parse_samples_jsonl(const std::string& text);
std::vector<CandidateResponse> parse_responses_jsonl(const std::string& text);

template <class Verdict>
std::vector<Verdict> read_verdicts_jsonl(const std::filesystem::path& path);

template <class Record>
void write_jsonl(const std::filesystem::path& path, const std::vector<Record>& records);

struct CurationPolicy {
    std::set<OcrQuality> allowed_qualities{OcrQuality::readable};
    std::size_t min_samples = 0;
    std::vector<std::string> required_tags;
};

struct ExcludedSample {
    EvaluationSample sample;
    std::string reason;  // "ocr_quality" or "missing_tags"
};

struct CurationResult {
    std::vector<EvaluationSample> kept;
    std::vector<ExcludedSample> excluded;
};

// Keeps samples whose quality is allowed and whose tags cover required_tags.
// Throws InsufficientSamplesError when fewer than min_samples survive.
CurationResult curate(const std::vector<EvaluationSample>& samples, const CurationPolicy& policy);

}  // namespace ckpt_arbiter
