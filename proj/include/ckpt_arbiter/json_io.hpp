#pragma once

// nlohmann/json conversions for the domain types. Field names match the
// JSONL file formats and the run-directory artifacts.

#include <nlohmann/json.hpp>

#include "ckpt_arbiter/types.hpp"

namespace ckpt_arbiter {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

void to_json(json& j, const CheckpointId& c);
void from_json(const json& j, CheckpointId& c);

void to_json(json& j, const CheckpointPair& p);
void from_json(const json& j, CheckpointPair& p);

void to_json(json& j, OcrQuality q);
void from_json(const json& j, OcrQuality& q);

void to_json(json& j, const EvaluationSample& s);
void from_json(const json& j, EvaluationSample& s);

void to_json(json& j, const CandidateResponse& r);
void from_json(const json& j, CandidateResponse& r);

void to_json(json& j, const PointwiseVerdict& v);
void from_json(const json& j, PointwiseVerdict& v);

void to_json(json& j, const ListwiseVerdict& v);
void from_json(const json& j, ListwiseVerdict& v);

void to_json(json& j, const PairwiseVerdict& v);
void from_json(const json& j, PairwiseVerdict& v);

void to_json(json& j, const ScoreMatrix& m);
void from_json(const json& j, ScoreMatrix& m);

void to_json(json& j, const ValidationReport& r);

// Pair-keyed maps serialize as arrays of {first, second, value}.
json pair_map_to_json(const std::map<CheckpointPair, double>& m);
std::map<CheckpointPair, double> pair_map_from_json(const json& j);

}  // namespace ckpt_arbiter
