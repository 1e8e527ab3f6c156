#pragma once

// Report tables (markdown and JSON) in the layouts used for checkpoint
// selection results: consistency, win rates, confidence levels and so on.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ckpt_arbiter/aggregate.hpp"
#include "ckpt_arbiter/orchestrator.hpp"
#include "ckpt_arbiter/simulator.hpp"

namespace ckpt_arbiter {

enum class Direction { none, higher_is_better, lower_is_better };

struct ReportColumn {
    std::string name;
    Direction direction = Direction::none;
    bool operator==(const ReportColumn&) const = default;
};

struct ReportTable {
    std::string title;
    std::vector<ReportColumn> columns;
    std::vector<std::string> row_labels;
    std::vector<std::vector<std::optional<double>>> cells;  // row-major; nullopt renders as "n/a"

    void add_row(std::string label, std::vector<std::optional<double>> values);
    void validate() const;
    bool operator==(const ReportTable&) const = default;
};

struct Provenance {
    std::string run_id;
    std::string config_hash;
    std::map<std::string, std::uint64_t> seeds;
    std::map<std::string, std::string> artifacts;  // name -> sha256
    bool operator==(const Provenance&) const = default;
};

struct ReportBundle {
    std::map<std::string, ReportTable> tables;
    Provenance provenance;
    bool operator==(const ReportBundle&) const = default;
};

// curation_metrics, global_consistency, win_rates, confidence_levels, appendix_a, appendix_b
const std::vector<std::string>& standard_table_names();

enum class ReportFormat { markdown, json };
ReportFormat parse_report_format(const std::string& s);

// Every standard table is rendered; absent ones get a "not computed" row.
std::string render_report(const ReportBundle& bundle, ReportFormat format);

nlohmann::json bundle_to_json(const ReportBundle& bundle);
ReportBundle bundle_from_json(const nlohmann::json& j);

// Four significant digits; the markdown representation of every number.
std::string format_cell(double value);

// Reads back the tables written by render_report(markdown), keyed by table name.
std::map<std::string, ReportTable> parse_markdown_tables(const std::string& markdown);

ReportTable consistency_table(const ExperimentMetrics& metrics);
ReportTable curation_table(const MethodMetrics& curated, const MethodMetrics& ambiguous);
ReportTable appendix_b_table(const ExperimentMetrics& metrics);
ReportTable appendix_a_table(double gaussian, double bootstrap, std::pair<double, double> ci);
ReportTable win_rate_table(const WinRateTable& rates, const std::vector<CheckpointId>& order);
ReportTable confidence_table(const std::vector<std::pair<std::string, double>>& stage_confidence);

// Tables derivable from a selection report (win rates, confidence by stage, stability).
ReportBundle bundle_from_selection(const SelectionReport& report);

}  // namespace ckpt_arbiter
