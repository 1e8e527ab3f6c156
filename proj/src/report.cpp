#include "ckpt_arbiter/report.hpp"

#include <cmath>
#include <cstdio>
#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

#include "ckpt_arbiter/errors.hpp"
#include "ckpt_arbiter/json_io.hpp"

namespace ckpt_arbiter {
namespace {

const std::map<std::string, std::string>& table_titles() {
    static const std::map<std::string, std::string> titles{
        {"curation_metrics", "Curation metrics"},
        {"global_consistency", "Global consistency"},
        {"win_rates", "Win rates between checkpoints"},
        {"confidence_levels", "Confidence levels"},
        {"appendix_a", "Parametric vs bootstrap confidence"},
        {"appendix_b", "Mean vs percentile aggregation"}};
    return titles;
}

std::string marker(Direction d) {
    switch (d) {
        case Direction::higher_is_better: return " ↑";
        case Direction::lower_is_better: return " ↓";
        case Direction::none: return "";
    }
    return "";
}

std::string direction_name(Direction d) {
    switch (d) {
        case Direction::higher_is_better: return "higher_is_better";
        case Direction::lower_is_better: return "lower_is_better";
        case Direction::none: return "none";
    }
    return "none";
}

Direction parse_direction(const std::string& s) {
    if (s == "higher_is_better") return Direction::higher_is_better;
    if (s == "lower_is_better") return Direction::lower_is_better;
    if (s == "none") return Direction::none;
    throw DataError("unknown column direction: " + s);
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_row(std::string line) {
    line = trim(line);
    if (line.starts_with("|")) line.erase(0, 1);
    if (line.ends_with("|")) line.pop_back();
    std::vector<std::string> out;
    std::string cell;
    for (char c : line) {
        if (c == '|') {
            out.push_back(trim(cell));
            cell.clear();
        } else {
            cell += c;
        }
    }
    out.push_back(trim(cell));
    return out;
}

std::string escape_pipes(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '|') out += "/";
        else out += c;
    }
    return out;
}

void render_markdown_table(std::ostringstream& os, const std::string& name, const ReportTable* table) {
    const auto& titles = table_titles();
    const auto title = table ? table->title : (titles.contains(name) ? titles.at(name) : name);
    os << "## " << title << " {#" << name << "}\n\n";
    if (!table) {
        os << "| " << title << " |\n|---|\n| not computed |\n\n";
        return;
    }
    os << "| |";
    for (const auto& c : table->columns) os << ' ' << escape_pipes(c.name) << marker(c.direction) << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < table->columns.size(); ++i) os << "---|";
    os << '\n';
    if (table->row_labels.empty()) {
        os << "| not computed |";
        for (std::size_t i = 0; i < table->columns.size(); ++i) os << " |";
        os << '\n';
    }
    for (std::size_t r = 0; r < table->row_labels.size(); ++r) {
        os << "| " << escape_pipes(table->row_labels[r]) << " |";
        for (const auto& cell : table->cells[r]) os << ' ' << (cell ? format_cell(*cell) : std::string("n/a")) << " |";
        os << '\n';
    }
    os << '\n';
}

json table_to_json(const ReportTable& t) {
    json cols = json::array();
    for (const auto& c : t.columns) cols.push_back({{"name", c.name}, {"direction", direction_name(c.direction)}});
    json rows = json::array();
    for (std::size_t r = 0; r < t.row_labels.size(); ++r) {
        json values = json::array();
        for (const auto& cell : t.cells[r]) values.push_back(cell ? json(*cell) : json(nullptr));
        rows.push_back({{"label", t.row_labels[r]}, {"values", values}});
    }
    return {{"title", t.title}, {"columns", cols}, {"rows", rows}};
}

ReportTable table_from_json(const json& j) {
    ReportTable t;
    t.title = j.at("title").get<std::string>();
    for (const auto& c : j.at("columns"))
        t.columns.push_back({c.at("name").get<std::string>(), parse_direction(c.at("direction").get<std::string>())});
    for (const auto& r : j.at("rows")) {
        std::vector<std::optional<double>> values;
        for (const auto& v : r.at("values")) values.push_back(v.is_null() ? std::nullopt : std::optional(v.get<double>()));
        t.add_row(r.at("label").get<std::string>(), std::move(values));
    }
    return t;
}

}  // namespace

void ReportTable::add_row(std::string label, std::vector<std::optional<double>> values) {
    if (values.size() != columns.size())
        throw std::invalid_argument("row '" + label + "' has " + std::to_string(values.size()) + " cells for " +
                                    std::to_string(columns.size()) + " columns");
    row_labels.push_back(std::move(label));
    cells.push_back(std::move(values));
}

void ReportTable::validate() const {
    if (row_labels.size() != cells.size()) throw DataError("table '" + title + "' has mismatched rows");
    for (const auto& row : cells)
        if (row.size() != columns.size()) throw DataError("table '" + title + "' has a ragged row");
}

const std::vector<std::string>& standard_table_names() {
    static const std::vector<std::string> names{"curation_metrics",  "global_consistency", "win_rates",
                                                "confidence_levels", "appendix_a",         "appendix_b"};
    return names;
}

ReportFormat parse_report_format(const std::string& s) {
    if (s == "markdown" || s == "md") return ReportFormat::markdown;
    if (s == "json") return ReportFormat::json;
    throw std::invalid_argument("unknown report format: " + s);
}

std::string format_cell(double value) {
    if (!std::isfinite(value)) return std::isnan(value) ? "nan" : (value > 0 ? "inf" : "-inf");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", value);
    return buf;
}

json bundle_to_json(const ReportBundle& bundle) {
    json tables = json::object();
    for (const auto& [name, t] : bundle.tables) {
        t.validate();
        tables[name] = table_to_json(t);
    }
    json seeds = json::object();
    for (const auto& [k, v] : bundle.provenance.seeds) seeds[k] = v;
    json artifacts = json::object();
    for (const auto& [k, v] : bundle.provenance.artifacts) artifacts[k] = v;
    return {{"schema_version", kSchemaVersion},
            {"tables", tables},
            {"provenance",
             {{"run_id", bundle.provenance.run_id},
              {"config_hash", bundle.provenance.config_hash},
              {"seeds", seeds},
              {"artifacts", artifacts}}}};
}

ReportBundle bundle_from_json(const json& j) {
    if (j.at("schema_version").get<int>() != kSchemaVersion) throw DataError("unsupported report schema_version");
    ReportBundle b;
    for (const auto& [name, t] : j.at("tables").items()) b.tables[name] = table_from_json(t);
    const auto& p = j.at("provenance");
    b.provenance.run_id = p.at("run_id").get<std::string>();
    b.provenance.config_hash = p.at("config_hash").get<std::string>();
    for (const auto& [k, v] : p.at("seeds").items()) b.provenance.seeds[k] = v.get<std::uint64_t>();
    for (const auto& [k, v] : p.at("artifacts").items()) b.provenance.artifacts[k] = v.get<std::string>();
    return b;
}

std::string render_report(const ReportBundle& bundle, ReportFormat format) {
    if (format == ReportFormat::json) return bundle_to_json(bundle).dump(2) + "\n";

    std::ostringstream os;
    os << "# Checkpoint selection report\n\n";
    const auto& p = bundle.provenance;
    os << "- run_id: " << (p.run_id.empty() ? "n/a" : p.run_id) << "\n";
    os << "- config_hash: " << (p.config_hash.empty() ? "n/a" : p.config_hash) << "\n";
    for (const auto& [k, v] : p.seeds) os << "- seed " << k << ": " << v << "\n";
    for (const auto& [k, v] : p.artifacts) os << "- artifact " << k << ": " << v << "\n";
    os << "\n";

    for (const auto& name : standard_table_names()) {
        const auto it = bundle.tables.find(name);
        render_markdown_table(os, name, it == bundle.tables.end() ? nullptr : &it->second);
    }
    for (const auto& [name, t] : bundle.tables) {
        const auto& std_names = standard_table_names();
        if (std::find(std_names.begin(), std_names.end(), name) == std_names.end()) render_markdown_table(os, name, &t);
    }
    return os.str();
}

std::map<std::string, ReportTable> parse_markdown_tables(const std::string& markdown) {
    std::map<std::string, ReportTable> out;
    std::istringstream in(markdown);
    std::string line;
    std::string current;
    ReportTable* table = nullptr;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.starts_with("## ")) {
            const auto open = line.rfind("{#");
            const auto close = line.rfind('}');
            if (open == std::string::npos || close == std::string::npos || close < open) {
                table = nullptr;
                continue;
            }
            current = line.substr(open + 2, close - open - 2);
            table = &out[current];
            table->title = trim(line.substr(3, open - 3));
            header_seen = false;
            continue;
        }
        if (!table || !line.starts_with("|")) continue;
        if (line.starts_with("|---")) continue;
        auto cells = split_row(line);
        if (!header_seen) {
            header_seen = true;
            if (cells.size() == 1) continue;  // placeholder table for "not computed"
            for (std::size_t i = 1; i < cells.size(); ++i) {
                auto name = cells[i];
                Direction d = Direction::none;
                if (name.ends_with(" ↑")) {
                    d = Direction::higher_is_better;
                    name.erase(name.size() - std::string(" ↑").size());
                } else if (name.ends_with(" ↓")) {
                    d = Direction::lower_is_better;
                    name.erase(name.size() - std::string(" ↓").size());
                }
                table->columns.push_back({name, d});
            }
            continue;
        }
        if (cells.front() == "not computed") continue;
        std::vector<std::optional<double>> values;
        for (std::size_t i = 1; i < cells.size(); ++i) {
            if (cells[i] == "n/a") {
                values.emplace_back();
                continue;
            }
            char* end = nullptr;
            const double v = std::strtod(cells[i].c_str(), &end);
            if (end == cells[i].c_str()) throw DataError("non-numeric report cell: " + cells[i]);
            values.emplace_back(v);
        }
        table->add_row(cells.front(), std::move(values));
    }
    return out;
}

ReportTable consistency_table(const ExperimentMetrics& metrics) {
    ReportTable t;
    t.title = "Global consistency";
    t.columns = {{"Top-1 Consistency", Direction::higher_is_better},
                 {"Ranking Flip Rate", Direction::lower_is_better},
                 {"Inter-run Agreement", Direction::higher_is_better}};
    for (const auto& [name, m] : metrics.methods)
        t.add_row(name, {m.top1_consistency, m.flip_rate, m.inter_run_agreement});
    return t;
}

ReportTable curation_table(const MethodMetrics& curated, const MethodMetrics& ambiguous) {
    ReportTable t;
    t.title = "Curation metrics";
    t.columns = {{"Ranking Flip Rate", Direction::lower_is_better},
                 {"Inter-run Agreement", Direction::higher_is_better}};
    t.add_row("With ambiguous samples", {ambiguous.flip_rate, ambiguous.inter_run_agreement});
    t.add_row("Curated", {curated.flip_rate, curated.inter_run_agreement});
    return t;
}

ReportTable appendix_b_table(const ExperimentMetrics& metrics) {
    ReportTable t;
    t.title = "Mean vs percentile aggregation";
    t.columns = {{"Worst-case Error Rate", Direction::lower_is_better},
                 {"Selection Error", Direction::lower_is_better},
                 {"Ranking Stability", Direction::higher_is_better}};
    for (const auto& [name, label] : {std::pair{"pointwise_mean", "Mean"}, std::pair{"pointwise_percentile", "Percentile"}}) {
        const auto it = metrics.methods.find(name);
        if (it == metrics.methods.end()) continue;
        t.add_row(label, {it->second.worst_case_error, it->second.selection_error, it->second.inter_run_agreement});
    }
    return t;
}

ReportTable appendix_a_table(double gaussian, double bootstrap, std::pair<double, double> ci) {
    ReportTable t;
    t.title = "Parametric vs bootstrap confidence";
    t.columns = {{"P(A>B)", Direction::none}, {"CI low", Direction::none}, {"CI high", Direction::none}};
    t.add_row("Gaussian", {gaussian, ci.first, ci.second});
    t.add_row("Bootstrap", {bootstrap, std::nullopt, std::nullopt});
    return t;
}

ReportTable win_rate_table(const WinRateTable& rates, const std::vector<CheckpointId>& order) {
    ReportTable t;
    t.title = "Win rates between checkpoints";
    for (const auto& c : order) t.columns.push_back({c.str(), Direction::none});
    for (const auto& row : order) {
        std::vector<std::optional<double>> values;
        for (const auto& col : order) {
            if (row == col) {
                values.emplace_back();
                continue;
            }
            if (auto it = rates.find({row, col}); it != rates.end()) values.emplace_back(it->second.rate);
            else if (auto rit = rates.find({col, row}); rit != rates.end()) values.emplace_back(1.0 - rit->second.rate);
            else values.emplace_back();
        }
        t.add_row(row.str(), std::move(values));
    }
    return t;
}

ReportTable confidence_table(const std::vector<std::pair<std::string, double>>& stage_confidence) {
    ReportTable t;
    t.title = "Confidence levels";
    t.columns = {{"P(A>B)", Direction::higher_is_better}};
    for (const auto& [stage, p] : stage_confidence) t.add_row(stage, {p});
    return t;
}

ReportBundle bundle_from_selection(const SelectionReport& report) {
    ReportBundle b;
    if (report.stability) {
        ReportTable t;
        t.title = "Global consistency";
        t.columns = {{"Top-1 Consistency", Direction::higher_is_better},
                     {"Ranking Flip Rate", Direction::lower_is_better},
                     {"Inter-run Agreement", Direction::higher_is_better}};
        t.add_row("pointwise " + to_string(report.config_echo.aggregator),
                  {report.stability->top1_consistency, report.stability->flip_rate,
                   report.stability->inter_run_agreement});
        b.tables["global_consistency"] = t;
    }

    // Confidence of each stage's top pair, oriented toward the final winner when possible.
    std::vector<std::pair<std::string, double>> conf;
    for (const auto& d : report.stages) {
        if (d.surviving.size() < 2) continue;
        const CheckpointPair top{d.surviving[0], d.surviving[1]};
        if (auto it = d.confidences.find(top); it != d.confidences.end()) conf.emplace_back(to_string(d.stage), it->second);
        else if (auto rit = d.confidences.find(top.reversed()); rit != d.confidences.end())
            conf.emplace_back(to_string(d.stage), 1.0 - rit->second);
    }
    if (!conf.empty()) b.tables["confidence_levels"] = confidence_table(conf);

    if (!report.pair_evidence.empty()) {
        WinRateTable rates;
        std::vector<CheckpointId> order;
        auto note = [&](const CheckpointId& c) {
            if (std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);
        };
        for (const auto& c : report.borda_order) {
            for (const auto& ev : report.pair_evidence)
                if (ev.pair.first == c || ev.pair.second == c) note(c);
        }
        for (const auto& ev : report.pair_evidence) {
            WinRateEntry e;
            for (const auto& s : ev.per_sample) {
                e.total += s.n;
                e.wins += s.a_points;
            }
            e.rate = ev.rate();
            rates[ev.pair] = e;
            note(ev.pair.first);
            note(ev.pair.second);
        }
        b.tables["win_rates"] = win_rate_table(rates, order);
    }
    return b;
}

}  // namespace ckpt_arbiter
