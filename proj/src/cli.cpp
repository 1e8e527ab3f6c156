#include "ckpt_arbiter/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "ckpt_arbiter/aggregate.hpp"
#include "ckpt_arbiter/confidence.hpp"
#include "ckpt_arbiter/digest.hpp"
#include "ckpt_arbiter/errors.hpp"
#include "ckpt_arbiter/human_loop.hpp"
#include "ckpt_arbiter/human_loop_server.hpp"
#include "ckpt_arbiter/ingest.hpp"
#include "ckpt_arbiter/json_io.hpp"
#include "ckpt_arbiter/orchestrator.hpp"
#include "ckpt_arbiter/report.hpp"
#include "ckpt_arbiter/rng.hpp"
#include "ckpt_arbiter/run_store.hpp"
#include "ckpt_arbiter/simulator.hpp"
#include "ckpt_arbiter/stability.hpp"

namespace ckpt_arbiter {
namespace {

namespace fs = std::filesystem;

// Reproducibility trail on stderr: config hash, seeds, artifact hashes.
class InvocationLog {
public:
    explicit InvocationLog(std::ostream& err) : err_(err) {}
    void config(const json& cfg) { err_ << "[ckpt-arbiter] config_hash=" << config_hash(cfg) << '\n'; }
    void seed(std::uint64_t s) { err_ << "[ckpt-arbiter] seed=" << s << '\n'; }
    void artifact(const RunStore& store, const std::string& name) {
        err_ << "[ckpt-arbiter] artifact " << store.run_id() << '/' << name << " sha256=" << store.manifest().at(name).sha256
             << '\n';
    }
    void file(const fs::path& p, const std::string& content) {
        err_ << "[ckpt-arbiter] wrote " << p.string() << " sha256=" << sha256_hex(content) << '\n';
    }
    void note(const std::string& msg) { err_ << "[ckpt-arbiter] " << msg << '\n'; }
    static std::string config_hash(const json& cfg) { return sha256_hex(cfg.dump()).substr(0, 16); }

private:
    std::ostream& err_;
};

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": malformed JSON (" + e.what() + ")");
    }
}

std::string timestamp_id() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%S", &tm);
    return buf;
}

void persist_logged(RunStore& store, InvocationLog& log, const std::string& name, const json& payload) {
    store.persist(name, payload);
    log.artifact(store, name);
}

ScoreMatrix matrix_from_pointwise(const std::vector<PointwiseVerdict>& verdicts) {
    if (verdicts.empty()) throw DataError("no pointwise verdicts");
    std::set<CheckpointId> checkpoints;
    std::vector<std::string> samples;
    std::set<std::string> seen;
    for (const auto& v : verdicts) {
        checkpoints.insert(v.checkpoint_id);
        if (seen.insert(v.sample_id).second) samples.push_back(v.sample_id);
    }
    ScoreMatrix m({checkpoints.begin(), checkpoints.end()}, samples);
    for (const auto& v : verdicts) {
        const auto r = m.row_of(v.checkpoint_id);
        const auto c = m.column_of(v.sample_id);
        if (!m.missing(r, c)) throw DataError("duplicate verdict for (" + v.sample_id + ", " + v.checkpoint_id.str() + ")");
        m.set(r, c, v.score);
    }
    return m;
}

void print_ranking(std::ostream& out, const std::map<CheckpointId, double>& scores, const std::string& method,
                   ReportFormat format) {
    const auto ranking = rank_from_scores(scores);
    if (format == ReportFormat::json) {
        json rows = json::array();
        for (std::size_t i = 0; i < ranking.size(); ++i)
            rows.push_back({{"rank", i + 1}, {"checkpoint", ranking[i]}, {"score", scores.at(ranking[i])}});
        out << json{{"schema_version", kSchemaVersion}, {"method", method}, {"ranking", rows}}.dump(2) << '\n';
        return;
    }
    out << "| Rank | Checkpoint | Score (" << method << ") ↑ |\n|---|---|---|\n";
    for (std::size_t i = 0; i < ranking.size(); ++i)
        out << "| " << i + 1 << " | " << ranking[i].str() << " | " << format_cell(scores.at(ranking[i])) << " |\n";
}

// run.json: flat pipeline fields plus data/judge keys handled here.
struct RunSpec {
    PipelineConfig pipeline;
    std::optional<WorldConfig> world;
    std::optional<fs::path> samples;
    std::optional<fs::path> responses;
    std::optional<CurationPolicy> curation;
    JudgeBackendConfig judge;
    std::optional<std::uint64_t> judge_session_seed;
    std::optional<std::string> run_id;
    json effective;
};

CurationPolicy curation_from_json(const json& j) {
    CurationPolicy p;
    if (j.contains("allowed_qualities")) {
        p.allowed_qualities.clear();
        for (const auto& q : j.at("allowed_qualities")) {
            const auto parsed = parse_ocr_quality(q.get<std::string>());
            if (!parsed) throw DataError("unknown ocr quality in curation policy: " + q.get<std::string>());
            p.allowed_qualities.insert(*parsed);
        }
    }
    if (j.contains("min_samples")) p.min_samples = j.at("min_samples").get<std::size_t>();
    if (j.contains("required_tags")) p.required_tags = j.at("required_tags").get<std::vector<std::string>>();
    return p;
}

RunSpec load_run_spec(const fs::path& path) {
    auto j = read_json_file(path);
    if (!j.is_object()) throw DataError(path.string() + ": run config must be a JSON object");
    RunSpec spec;
    spec.effective = j;
    const auto base = path.parent_path();
    auto pop = [&](const char* key) -> std::optional<json> {
        if (!j.contains(key)) return std::nullopt;
        auto v = j.at(key);
        j.erase(key);
        return v;
    };
    try {
        if (auto w = pop("world")) spec.world = w->get<WorldConfig>();
        if (auto s = pop("samples")) spec.samples = base / s->get<std::string>();
        if (auto r = pop("responses")) spec.responses = base / r->get<std::string>();
        if (auto c = pop("curation")) spec.curation = curation_from_json(*c);
        if (auto s = pop("judge_session_seed")) spec.judge_session_seed = s->get<std::uint64_t>();
        if (auto id = pop("run_id")) spec.run_id = id->get<std::string>();
        if (auto jb = pop("judge")) {
            if (jb->contains("endpoint")) spec.judge.endpoint = jb->at("endpoint").get<std::string>();
            if (jb->contains("model_name")) spec.judge.model_name = jb->at("model_name").get<std::string>();
            if (jb->contains("max_retries")) spec.judge.max_retries = jb->at("max_retries").get<int>();
            if (jb->contains("timeout_ms"))
                spec.judge.timeout = std::chrono::milliseconds(jb->at("timeout_ms").get<long>());
            if (jb->contains("batch_size")) spec.judge.batch_size = jb->at("batch_size").get<std::size_t>();
        }
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    spec.pipeline = j.get<PipelineConfig>();
    if (!spec.world && !(spec.samples && spec.responses))
        throw DataError(path.string() + ": needs either \"world\" or both \"samples\" and \"responses\"");
    if (!spec.world && spec.judge.endpoint.empty())
        throw DataError(path.string() + ": file-based data needs judge.endpoint");
    return spec;
}

std::string latest_report_name(const RunStore& store) {
    auto resolved = store.names_with_prefix("selection_report_resolved_");
    if (!resolved.empty()) {
        std::sort(resolved.begin(), resolved.end());
        return resolved.back();
    }
    if (store.contains("selection_report")) return "selection_report";
    return "";
}

std::string numbered(const std::string& prefix, std::size_t n) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", n);
    return prefix + buf;
}

void print_selection_summary(std::ostream& out, const SelectionReport& report, const RunStore& store) {
    out << "winner: " << report.winner.str() << " (" << report.status << ")\n";
    for (const auto& d : report.stages)
        out << "  " << to_string(d.stage) << ": " << to_string(d.action) << " - " << d.rationale << '\n';
    if (!report.pending_human.empty()) out << "pending human tickets: " << report.pending_human.size() << '\n';
    if (report.human_machine_disagreement) out << "human evidence overturned the machine winner " << report.machine_winner.str() << '\n';
    out << "run directory: " << store.run_dir().string() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"ckpt-arbiter: judge-based checkpoint selection", "ckpt-arbiter"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    std::string run_root = default_run_root().string();
    std::string run_id;
    app.add_option("--run-root", run_root, "Directory holding run directories")->capture_default_str();

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Validate samples and responses and store them in a run");
    std::string samples_path, responses_path;
    ingest->add_option("--samples", samples_path, "Samples JSONL")->required();
    ingest->add_option("--responses", responses_path, "Responses JSONL")->required();
    ingest->add_option("--run-id", run_id, "Run to write into");

    // curate
    auto* curate_cmd = app.add_subcommand("curate", "Filter samples by OCR quality and tags");
    std::vector<std::string> allow{"readable"};
    std::vector<std::string> required_tags;
    std::size_t min_samples = 0;
    std::string out_path;
    curate_cmd->add_option("--samples", samples_path, "Samples JSONL")->required();
    curate_cmd->add_option("--allow", allow, "Allowed OCR qualities")->check(CLI::IsMember({"readable", "ambiguous", "unknown"}));
    curate_cmd->add_option("--require-tag", required_tags, "Tag every kept sample must carry");
    curate_cmd->add_option("--min-samples", min_samples, "Fail when fewer samples survive");
    curate_cmd->add_option("--out", out_path, "Write kept samples here (JSONL); stdout otherwise");

    // judge
    auto* judge_cmd = app.add_subcommand("judge", "Collect judge verdicts for one mode");
    std::string mode_name, world_path, endpoint, model_name;
    std::uint64_t seed = 0;
    judge_cmd->add_option("--mode", mode_name, "pointwise | listwise | pairwise")
        ->required()
        ->check(CLI::IsMember({"pointwise", "listwise", "pairwise"}));
    judge_cmd->add_option("--world", world_path, "World config JSON: judge its data with the synthetic judge");
    judge_cmd->add_option("--samples", samples_path, "Samples JSONL");
    judge_cmd->add_option("--responses", responses_path, "Responses JSONL");
    judge_cmd->add_option("--endpoint", endpoint, "Judge HTTP endpoint");
    judge_cmd->add_option("--model", model_name, "Judge model name");
    judge_cmd->add_option("--seed", seed, "Presentation-order seed");
    judge_cmd->add_option("--out", out_path, "Verdicts JSONL; stdout otherwise");

    // rank
    auto* rank_cmd = app.add_subcommand("rank", "Rank checkpoints from stored verdicts");
    std::string method, verdicts_path, format_name = "markdown";
    ScoringWeights weights;
    rank_cmd->add_option("--method", method, "pointwise | listwise | percentile")
        ->required()
        ->check(CLI::IsMember({"pointwise", "listwise", "percentile"}));
    rank_cmd->add_option("--verdicts", verdicts_path, "Verdicts JSONL")->required();
    rank_cmd->add_option("--beta", weights.beta, "Lower-tail penalty")->capture_default_str();
    rank_cmd->add_option("--gamma", weights.gamma, "Upper-tail reward")->capture_default_str();
    rank_cmd->add_option("--format", format_name, "markdown | json")->check(CLI::IsMember({"markdown", "json"}));

    // confidence
    auto* conf_cmd = app.add_subcommand("confidence", "Preference confidence P(A > B) from pointwise verdicts");
    std::string ckpt_a, ckpt_b;
    std::size_t n_resamples = 2000;
    double level = 0.95;
    conf_cmd->add_option("--method", method, "gaussian | bootstrap")
        ->required()
        ->check(CLI::IsMember({"gaussian", "bootstrap"}));
    conf_cmd->add_option("--verdicts", verdicts_path, "Pointwise verdicts JSONL")->required();
    conf_cmd->add_option("-a,--ckpt-a", ckpt_a, "Checkpoint A (default: best by mean)");
    conf_cmd->add_option("-b,--ckpt-b", ckpt_b, "Checkpoint B (default: runner-up by mean)");
    conf_cmd->add_option("--seed", seed, "Bootstrap seed");
    conf_cmd->add_option("--n-resamples", n_resamples, "Bootstrap resamples")->capture_default_str();
    conf_cmd->add_option("--level", level, "Confidence level of the reported intervals")->capture_default_str();

    // stability
    auto* stab_cmd = app.add_subcommand("stability", "Ranking stability over sample subsets");
    std::size_t trials = 200;
    std::size_t subsample_size = 0;
    std::string aggregator_name = "mean";
    stab_cmd->add_option("--verdicts", verdicts_path, "Pointwise verdicts JSONL")->required();
    stab_cmd->add_option("--trials", trials, "Number of subsample runs")->capture_default_str();
    stab_cmd->add_option("--subsample-size", subsample_size, "Samples per run (default: 80% of samples)");
    stab_cmd->add_option("--seed", seed, "Subsampling seed");
    stab_cmd->add_option("--aggregator", aggregator_name, "mean | percentile")->check(CLI::IsMember({"mean", "percentile"}));

    // pipeline run
    auto* pipeline_cmd = app.add_subcommand("pipeline", "Multi-stage selection pipeline");
    pipeline_cmd->require_subcommand(1);
    auto* pipeline_run = pipeline_cmd->add_subcommand("run", "Run the pipeline from a run config");
    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> aggregator_override;
    std::optional<std::size_t> top_k_override, resamples_override;
    bool no_human_loop = false;
    pipeline_run->add_option("--config", config_path, "Run config JSON")->required();
    pipeline_run->add_option("--run-id", run_id, "Run id (default: timestamp + config hash)");
    pipeline_run->add_option("--seed", seed_override, "Override seed");
    pipeline_run->add_option("--aggregator", aggregator_override, "Override aggregator")
        ->check(CLI::IsMember({"mean", "percentile"}));
    pipeline_run->add_option("--top-k", top_k_override, "Override top_k_after_pointwise");
    pipeline_run->add_option("--n-resamples", resamples_override, "Override n_resamples");
    pipeline_run->add_flag("--no-human-loop", no_human_loop, "Disable human escalation");

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Run seeded campaigns in a synthetic world");
    std::size_t campaigns = 20;
    std::optional<std::size_t> sim_subsample;
    bool with_pipeline = false, curation_contrast = false;
    std::string export_dir;
    sim_cmd->add_option("--world", world_path, "World config JSON")->required();
    sim_cmd->add_option("--config", config_path, "Pipeline config JSON (flat)");
    sim_cmd->add_option("--campaigns", campaigns, "Independent judge sessions")->capture_default_str();
    sim_cmd->add_option("--subsample", sim_subsample, "Samples per campaign");
    sim_cmd->add_flag("--pipeline", with_pipeline, "Also run the full pipeline per campaign");
    sim_cmd->add_flag("--curation-contrast", curation_contrast, "Compare against the same world without ambiguous samples");
    sim_cmd->add_option("--export", export_dir, "Write the world's samples/responses JSONL here");
    sim_cmd->add_option("--run-id", run_id, "Run id (default: timestamp + config hash)");

    // report
    auto* report_cmd = app.add_subcommand("report", "Render the tables of a run");
    bool resolve = false;
    report_cmd->add_option("--run-id", run_id, "Run to report on")->required();
    report_cmd->add_option("--format", format_name, "markdown | json")->check(CLI::IsMember({"markdown", "json"}));
    report_cmd->add_flag("--resolve", resolve, "Merge stored human verdicts into the selection report first");

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "Serve a run's adjudication queue over HTTP");
    std::string host = "127.0.0.1", static_dir, image_root = ".";
    int port = 8080;
    serve_cmd->add_option("--run-id", run_id, "Run whose queue to serve")->required();
    serve_cmd->add_option("--host", host, "Bind address")->capture_default_str();
    serve_cmd->add_option("--port", port, "Bind port")->capture_default_str();
    serve_cmd->add_option("--static-dir", static_dir, "Built reviewer UI to serve at /");
    serve_cmd->add_option("--image-root", image_root, "Base directory for relative image paths");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const CLI::App* failing = &app;
        for (auto* sub : app.get_subcommands()) failing = sub;
        err << failing->help();
        return kExitUsage;
    }

    InvocationLog log(err);
    try {
        auto open_store = [&](const std::string& id) { return RunStore::open(run_root, id); };

        if (ingest->parsed()) {
            const auto samples = ingest_samples(samples_path);
            const auto responses = ingest_responses(responses_path);
            const auto validation = validate_dataset(samples, responses);
            json summary = validation;
            log.config(json{{"samples", samples_path}, {"responses", responses_path}});
            if (!run_id.empty()) {
                auto store = open_store(run_id);
                persist_logged(store, log, "samples", samples);
                persist_logged(store, log, "responses", responses);
                persist_logged(store, log, "validation_report", summary);
            }
            out << summary.dump(2) << '\n';
            if (!validation.complete) {
                err << "error: dataset incomplete (" << validation.issue_count() << " issue(s))\n";
                return kExitData;
            }
            return kExitOk;
        }

        if (curate_cmd->parsed()) {
            CurationPolicy policy;
            policy.allowed_qualities.clear();
            for (const auto& a : allow) policy.allowed_qualities.insert(*parse_ocr_quality(a));
            policy.min_samples = min_samples;
            policy.required_tags = required_tags;
            const auto result = curate(ingest_samples(samples_path), policy);
            std::map<std::string, std::size_t> reasons;
            for (const auto& e : result.excluded) ++reasons[e.reason];
            err << "[ckpt-arbiter] kept " << result.kept.size() << ", excluded " << result.excluded.size() << '\n';
            if (!out_path.empty()) {
                write_jsonl(out_path, result.kept);
                std::ifstream in(out_path);
                std::stringstream content;
                content << in.rdbuf();
                log.file(out_path, content.str());
                out << json{{"kept", result.kept.size()}, {"excluded", result.excluded.size()}, {"reasons", reasons}}.dump()
                    << '\n';
            } else {
                for (const auto& s : result.kept) out << json(s).dump() << '\n';
            }
            return kExitOk;
        }

        if (judge_cmd->parsed()) {
            const auto mode = *parse_judge_mode(mode_name);
            std::vector<EvaluationSample> samples;
            std::vector<CandidateResponse> responses;
            std::unique_ptr<JudgeBackend> backend;
            std::optional<SyntheticWorld> world;
            JudgeBackendConfig backend_cfg;
            if (!world_path.empty()) {
                world = make_world(read_json_file(world_path).get<WorldConfig>());
                samples = world->samples;
                responses = world->responses;
                backend = std::make_unique<SyntheticJudge>(*world, derive_seed(seed, "judge"));
                backend_cfg = in_process_backend_config();
            } else {
                if (samples_path.empty() || responses_path.empty() || endpoint.empty()) {
                    err << "error: judge needs --world, or --samples, --responses and --endpoint\n";
                    return kExitUsage;
                }
                samples = ingest_samples(samples_path);
                responses = ingest_responses(responses_path);
                backend = std::make_unique<HttpJudgeBackend>();
                backend_cfg.endpoint = endpoint;
                backend_cfg.model_name = model_name;
            }
            const auto validation = validate_dataset(samples, responses);
            if (!validation.complete) throw DataError("dataset incomplete: " + std::to_string(validation.issue_count()) + " issue(s)");
            std::map<std::string, std::vector<CandidateResponse>> by_sample;
            for (const auto& r : responses) by_sample[r.sample_id].push_back(r);
            const auto rubric = Rubric::default_rubric();
            std::vector<BlindedRequest> requests;
            for (const auto& s : samples) {
                auto& group = by_sample[s.sample_id];
                std::sort(group.begin(), group.end(),
                          [](const auto& x, const auto& y) { return x.checkpoint_id < y.checkpoint_id; });
                if (mode == JudgeMode::pointwise) {
                    for (const auto& r : group) requests.push_back(build_request(mode, s, {r}, rubric, seed));
                } else if (mode == JudgeMode::listwise) {
                    requests.push_back(build_request(mode, s, group, rubric, seed));
                } else {
                    for (std::size_t i = 0; i < group.size(); ++i)
                        for (std::size_t k = i + 1; k < group.size(); ++k) {
                            auto [ab, ba] = pairwise_both_orders(s, group[i], group[k], rubric, seed);
                            requests.push_back(std::move(ab));
                            requests.push_back(std::move(ba));
                        }
                }
            }
            log.config(json{{"mode", mode_name}, {"world", world_path}, {"endpoint", endpoint}, {"model", model_name}});
            log.seed(seed);
            const auto result = run_judge_stage(mode_name, requests, *backend, backend_cfg, 0.2);
            std::ostringstream lines;
            for (const auto& v : result.verdicts) {
                if (!v) continue;
                std::visit([&](const auto& x) { lines << json(x).dump() << '\n'; }, *v);
            }
            err << "[ckpt-arbiter] " << mode_name << ": " << result.log.requests << " requests, " << result.log.failures
                << " failed, " << result.log.repairs << " repaired\n";
            if (!out_path.empty()) {
                std::ofstream f(out_path);
                if (!f) throw DataError("cannot write " + out_path);
                f << lines.str();
                log.file(out_path, lines.str());
            } else {
                out << lines.str();
            }
            return kExitOk;
        }

        if (rank_cmd->parsed()) {
            weights.validate();
            const auto format = parse_report_format(format_name);
            log.config(json{{"method", method}, {"verdicts", verdicts_path}, {"beta", weights.beta}, {"gamma", weights.gamma}});
            if (method == "listwise") {
                print_ranking(out, borda_scores(read_verdicts_jsonl<ListwiseVerdict>(verdicts_path)), "borda", format);
            } else {
                const auto matrix = matrix_from_pointwise(read_verdicts_jsonl<PointwiseVerdict>(verdicts_path));
                const auto kind = method == "percentile" ? AggregatorKind::percentile : AggregatorKind::mean;
                print_ranking(out, aggregate_rows(matrix, make_aggregator(kind, weights)), to_string(kind), format);
            }
            return kExitOk;
        }

        if (conf_cmd->parsed()) {
            const auto matrix = matrix_from_pointwise(read_verdicts_jsonl<PointwiseVerdict>(verdicts_path));
            const auto means = aggregate_rows(matrix, make_aggregator(AggregatorKind::mean));
            const auto ranking = rank_from_scores(means);
            const CheckpointId a = ckpt_a.empty() ? ranking.at(0) : CheckpointId(ckpt_a);
            const CheckpointId b = ckpt_b.empty() ? ranking.at(1) : CheckpointId(ckpt_b);
            if (a == b) throw std::invalid_argument("checkpoints A and B must differ");
            const auto ra = matrix.row_of(a), rb = matrix.row_of(b);
            json result{{"schema_version", kSchemaVersion}, {"method", method}, {"a", a}, {"b", b}};
            log.config(json{{"method", method}, {"verdicts", verdicts_path}, {"n_resamples", n_resamples}});
            log.seed(seed);
            if (method == "gaussian") {
                const auto sa = summarize(matrix.row_values(ra));
                const auto sb = summarize(matrix.row_values(rb));
                result["p_a_over_b"] = gaussian_preference(sa, sb);
                if (sa.n >= 2 && sb.n >= 2) {
                    const auto ca = parametric_ci(sa, level);
                    const auto cb = parametric_ci(sb, level);
                    result["ci_a"] = {ca.first, ca.second};
                    result["ci_b"] = {cb.first, cb.second};
                    result["level"] = level;
                }
            } else {
                std::vector<double> xa, xb;
                for (std::size_t c = 0; c < matrix.n_samples(); ++c) {
                    if (matrix.missing(ra, c) || matrix.missing(rb, c)) continue;
                    xa.push_back(matrix.value(ra, c));
                    xb.push_back(matrix.value(rb, c));
                }
                ResampleConfig rc;
                rc.n_resamples = n_resamples;
                rc.seed = seed;
                const auto boot = bootstrap_difference(xa, xb, rc, make_aggregator(AggregatorKind::mean));
                result["p_a_over_b"] = boot.probability;
                result["mean_difference"] = boot.mean_difference;
                result["std_difference"] = boot.std_difference;
                result["n_resamples"] = boot.n_resamples;
                result["seed"] = seed;
            }
            out << result.dump(2) << '\n';
            return kExitOk;
        }

        if (stab_cmd->parsed()) {
            const auto matrix = matrix_from_pointwise(read_verdicts_jsonl<PointwiseVerdict>(verdicts_path));
            ResampleConfig rc;
            rc.n_resamples = trials;
            rc.subsample_size = subsample_size ? subsample_size : std::max<std::size_t>(1, 4 * matrix.n_samples() / 5);
            rc.seed = seed;
            rc.replacement = false;
            const auto kind = parse_aggregator_kind(aggregator_name);
            log.config(json{{"trials", trials}, {"subsample_size", rc.subsample_size}, {"aggregator", aggregator_name}});
            log.seed(seed);
            const auto runs = subsample_trials(matrix, rc, make_aggregator(kind));
            out << json{{"schema_version", kSchemaVersion},
                        {"trials", trials},
                        {"subsample_size", rc.subsample_size},
                        {"flip_rate", flip_rate(runs)},
                        {"inter_run_agreement", inter_run_agreement(runs)},
                        {"top1_consistency", top1_consistency(runs)},
                        {"modal_top1", modal_top1(runs)}}
                       .dump(2)
                << '\n';
            return kExitOk;
        }

        if (pipeline_run->parsed()) {
            auto spec = load_run_spec(config_path);
            if (seed_override) spec.pipeline.resample.seed = *seed_override;
            if (aggregator_override) spec.pipeline.aggregator = parse_aggregator_kind(*aggregator_override);
            if (top_k_override) spec.pipeline.top_k_after_pointwise = *top_k_override;
            if (resamples_override) spec.pipeline.resample.n_resamples = *resamples_override;
            if (no_human_loop) spec.pipeline.human_loop_enabled = false;
            spec.pipeline.validate();

            json effective = spec.pipeline;
            if (spec.world) effective["world"] = *spec.world;
            const auto hash = InvocationLog::config_hash(effective);
            log.config(effective);
            log.seed(spec.pipeline.resample.seed);
            if (run_id.empty()) run_id = spec.run_id.value_or("run-" + timestamp_id() + "-" + hash.substr(0, 8));
            auto store = open_store(run_id);
            persist_logged(store, log, "config", effective);

            PipelineInputs inputs;
            std::optional<SyntheticWorld> world;
            std::unique_ptr<JudgeBackend> backend;
            JudgeBackendConfig backend_cfg = spec.judge;
            if (spec.world) {
                world = make_world(*spec.world);
                inputs.samples = world->samples;
                inputs.responses = world->responses;
                backend = std::make_unique<SyntheticJudge>(
                    *world, spec.judge_session_seed.value_or(derive_seed(spec.pipeline.resample.seed, "judge")));
                backend_cfg = in_process_backend_config();
            } else {
                inputs.samples = ingest_samples(*spec.samples);
                inputs.responses = ingest_responses(*spec.responses);
                backend = std::make_unique<HttpJudgeBackend>();
                if (backend_cfg.model_name.empty()) backend_cfg.model_name = "judge";
            }
            if (spec.curation) {
                auto curated = curate(inputs.samples, *spec.curation);
                std::set<std::string> kept;
                for (const auto& s : curated.kept) kept.insert(s.sample_id);
                std::erase_if(inputs.responses, [&](const CandidateResponse& r) { return !kept.contains(r.sample_id); });
                inputs.samples = std::move(curated.kept);
                persist_logged(store, log, "curation",
                               json{{"kept", inputs.samples.size()}, {"excluded", curated.excluded.size()}});
            }

            CountingBackend counted(*backend);
            std::optional<AdjudicationQueue> queue;
            if (spec.pipeline.human_loop_enabled)
                queue.emplace(store, AdjudicationQueue::Options{spec.pipeline.resample.seed,
                                                                spec.pipeline.max_verdicts_per_ticket, std::nullopt});
            const auto report =
                run_pipeline(inputs, counted, backend_cfg, spec.pipeline, queue ? &*queue : nullptr);
            // The queue wrote ticket artifacts into the same run; reload the manifest view.
            store = open_store(run_id);
            persist_logged(store, log, "selection_report", report);
            log.note("judge calls: pointwise=" + std::to_string(counted.calls(JudgeMode::pointwise)) +
                     " listwise=" + std::to_string(counted.calls(JudgeMode::listwise)) +
                     " pairwise=" + std::to_string(counted.calls(JudgeMode::pairwise)));
            print_selection_summary(out, report, store);
            return kExitOk;
        }

        if (sim_cmd->parsed()) {
            const auto world_cfg = read_json_file(world_path).get<WorldConfig>();
            PipelineConfig pcfg;
            if (!config_path.empty()) pcfg = read_json_file(config_path).get<PipelineConfig>();
            pcfg.validate();
            json effective{{"world", world_cfg}, {"pipeline", pcfg}, {"campaigns", campaigns},
                           {"subsample", sim_subsample ? json(*sim_subsample) : json(nullptr)},
                           {"pipeline_method", with_pipeline}, {"curation_contrast", curation_contrast}};
            const auto hash = InvocationLog::config_hash(effective);
            log.config(effective);
            log.seed(world_cfg.seed);
            if (run_id.empty()) run_id = "sim-" + timestamp_id() + "-" + hash.substr(0, 8);
            auto store = open_store(run_id);
            persist_logged(store, log, "config", effective);

            const auto world = make_world(world_cfg);
            if (!export_dir.empty()) {
                fs::create_directories(export_dir);
                write_jsonl(fs::path(export_dir) / "samples.jsonl", world.samples);
                write_jsonl(fs::path(export_dir) / "responses.jsonl", world.responses);
                log.note("exported world data to " + export_dir);
            }
            ExperimentOptions opts;
            opts.n_campaigns = campaigns;
            opts.subsample_size = sim_subsample;
            opts.include_pipeline = with_pipeline;
            const auto metrics = run_experiment(world, pcfg, opts);
            persist_logged(store, log, "experiment_metrics", metrics);

            ReportBundle bundle;
            bundle.tables["global_consistency"] = consistency_table(metrics);
            bundle.tables["appendix_b"] = appendix_b_table(metrics);
            if (curation_contrast) {
                auto curated_cfg = world_cfg;
                curated_cfg.ambiguous_fraction = 0.0;
                const auto curated = run_experiment(make_world(curated_cfg), pcfg, opts);
                persist_logged(store, log, "experiment_metrics_curated", curated);
                bundle.tables["curation_metrics"] =
                    curation_table(curated.methods.at("pointwise_mean"), metrics.methods.at("pointwise_mean"));
            }
            bundle.provenance = {store.run_id(), hash, {{"world", world_cfg.seed}}, {}};
            for (const auto& [name, entry] : store.manifest()) bundle.provenance.artifacts[name] = entry.sha256;
            persist_logged(store, log, "report_bundle", bundle_to_json(bundle));
            out << render_report(bundle, ReportFormat::markdown);
            return kExitOk;
        }

        if (report_cmd->parsed()) {
            auto store = open_store(run_id);
            const auto format = parse_report_format(format_name);
            ReportBundle bundle;
            if (store.contains("report_bundle")) bundle = bundle_from_json(store.load("report_bundle"));
            const auto name = latest_report_name(store);
            if (!name.empty()) {
                auto report = store.load(name).get<SelectionReport>();
                if (resolve) {
                    std::size_t applied = 0;
                    for (const auto& t : report.tickets) applied += t.verdicts;
                    auto verdict_names = store.names_with_prefix("human_verdict_");
                    std::sort(verdict_names.begin(), verdict_names.end());
                    std::vector<PairwiseVerdict> fresh;
                    for (std::size_t i = applied; i < verdict_names.size(); ++i)
                        fresh.push_back(store.load(verdict_names[i]).get<PairwiseVerdict>());
                    if (!fresh.empty()) {
                        report = resolve_human_verdicts(report, fresh);
                        AdjudicationQueue queue(store, {report.config_echo.resample.seed,
                                                        report.config_echo.max_verdicts_per_ticket, std::nullopt});
                        for (const auto& t : report.tickets)
                            if (!t.open) queue.close(t.ticket_id);
                        store = open_store(run_id);
                        const auto n = store.names_with_prefix("selection_report_resolved_").size();
                        persist_logged(store, log, numbered("selection_report_resolved_", n + 1), report);
                    }
                    log.note("merged " + std::to_string(fresh.size()) + " human verdict(s); status " + report.status);
                }
                auto from_report = bundle_from_selection(report);
                for (auto& [k, t] : from_report.tables) bundle.tables[k] = std::move(t);
                bundle.provenance.seeds["pipeline"] = report.config_echo.resample.seed;
            }
            bundle.provenance.run_id = store.run_id();
            if (store.contains("config")) bundle.provenance.config_hash = InvocationLog::config_hash(store.load("config"));
            for (const auto& [n, entry] : store.manifest()) bundle.provenance.artifacts[n] = entry.sha256;
            log.config(json{{"run_id", run_id}, {"format", format_name}});
            out << render_report(bundle, format);
            return kExitOk;
        }

        if (serve_cmd->parsed()) {
            auto store = open_store(run_id);
            AdjudicationQueue::Options qopts;
            if (store.contains("config")) {
                const auto cfg = store.load("config");
                qopts.seed = cfg.value("seed", std::uint64_t{0});
                qopts.max_verdicts_per_ticket = cfg.value("max_verdicts_per_ticket", std::size_t{5});
            }
            AdjudicationQueue queue(store, qopts);
            ServiceOptions sopts;
            sopts.host = host;
            sopts.port = port;
            if (const char* token = std::getenv("CKPT_ARBITER_REVIEW_TOKEN"); token && *token) sopts.bearer_token = token;
            if (!static_dir.empty()) sopts.static_dir = static_dir;
            sopts.image_root = image_root;
            log.config(json{{"run_id", run_id}, {"host", host}, {"port", port}});
            AdjudicationService service(queue, sopts);
            err << "[ckpt-arbiter] serving run " << run_id << " on " << host << ':' << port << '\n';
            service.run();
            return kExitOk;
        }
    } catch (const JudgeBackendError& e) {
        err << "judge backend error: " << e.what() << '\n';
        return kExitBackend;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::invalid_argument& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace ckpt_arbiter
