#include <chrono>
#include <cmath>

#include "coevolve/experiment.hpp"
#include "coevolve/grammar.hpp"
#include "coevolve/human_info.hpp"
#include "coevolve/instance.hpp"
#include "coevolve/io.hpp"
#include "coevolve/rules_migrator.hpp"

namespace coevolve {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct CaseInputs {
    std::string grammar_old_text, grammar_new_text, instance_text;
    GrammarAst g1, g2;
    LosslessInstance inst1;
    HumanInfoProfile profile;
    std::size_t line_req;

    explicit CaseInputs(const CaseEntry& c)
        : grammar_old_text(read_text_file(c.grammar_old_path)),
          grammar_new_text(read_text_file(c.grammar_new_path)),
          instance_text(read_text_file(c.instance1_path)),
          g1(parse_grammar(grammar_old_text)),
          g2(parse_grammar(grammar_new_text)),
          inst1(lex_for_evaluation(instance_text, g1, g2)),
          profile(extract_human_info(lex_instance(instance_text, g1), &g1)),
          line_req(compute_line_req(inst1, g2)) {}
};

// What a finished run leaves on disk, enough to rescore it without rerunning.
struct StoredRun {
    std::string error_kind;
    std::string error_message;
    double wall_clock_s = 0.0;
    bool has_candidate = false;
};

void store_run(const fs::path& dir, const std::string& candidate_name, const StoredRun& r,
               const std::string* candidate) {
    if (candidate) write_text_file(dir / candidate_name, *candidate);
    ordered_json j;
    j["status"] = r.error_kind.empty() ? "ok" : r.error_kind;
    j["error_message"] = r.error_message;
    j["wall_clock_s"] = r.wall_clock_s;
    j["candidate"] = r.has_candidate ? json(candidate_name) : json(nullptr);
    write_text_file(dir / "run.json", j.dump(2) + "\n");
}

std::optional<StoredRun> load_stored(const fs::path& dir, const std::string& candidate_name) {
    if (!fs::exists(dir / "run.json")) return std::nullopt;
    const json j = json::parse(read_text_file(dir / "run.json"));
    StoredRun r;
    const std::string status = j.at("status").get<std::string>();
    if (status != "ok") r.error_kind = status;
    r.error_message = j.value("error_message", std::string{});
    r.wall_clock_s = j.value("wall_clock_s", 0.0);
    r.has_candidate = !j.at("candidate").is_null();
    if (r.has_candidate && !fs::exists(dir / candidate_name)) return std::nullopt;
    return r;
}

double round2(double seconds) { return std::round(seconds * 100.0) / 100.0; }

}  // namespace

bool ExperimentReport::any_aborted() const {
    for (const auto& c : cases)
        if (!c.abort_reason.empty()) return true;
    return false;
}

ExperimentReport run_experiment(const CaseManifest& manifest, Backend backend, Provider* provider,
                                const fs::path& out_dir, std::optional<std::size_t> repetitions) {
    if (backend != Backend::Rules && !provider) throw Error("the " + std::string(to_string(backend)) +
                                                            " backend needs a provider");
    ExperimentReport report;
    report.backend = backend;
    report.label = backend == Backend::Rules ? "rules" : provider->id();
    const std::size_t reps = backend == Backend::Rules ? 1 : repetitions.value_or(manifest.repetitions);
    if (reps == 0) throw Error("repetitions must be at least 1");
    auto* replay = dynamic_cast<ReplayProvider*>(provider);

    for (const auto& c : manifest.cases) {
        CaseResult result;
        result.name = c.name;
        result.notes = c.notes;
        const fs::path case_dir = out_dir / c.name;
        const std::string candidate_name = "candidate" + c.instance1_path.extension().string();

        std::optional<CaseInputs> in;
        try {
            in.emplace(c);
        } catch (const Error& e) {
            result.abort_reason = e.what();
            report.cases.push_back(std::move(result));
            continue;
        }
        if (c.instance2_path) {
            try {
                result.reference = evaluate_run(in->inst1, in->profile, read_text_file(*c.instance2_path), in->g2,
                                                in->line_req, 0.0);
            } catch (const Error&) {
            }
        }
        const auto request = build_request(in->grammar_old_text, in->grammar_new_text, in->instance_text,
                                           manifest.prompt);

        for (std::size_t k = 1; k <= reps; ++k) {
            const fs::path run_dir = case_dir / ("run-" + std::to_string(k));
            RunRecord rec;
            rec.index = k;
            std::optional<StoredRun> stored = load_stored(run_dir, candidate_name);
            if (stored) {
                if (replay) replay->advance(request);
            } else {
                StoredRun fresh;
                std::string candidate;
                if (backend == Backend::Rules) {
                    try {
                        EditScript script;
                        const auto start = std::chrono::steady_clock::now();
                        candidate = migrate_with_rules(in->instance_text, in->g1, in->g2, {}, &script);
                        fresh.wall_clock_s = round2(
                            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
                        fresh.has_candidate = true;
                        write_text_file(run_dir / "edit_script.json",
                                        edit_script_to_json(script, lex_instance(in->instance_text, in->g1)));
                    } catch (const UnsupportedChange& e) {
                        fresh.error_kind = "UnsupportedChange";
                        fresh.error_message = e.what();
                    } catch (const Error& e) {
                        fresh.error_kind = "Error";
                        fresh.error_message = e.what();
                    }
                } else {
                    std::optional<MigrationSession> session;
                    try {
                        session = run_migration(in->grammar_old_text, in->grammar_new_text, in->instance_text,
                                                manifest.prompt, *provider);
                    } catch (const EmptyResponse& e) {
                        session = e.session();
                        fresh.error_kind = "EmptyResponse";
                        fresh.error_message = e.what();
                    } catch (const TokenBudgetExceeded& e) {
                        session = e.session();
                        fresh.error_kind = "TokenBudgetExceeded";
                        fresh.error_message = e.what();
                    } catch (const ReplayMiss& e) {
                        result.abort_reason = std::string("ReplayMiss: ") + e.what();
                        rec.error_kind = "ReplayMiss";
                        rec.error_message = e.what();
                        result.runs.push_back(std::move(rec));
                        break;
                    } catch (const ProviderError& e) {
                        fresh.error_kind = "ProviderError";
                        fresh.error_message = e.what();
                    }
                    if (session) {
                        write_text_file(run_dir / "session.json", session_to_json(*session).dump(2) + "\n");
                        candidate = session->output;
                        fresh.wall_clock_s = session->wall_clock_s;
                        fresh.has_candidate = true;
                    }
                }
                store_run(run_dir, candidate_name, fresh, fresh.has_candidate ? &candidate : nullptr);
                stored = fresh;
            }

            rec.error_kind = stored->error_kind;
            rec.error_message = stored->error_message;
            if (stored->has_candidate) {
                rec.metrics = evaluate_run(in->inst1, in->profile, read_text_file(run_dir / candidate_name), in->g2,
                                           in->line_req, stored->wall_clock_s);
                write_text_file(run_dir / "metrics.json", to_json(*rec.metrics).dump(2) + "\n");
            }
            result.runs.push_back(std::move(rec));
        }

        std::vector<RunMetrics> scored;
        for (const auto& r : result.runs)
            if (r.metrics) scored.push_back(*r.metrics);
        if (!scored.empty() && result.abort_reason.empty())
            result.aggregate = aggregate(scored);
        else if (result.abort_reason.empty())
            result.abort_reason = "no run produced a candidate";
        report.cases.push_back(std::move(result));
    }
    return report;
}

}  // namespace coevolve
