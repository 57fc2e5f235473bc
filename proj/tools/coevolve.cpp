#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>

#include "coevolve/experiment.hpp"
#include "coevolve/grammar.hpp"
#include "coevolve/grammar_diff.hpp"
#include "coevolve/human_info.hpp"
#include "coevolve/instance.hpp"
#include "coevolve/io.hpp"
#include "coevolve/llm_migrator.hpp"
#include "coevolve/metrics.hpp"
#include "coevolve/recognizer.hpp"
#include "coevolve/rules_migrator.hpp"

using namespace coevolve;
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

GrammarAst load_grammar(const std::string& path) { return parse_grammar(read_text_file(path)); }

ordered_json path_json(const std::optional<NodePath>& p) {
    if (!p) return nullptr;
    return {{"rule", p->rule}, {"steps", p->steps}};
}

int cmd_diff(const std::string& old_path, const std::string& new_path, const std::string& format,
             const std::string& name) {
    const GrammarAst g1 = load_grammar(old_path);
    const GrammarAst g2 = load_grammar(new_path);
    const GrammarDelta delta = diff_grammars(g1, g2);
    const DeltaSummary s = summarize_delta(delta);
    std::string primary;
    for (auto op : s.primary_operation_types) primary += (primary.empty() ? "" : ", ") + std::string(to_string(op));

    if (format == "json") {
        ordered_json j;
        j["changes"] = ordered_json::array();
        for (const auto& c : delta.changes)
            j["changes"].push_back({{"operation", to_string(c.operation)},
                                    {"subject", to_string(c.subject)},
                                    {"kind", to_string(c.kind)},
                                    {"rule", c.rule_name},
                                    {"impact", to_string(c.impact)},
                                    {"detail", c.detail},
                                    {"old_path", path_json(c.old_path)},
                                    {"new_path", path_json(c.new_path)}});
        j["summary"] = {{"total", s.total},
                        {"breaking", s.breaking},
                        {"non_breaking", s.non_breaking},
                        {"primary_operation_types", primary}};
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    std::printf("%-3s %-8s %-9s %-24s %-12s %s\n", "#", "Op", "Subject", "Rule", "Impact", "Detail");
    std::size_t i = 0;
    for (const auto& c : delta.changes)
        std::printf("%-3zu %-8s %-9s %-24s %-12s %s\n", ++i, std::string(to_string(c.operation)).c_str(),
                    std::string(to_string(c.subject)).c_str(), c.rule_name.c_str(),
                    std::string(to_string(c.impact)).c_str(), c.detail.c_str());
    std::printf("\n%s", csv_line({"Case Language", "Total Changes", "Breaking", "Non-breaking",
                                  "Primary Operation Types"}).c_str());
    std::printf("%s", csv_line({name.empty() ? g2.name() : name, std::to_string(s.total), std::to_string(s.breaking),
                                std::to_string(s.non_breaking), primary})
                          .c_str());
    return 0;
}

int cmd_check(const std::string& grammar_path, const std::string& instance_path, const std::string& format) {
    const GrammarAst g = load_grammar(grammar_path);
    const LosslessInstance inst = lex_instance(read_text_file(instance_path), g, {}, LexMode::Lenient);
    const ConformanceReport r = check_conformance(inst, g);
    if (format == "json") {
        ordered_json j;
        j["conforms"] = r.conforms;
        j["error_lines"] = r.error_lines;
        j["errors"] = ordered_json::array();
        for (const auto& e : r.errors)
            j["errors"].push_back({{"line", e.line}, {"col", e.col}, {"message", e.message},
                                   {"expected", e.expected}, {"lines", e.lines}});
        std::cout << j.dump(2) << "\n";
    } else if (r.conforms) {
        std::cout << instance_path << ": conforms\n";
    } else {
        for (const auto& e : r.errors) std::cout << instance_path << ":" << e.line << ":" << e.col << ": " << e.message << "\n";
        std::cout << r.error_lines.size() << " error line(s)\n";
    }
    return r.conforms ? 0 : 1;
}

json read_json_file(const std::string& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw Error(path + ": " + e.what());
    }
}

struct ProviderOptions {
    std::string config;       // JSON with "provider" and "defaults"
    std::string transcripts;  // replay source, or recording target for http
    std::string provider_id;
};

std::shared_ptr<Provider> make_provider(Backend backend, const ProviderOptions& o, const json& manifest_provider,
                                        const std::optional<fs::path>& manifest_transcripts,
                                        const std::string& manifest_provider_id) {
    const json config = o.config.empty() ? json::object() : read_json_file(o.config);
    std::string transcripts = o.transcripts;
    if (transcripts.empty() && manifest_transcripts) transcripts = manifest_transcripts->string();
    if (backend == Backend::Replay) {
        const std::string id = !o.provider_id.empty() ? o.provider_id
                               : !manifest_provider_id.empty() ? manifest_provider_id
                                                               : config.value("provider_id", std::string{});
        if (transcripts.empty() || id.empty()) throw Error("replay needs a transcript file and a provider id");
        if (!fs::exists(transcripts)) throw Error("transcript file " + transcripts + " does not exist");
        return std::make_shared<ReplayProvider>(std::make_shared<const TranscriptStore>(transcripts), id);
    }
    const json provider = config.contains("provider") ? config.at("provider") : manifest_provider;
    if (provider.is_null()) throw Error("the http backend needs provider settings (--config or manifest)");
    std::shared_ptr<Provider> http = std::make_shared<HttpChatProvider>(http_provider_config_from_json(provider));
    if (transcripts.empty()) return http;
    return std::make_shared<RecordingProvider>(http, std::make_shared<TranscriptStore>(transcripts));
}

PromptConfig prompt_from(const std::string& config_path, PromptConfig base) {
    if (config_path.empty()) return base;
    const json config = read_json_file(config_path);
    return config.contains("defaults") ? prompt_config_from_json(config.at("defaults"), base) : base;
}

int cmd_migrate(const std::string& old_path, const std::string& new_path, const std::string& instance_path,
                const std::string& backend_name, std::size_t reps, const std::string& out,
                const ProviderOptions& po) {
    const Backend backend = backend_from_string(backend_name);
    const std::string g1_text = read_text_file(old_path);
    const std::string g2_text = read_text_file(new_path);
    const std::string i1_text = read_text_file(instance_path);
    const std::string candidate_name = "candidate" + fs::path(instance_path).extension().string();

    if (backend == Backend::Rules) {
        const GrammarAst g1 = parse_grammar(g1_text);
        const GrammarAst g2 = parse_grammar(g2_text);
        EditScript script;
        std::string result;
        try {
            result = migrate_with_rules(i1_text, g1, g2, {}, &script);
        } catch (const UnsupportedChange& e) {
            std::cerr << "UnsupportedChange: " << e.what() << "\n";
            return 1;
        }
        write_text_file(fs::path(out) / candidate_name, result);
        write_text_file(fs::path(out) / "edit_script.json", edit_script_to_json(script, lex_instance(i1_text, g1)));
        std::cout << "wrote " << (fs::path(out) / candidate_name).string() << " (" << script.edits.size()
                  << " edit(s))\n";
        return 0;
    }

    const auto provider = make_provider(backend, po, nullptr, std::nullopt, "");
    const PromptConfig prompt = prompt_from(po.config, PromptConfig{});
    int failures = 0;
    run_repetitions(g1_text, g2_text, i1_text, prompt, *provider, reps,
                    [&](std::size_t k, const RepetitionResult& r) {
                        const fs::path dir = fs::path(out) / ("run-" + std::to_string(k + 1));
                        if (r.session) {
                            write_text_file(dir / "session.json", session_to_json(*r.session).dump(2) + "\n");
                            write_text_file(dir / candidate_name, r.session->output);
                        }
                        if (!r.error_kind.empty()) {
                            ++failures;
                            std::cerr << "run " << k + 1 << ": " << r.error_kind << ": " << r.error_message << "\n";
                        }
                    });
    std::cout << reps - failures << " of " << reps << " run(s) succeeded; output in " << out << "\n";
    return failures == 0 ? 0 : 1;
}

int cmd_eval(const std::string& original, const std::string& candidate, const std::string& grammar_new,
             const std::string& grammar_old, const std::string& reference, const std::string& format,
             double response_time) {
    const GrammarAst g2 = load_grammar(grammar_new);
    const std::string i1 = read_text_file(original);
    std::optional<GrammarAst> g1;
    if (!grammar_old.empty()) g1 = load_grammar(grammar_old);
    const LosslessInstance inst1 = lex_for_evaluation(i1, g1 ? *g1 : g2, g2);
    const HumanInfoProfile profile =
        g1 ? extract_human_info(lex_instance(i1, *g1), &*g1) : extract_human_info(lex_candidate(i1, g2));
    const std::size_t line_req = compute_line_req(inst1, g2);

    std::vector<std::pair<std::string, RunMetrics>> rows;
    rows.emplace_back("candidate", evaluate_run(inst1, profile, read_text_file(candidate), g2, line_req, response_time));
    if (!reference.empty())
        rows.emplace_back("reference", evaluate_run(inst1, profile, read_text_file(reference), g2, line_req, 0.0));

    if (format == "json") {
        ordered_json j;
        for (const auto& [name, m] : rows) j[name] = to_json(m);
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    std::vector<std::string> header{"Candidate"};
    for (const auto& h : correctness_header()) header.push_back(h);
    for (const auto& h : preservation_header()) header.push_back(h);
    header.push_back("ResponseTime (s)");
    std::vector<std::vector<std::string>> body;
    for (const auto& [name, m] : rows) {
        const AggregateMetrics a = aggregate({m});
        std::vector<std::string> cells{name};
        for (const auto& c : correctness_cells(a)) cells.push_back(c);
        for (const auto& c : preservation_cells(a)) cells.push_back(c);
        cells.push_back(format_number(m.response_time_s));
        body.push_back(std::move(cells));
    }
    if (format == "md") {
        auto row = [](const std::vector<std::string>& cells) {
            std::string s = "|";
            for (const auto& c : cells) s += " " + c + " |";
            return s + "\n";
        };
        std::cout << row(header);
        std::string rule = "|";
        for (std::size_t i = 0; i < header.size(); ++i) rule += "---|";
        std::cout << rule << "\n";
        for (const auto& b : body) std::cout << row(b);
    } else {
        std::cout << csv_line(header);
        for (const auto& b : body) std::cout << csv_line(b);
    }
    return 0;
}

int cmd_run_experiment(const std::string& manifest_path, const std::string& backend_name, const std::string& out,
                       std::optional<std::size_t> reps, const ProviderOptions& po) {
    const Backend backend = backend_from_string(backend_name);
    CaseManifest manifest = load_manifest(manifest_path);
    manifest.prompt = prompt_from(po.config, manifest.prompt);
    std::shared_ptr<Provider> provider;
    if (backend != Backend::Rules)
        provider = make_provider(backend, po, manifest.provider, manifest.transcripts, manifest.provider_id);
    const ExperimentReport report = run_experiment(manifest, backend, provider.get(), out, reps);
    write_report(render_report(report), out);
    for (const auto& c : report.cases)
        if (!c.abort_reason.empty()) std::cerr << c.name << ": aborted: " << c.abort_reason << "\n";
    std::cout << "report written to " << out << " (" << report.cases.size() << " case(s))\n";
    return report.any_aborted() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Grammar-instance co-evolution toolkit"};
    app.require_subcommand(1);

    std::string a, b, c, d, e, format, backend, out, name;
    std::size_t reps = 1;
    double response_time = 0.0;
    ProviderOptions po;

    auto* diff = app.add_subcommand("diff", "Diff two grammar versions and classify the changes");
    diff->add_option("old", a, "Old grammar")->required()->check(CLI::ExistingFile);
    diff->add_option("new", b, "New grammar")->required()->check(CLI::ExistingFile);
    diff->add_option("--format", format, "table or json")->default_val("table")->check(CLI::IsMember({"table", "json"}));
    diff->add_option("--name", name, "Case name for the summary row");

    auto* check = app.add_subcommand("check", "Check an instance against a grammar (exit 0 iff it conforms)");
    check->add_option("grammar", a, "Grammar")->required()->check(CLI::ExistingFile);
    check->add_option("instance", b, "Instance")->required()->check(CLI::ExistingFile);
    check->add_option("--format", format, "text or json")->default_val("text")->check(CLI::IsMember({"text", "json"}));

    auto add_provider_options = [&](CLI::App* sub) {
        sub->add_option("--config", po.config, "JSON with \"provider\" settings and \"defaults\" prompt overrides")
            ->check(CLI::ExistingFile);
        sub->add_option("--transcripts", po.transcripts, "Replay source, or recording target for http");
        sub->add_option("--provider-id", po.provider_id, "Provider id the transcripts were recorded under");
    };

    auto* migrate = app.add_subcommand("migrate", "Migrate one instance");
    migrate->add_option("--grammar-old", a)->required()->check(CLI::ExistingFile);
    migrate->add_option("--grammar-new", b)->required()->check(CLI::ExistingFile);
    migrate->add_option("--instance", c)->required()->check(CLI::ExistingFile);
    migrate->add_option("--backend", backend)->required()->check(CLI::IsMember({"http", "replay", "rules"}));
    migrate->add_option("--reps", reps, "Repetitions (LLM backends)")->default_val(1)->check(CLI::PositiveNumber);
    migrate->add_option("--out", out)->required();
    add_provider_options(migrate);

    auto* eval = app.add_subcommand("eval", "Score a candidate instance");
    eval->add_option("--original", a)->required()->check(CLI::ExistingFile);
    eval->add_option("--candidate", b)->required()->check(CLI::ExistingFile);
    eval->add_option("--grammar-new", c)->required()->check(CLI::ExistingFile);
    eval->add_option("--grammar-old", d, "Enables keyword-aware lexing and compressed-line detection")
        ->check(CLI::ExistingFile);
    eval->add_option("--reference", e, "Reference instance 2, scored alongside")->check(CLI::ExistingFile);
    eval->add_option("--format", format)->default_val("csv")->check(CLI::IsMember({"csv", "json", "md"}));
    eval->add_option("--response-time", response_time, "Seconds, reported with the candidate");

    auto* run = app.add_subcommand("run-experiment", "Run every case of a manifest and write the report");
    std::optional<std::size_t> run_reps;
    run->add_option("--manifest", a)->required()->check(CLI::ExistingFile);
    run->add_option("--backend", backend)->required()->check(CLI::IsMember({"http", "replay", "rules"}));
    run->add_option("--out", out)->required();
    run->add_option("--reps", run_reps, "Override the manifest's repetitions")->check(CLI::PositiveNumber);
    add_provider_options(run);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*diff) return cmd_diff(a, b, format, name);
        if (*check) return cmd_check(a, b, format);
        if (*migrate) return cmd_migrate(a, b, c, backend, reps, out, po);
        if (*eval) return cmd_eval(a, b, c, d, e, format, response_time);
        if (*run) return cmd_run_experiment(a, backend, out, run_reps, po);
    } catch (const ReplayMiss& ex) {
        std::cerr << "ReplayMiss: " << ex.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    }
    return 0;
}
