#pragma once

// Case manifests, end-to-end runs (migrate, evaluate, aggregate) and report
// rendering in the shape of the correctness, preservation and response-time
// tables.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "coevolve/error.hpp"
#include "coevolve/llm_migrator.hpp"
#include "coevolve/metrics.hpp"

namespace coevolve {

class ManifestError : public Error {
public:
    using Error::Error;
};

struct CaseEntry {
    std::string name;
    std::filesystem::path grammar_old_path;
    std::filesystem::path grammar_new_path;
    std::filesystem::path instance1_path;
    std::optional<std::filesystem::path> instance2_path;
    std::string notes;
};

/// Paths are resolved against the manifest's directory when loaded.
struct CaseManifest {
    std::vector<CaseEntry> cases;
    PromptConfig prompt;
    std::size_t repetitions = 10;
    nlohmann::json provider;                  // HttpProviderConfig fields, for the http backend
    std::optional<std::filesystem::path> transcripts;  // JSONL store for replay or recording
    std::string provider_id;                  // replay: id the transcripts were recorded under
};

/// Throws ManifestError for malformed JSON, missing files or duplicate names.
CaseManifest load_manifest(const std::filesystem::path& file);
CaseManifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir);

enum class Backend { Http, Replay, Rules };
Backend backend_from_string(const std::string& name);
std::string_view to_string(Backend backend);

struct RunRecord {
    std::size_t index = 0;  // 1-based
    std::optional<RunMetrics> metrics;
    std::string error_kind;  // empty on success
    std::string error_message;
};

struct CaseResult {
    std::string name;
    std::string notes;
    std::vector<RunRecord> runs;
    std::optional<AggregateMetrics> aggregate;
    std::optional<RunMetrics> reference;  // instance 2 scored as a candidate
    std::string abort_reason;             // non-empty when the case produced no usable run
};

struct ExperimentReport {
    std::string label;  // provider id, or "rules"
    Backend backend = Backend::Rules;
    std::vector<CaseResult> cases;

    bool any_aborted() const;
};

/// Runs every case, writing per-run artifacts under `out_dir/<case>/run-<k>/`.
/// A run directory that already holds `run.json` is reused instead of rerun.
/// `provider` is required for the http and replay backends.
ExperimentReport run_experiment(const CaseManifest& manifest, Backend backend, Provider* provider,
                                const std::filesystem::path& out_dir,
                                std::optional<std::size_t> repetitions = std::nullopt);

/// "92.39" for 0.92391, "N/A" when undefined.
std::string format_percent(const std::optional<double>& ratio);
std::string format_number(double value);

std::vector<std::string> correctness_header();
std::vector<std::string> correctness_cells(const AggregateMetrics& a);
std::vector<std::string> preservation_header();
std::vector<std::string> preservation_cells(const AggregateMetrics& a);

nlohmann::ordered_json to_json(const RunMetrics& m);
nlohmann::ordered_json to_json(const AggregateMetrics& a);

struct RenderedReport {
    std::string correctness_csv;
    std::string preservation_csv;
    std::string response_time_csv;
    std::string markdown;
    std::string json;
};

RenderedReport render_report(const ExperimentReport& report);

/// Writes correctness.csv, preservation.csv, response_time.csv, report.md and report.json.
void write_report(const RenderedReport& rendered, const std::filesystem::path& out_dir);

std::string csv_line(const std::vector<std::string>& cells);

}  // namespace coevolve
