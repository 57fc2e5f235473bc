#include <cstdio>

#include "coevolve/experiment.hpp"
#include "coevolve/io.hpp"

namespace coevolve {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ordered_json optional_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json ratio_json(const RatioSummary& r) {
    return {{"mean_of_ratios", optional_json(r.mean_of_ratios)}, {"ratio_of_means", optional_json(r.ratio_of_means)}};
}

std::string timing_label(Backend b) {
    switch (b) {
        case Backend::Rules: return "deterministic";
        case Backend::Replay: return "recorded";
        case Backend::Http: return "measured";
    }
    return "";
}

std::string md_row(const std::vector<std::string>& cells) {
    std::string out = "|";
    for (const auto& c : cells) out += " " + c + " |";
    return out + "\n";
}

std::string md_rule(std::size_t n) {
    std::string out = "|";
    for (std::size_t i = 0; i < n; ++i) out += "---|";
    return out + "\n";
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::vector<std::string> na_cells(std::size_t n) { return std::vector<std::string>(n, "N/A"); }

}  // namespace

std::string format_number(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", value);
    std::string s = buf;
    return s == "-0.00" ? "0.00" : s;
}

std::string format_percent(const std::optional<double>& ratio) {
    return ratio ? format_number(*ratio * 100.0) : "N/A";
}

std::vector<std::string> correctness_header() {
    return {"#LineReq", "#LineErr", "#LineEvl", "#LineEvlWrg", "Precision (%)", "Recall (%)", "ErrorRate (%)"};
}

std::vector<std::string> correctness_cells(const AggregateMetrics& a) {
    return {format_number(a.line_req),           format_number(a.line_err),
            format_number(a.line_evl),           format_number(a.line_evl_wrg),
            format_percent(a.precision.ratio_of_means), format_percent(a.recall.ratio_of_means),
            format_percent(a.error_rate.ratio_of_means)};
}

std::vector<std::string> preservation_header() {
    return {"#LineCmtLost", "#LineCmtSave", "CmtRet (%)", "#LineFmtLost", "#LineFmtSave", "FmtRet (%)"};
}

std::vector<std::string> preservation_cells(const AggregateMetrics& a) {
    return {format_number(a.cmt_lost), format_number(a.cmt_save), format_percent(a.cmt_ret.ratio_of_means),
            format_number(a.fmt_lost), format_number(a.fmt_save), format_percent(a.fmt_ret.ratio_of_means)};
}

std::string csv_line(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        const std::string& c = cells[i];
        if (c.find_first_of(",\"\n\r") == std::string::npos) {
            out += c;
            continue;
        }
        out += '"';
        for (char ch : c) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        out += '"';
    }
    return out + "\n";
}

ordered_json to_json(const RunMetrics& m) {
    const auto& c = m.correctness;
    const auto& p = m.preservation;
    ordered_json j;
    j["line_req"] = c.line_req;
    j["line_err"] = c.line_err;
    j["line_evl"] = c.line_evl;
    j["line_evl_wrg"] = c.line_evl_wrg;
    j["line_inserted"] = c.line_inserted;
    j["candidate_lines"] = c.candidate_lines;
    j["precision"] = optional_json(c.precision);
    j["recall"] = optional_json(c.recall);
    j["error_rate"] = c.error_rate;
    j["candidate_error_lines"] = c.candidate_error_lines;
    j["cmt_lost"] = p.cmt_lost;
    j["cmt_save"] = p.cmt_save;
    j["cmt_ret"] = optional_json(p.cmt_ret);
    j["fmt_lost"] = p.fmt_lost;
    j["fmt_save"] = p.fmt_save;
    j["fmt_ret"] = optional_json(p.fmt_ret);
    j["response_time_s"] = m.response_time_s;
    j["failed_generation"] = m.failed_generation;
    return j;
}

ordered_json to_json(const AggregateMetrics& a) {
    ordered_json j;
    j["run_count"] = a.run_count;
    j["failed_runs"] = a.failed_runs;
    j["line_req"] = a.line_req;
    j["line_err"] = a.line_err;
    j["line_evl"] = a.line_evl;
    j["line_evl_wrg"] = a.line_evl_wrg;
    j["line_inserted"] = a.line_inserted;
    j["candidate_lines"] = a.candidate_lines;
    j["cmt_lost"] = a.cmt_lost;
    j["cmt_save"] = a.cmt_save;
    j["fmt_lost"] = a.fmt_lost;
    j["fmt_save"] = a.fmt_save;
    j["response_time_s"] = a.response_time_s;
    j["precision"] = ratio_json(a.precision);
    j["recall"] = ratio_json(a.recall);
    j["error_rate"] = ratio_json(a.error_rate);
    j["cmt_ret"] = ratio_json(a.cmt_ret);
    j["fmt_ret"] = ratio_json(a.fmt_ret);
    return j;
}

RenderedReport render_report(const ExperimentReport& report) {
    RenderedReport out;
    const std::vector<std::string> lead{"LLM", "DSL"};
    const auto corr_head = concat(lead, correctness_header());
    const auto pres_head = concat(lead, preservation_header());
    const std::vector<std::string> time_head{"LLM", "DSL", "ResponseTime (s)", "Timing"};
    const std::string timing = timing_label(report.backend);

    std::string md_corr = md_row(corr_head) + md_rule(corr_head.size());
    std::string md_pres = md_row(pres_head) + md_rule(pres_head.size());
    std::string md_time = md_row(time_head) + md_rule(time_head.size());
    const std::vector<std::string> conv_head{"DSL", "Precision (%)", "Recall (%)", "ErrorRate (%)", "CmtRet (%)",
                                             "FmtRet (%)"};
    std::string md_conv = md_row(conv_head) + md_rule(conv_head.size());
    std::string md_issues;

    out.correctness_csv = csv_line(corr_head);
    out.preservation_csv = csv_line(pres_head);
    out.response_time_csv = csv_line(time_head);

    ordered_json j;
    j["label"] = report.label;
    j["backend"] = to_string(report.backend);
    j["timing"] = timing;
    j["cases"] = ordered_json::array();

    for (const auto& c : report.cases) {
        const std::vector<std::string> id{report.label, c.name};
        std::vector<std::string> corr, pres, time;
        if (c.aggregate) {
            corr = correctness_cells(*c.aggregate);
            pres = preservation_cells(*c.aggregate);
            time = {format_number(c.aggregate->response_time_s), timing};
            const auto& a = *c.aggregate;
            md_conv += md_row({c.name, format_percent(a.precision.mean_of_ratios), format_percent(a.recall.mean_of_ratios),
                               format_percent(a.error_rate.mean_of_ratios), format_percent(a.cmt_ret.mean_of_ratios),
                               format_percent(a.fmt_ret.mean_of_ratios)});
        } else {
            corr = na_cells(correctness_header().size());
            pres = na_cells(preservation_header().size());
            time = {"N/A", timing};
        }
        out.correctness_csv += csv_line(concat(id, corr));
        out.preservation_csv += csv_line(concat(id, pres));
        out.response_time_csv += csv_line(concat(id, time));
        md_corr += md_row(concat(id, corr));
        md_pres += md_row(concat(id, pres));
        md_time += md_row(concat(id, time));

        if (!c.abort_reason.empty()) md_issues += "- " + c.name + ": aborted (" + c.abort_reason + ")\n";
        for (const auto& r : c.runs)
            if (!r.error_kind.empty())
                md_issues += "- " + c.name + " run " + std::to_string(r.index) + ": " + r.error_kind + "\n";

        ordered_json cj;
        cj["name"] = c.name;
        cj["notes"] = c.notes;
        cj["status"] = c.abort_reason.empty() ? "ok" : "aborted";
        cj["abort_reason"] = c.abort_reason;
        cj["aggregate"] = c.aggregate ? to_json(*c.aggregate) : ordered_json(nullptr);
        cj["reference"] = c.reference ? to_json(*c.reference) : ordered_json(nullptr);
        cj["runs"] = ordered_json::array();
        for (const auto& r : c.runs) {
            ordered_json rj;
            rj["run"] = r.index;
            rj["status"] = r.error_kind.empty() ? "ok" : r.error_kind;
            rj["error_message"] = r.error_message;
            rj["metrics"] = r.metrics ? to_json(*r.metrics) : ordered_json(nullptr);
            cj["runs"].push_back(std::move(rj));
        }
        j["cases"].push_back(std::move(cj));
    }

    out.markdown = "# Experiment report\n\nBackend: " + std::string(to_string(report.backend)) +
                   " (" + report.label + "). Response times are " + timing +
                   ".\n\n## Correctness\n\n" + md_corr + "\n## Preservation\n\n" + md_pres +
                   "\n## Response time\n\n" + md_time +
                   "\n## Mean of per-run ratios\n\nThe tables above apply each formula to the mean counts. "
                   "These are the means of the per-run ratios.\n\n" +
                   md_conv;
    if (!md_issues.empty()) out.markdown += "\n## Errors\n\n" + md_issues;
    out.json = j.dump(2) + "\n";
    return out;
}

void write_report(const RenderedReport& r, const std::filesystem::path& out_dir) {
    write_text_file(out_dir / "correctness.csv", r.correctness_csv);
    write_text_file(out_dir / "preservation.csv", r.preservation_csv);
    write_text_file(out_dir / "response_time.csv", r.response_time_csv);
    write_text_file(out_dir / "report.md", r.markdown);
    write_text_file(out_dir / "report.json", r.json);
}

}  // namespace coevolve
