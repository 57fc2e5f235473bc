#pragma once

// Correctness, preservation and timing metrics for migrated instances.

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "coevolve/grammar.hpp"
#include "coevolve/human_info.hpp"
#include "coevolve/instance.hpp"

namespace coevolve {

// ---------------------------------------------------------------------------
// Line alignment

/// A line taking part in alignment: 1-based line number and comparison key.
struct KeyedLine {
    std::size_t line;
    std::string key;
};

struct LineAlignment {
    struct Pair {
        std::size_t a;
        std::size_t b;
        bool identical;  // keys equal (LCS match); otherwise paired inside a gap
    };
    std::vector<Pair> pairs;
    std::vector<std::size_t> dropped;   // lines of a without partner
    std::vector<std::size_t> inserted;  // lines of b without partner

    std::optional<std::size_t> partner_of(std::size_t a_line) const;
};

/// Longest common subsequence on keys; between consecutive matches the
/// remaining lines are paired in order, surplus lines are dropped/inserted.
LineAlignment align_lines(const std::vector<KeyedLine>& a, const std::vector<KeyedLine>& b);

/// Line text with all whitespace removed.
std::string strip_whitespace(std::string_view text);

// ---------------------------------------------------------------------------
// Ratio formulas

std::optional<double> precision_of(double line_evl, double line_evl_wrg);
/// Capped at 1: an instance may be evolved on more lines than strictly required.
std::optional<double> recall_of(double line_evl, double line_evl_wrg, double line_req);
std::optional<double> retention_of(double saved, double lost);

// ---------------------------------------------------------------------------
// Per-run metrics

enum class CommentMode {
    Relocated,   // a comment survives if its text appears anywhere among the candidate's comments
    Positional,  // ...only if it appears on the aligned candidate line
};

enum class FmtDenominator {
    FormatLines,  // format-bearing lines of instance 1
    AllLines,     // every line of instance 1
};

struct MetricOptions {
    CommentMode comment_mode = CommentMode::Relocated;
    FmtDenominator fmt_denominator = FmtDenominator::FormatLines;
};

struct CorrectnessMetrics {
    std::size_t line_req = 0;
    std::size_t line_err = 0;
    std::size_t line_evl = 0;
    std::size_t line_evl_wrg = 0;
    std::size_t line_inserted = 0;  // candidate lines with no counterpart in instance 1 (diagnostic)
    std::size_t candidate_lines = 0;
    std::optional<double> precision;
    std::optional<double> recall;
    double error_rate = 0.0;
    std::set<std::size_t> candidate_error_lines;
};

struct PreservationMetrics {
    std::size_t cmt_lost = 0;
    std::size_t cmt_save = 0;
    std::optional<double> cmt_ret;
    std::size_t fmt_lost = 0;
    std::size_t fmt_save = 0;
    std::optional<double> fmt_ret;
};

struct RunMetrics {
    CorrectnessMetrics correctness;
    PreservationMetrics preservation;
    double response_time_s = 0.0;
    /// The candidate was empty: nothing was generated. Precision and recall are 0, not undefined.
    bool failed_generation = false;
};

/// Lexes instance 1 for evaluation: terminals of grammar 2, keywords of both
/// versions; characters neither version can lex become error tokens.
LosslessInstance lex_for_evaluation(std::string text, const GrammarAst& grammar1, const GrammarAst& grammar2);

/// Lexes a candidate against grammar 2; never throws.
LosslessInstance lex_candidate(std::string text, const GrammarAst& grammar2);

/// Number of lines of instance 1 with conformance errors under grammar 2.
std::size_t compute_line_req(const LosslessInstance& instance1, const GrammarAst& grammar2);

CorrectnessMetrics compute_correctness(const LosslessInstance& instance1, const LosslessInstance& candidate,
                                       const GrammarAst& grammar2, std::size_t line_req);

PreservationMetrics compute_preservation(const HumanInfoProfile& profile1, const LosslessInstance& instance1,
                                         const LosslessInstance& candidate, const MetricOptions& options = {});

/// Correctness and preservation of one candidate, with the failed-generation
/// convention for empty candidates.
RunMetrics evaluate_run(const LosslessInstance& instance1, const HumanInfoProfile& profile1,
                        const std::string& candidate_text, const GrammarAst& grammar2, std::size_t line_req,
                        double response_time_s, const MetricOptions& options = {});

// ---------------------------------------------------------------------------
// Aggregation

struct RatioSummary {
    std::optional<double> mean_of_ratios;  // mean over runs where the ratio is defined
    std::optional<double> ratio_of_means;  // the formula applied to mean counts
};

struct AggregateMetrics {
    std::size_t run_count = 0;
    std::size_t failed_runs = 0;
    double line_req = 0, line_err = 0, line_evl = 0, line_evl_wrg = 0, line_inserted = 0, candidate_lines = 0;
    double cmt_lost = 0, cmt_save = 0, fmt_lost = 0, fmt_save = 0;
    double response_time_s = 0;
    RatioSummary precision, recall, error_rate, cmt_ret, fmt_ret;
};

/// Requires at least one run.
AggregateMetrics aggregate(const std::vector<RunMetrics>& runs);

}  // namespace coevolve
