#include <gtest/gtest.h>

#include <random>

#include "coevolve/grammar.hpp"
#include "coevolve/human_info.hpp"
#include "coevolve/metrics.hpp"
#include "test_util.hpp"

using namespace coevolve;
using coevolve::test::read_fixture;

namespace {

struct Domainmodel {
    GrammarAst g1 = parse_grammar(read_fixture("domainmodel/grammar1.xtext"));
    GrammarAst g2 = parse_grammar(read_fixture("domainmodel/grammar2.xtext"));
    std::string text = read_fixture("domainmodel/instance1.dmodel");
    LosslessInstance inst1 = lex_for_evaluation(text, g1, g2);
    HumanInfoProfile profile = extract_human_info(lex_instance(text, g1), &g1);
};

std::vector<KeyedLine> keyed(const std::vector<std::string>& keys) {
    std::vector<KeyedLine> out;
    for (std::size_t i = 0; i < keys.size(); ++i) out.push_back({i + 1, keys[i]});
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Human-oriented information

TEST(HumanInfo, Instance1CommentLines) {
    Domainmodel d;
    EXPECT_EQ(d.profile.comment_lines, (std::set<std::size_t>{1, 2, 3, 4, 7, 19, 24}));
    EXPECT_EQ(d.profile.comment_regions, 4u);
    EXPECT_EQ(d.profile.per_line_signature.at(24).comments,
              (std::vector<std::string>{"// this is the second comment, added 2025-01-01"}));
    EXPECT_EQ(d.profile.per_line_signature.at(3).comments, (std::vector<std::string>{" * This is the header."}));
}

TEST(HumanInfo, Instance1FormatLines) {
    Domainmodel d;
    EXPECT_EQ(d.profile.indent_unit, "    ");
    EXPECT_EQ(d.profile.compressed_lines, (std::set<std::size_t>{14}));
    EXPECT_EQ(d.profile.format_lines, (std::set<std::size_t>{6, 9, 10, 11, 13, 14, 15, 22}));
}

TEST(HumanInfo, SignaturesCoverEveryLine) {
    Domainmodel d;
    EXPECT_EQ(d.profile.per_line_signature.size(), 25u);
    const auto& blank = d.profile.per_line_signature.at(13);
    EXPECT_TRUE(blank.blank);
    EXPECT_EQ(blank.indentation, " ");
    EXPECT_EQ(d.profile.per_line_signature.at(9).indentation, "\t");
    EXPECT_EQ(d.profile.per_line_signature.at(17).indentation, "    ");
}

TEST(HumanInfo, PlainSingleLine) {
    GrammarAst g = parse_grammar(read_fixture("domainmodel/grammar1.xtext"));
    HumanInfoProfile p = extract_human_info(lex_instance("entity A {}", g), &g);
    EXPECT_TRUE(p.comment_lines.empty());
    EXPECT_TRUE(p.format_lines.empty());
}

TEST(HumanInfo, OddIndentationIsFormatInformation) {
    GrammarAst g = parse_grammar(read_fixture("domainmodel/grammar1.xtext"));
    std::string text = "entity A {\n    a: B\n    b: B\n    c: B\n    d: B\n  e: B\n}\n";
    HumanInfoProfile p = extract_human_info(lex_instance(text, g), &g);
    EXPECT_EQ(p.indent_unit, "    ");
    EXPECT_EQ(p.format_lines, (std::set<std::size_t>{6}));
}

// ---------------------------------------------------------------------------
// Alignment

TEST(Alignment, IdenticalSequences) {
    auto al = align_lines(keyed({"a", "b", "c"}), keyed({"a", "b", "c"}));
    ASSERT_EQ(al.pairs.size(), 3u);
    for (const auto& p : al.pairs) EXPECT_TRUE(p.identical);
    EXPECT_TRUE(al.dropped.empty());
    EXPECT_TRUE(al.inserted.empty());
}

TEST(Alignment, ChangedLineIsPairedInGap) {
    auto al = align_lines(keyed({"a", "b", "c"}), keyed({"a", "b;", "c"}));
    ASSERT_EQ(al.pairs.size(), 3u);
    EXPECT_FALSE(al.pairs[1].identical);
    EXPECT_EQ(al.pairs[1].a, 2u);
    EXPECT_EQ(al.pairs[1].b, 2u);
}

TEST(Alignment, GapPairingPrefersSimilarLines) {
    auto al = align_lines(keyed({"{", "type->residual", "operation->PROD", "}"}),
                          keyed({"{", "eltwiseOperation->PROD", "}"}));
    EXPECT_EQ(al.dropped, (std::vector<std::size_t>{2}));
    EXPECT_EQ(al.partner_of(3), std::optional<std::size_t>(2));
}

TEST(Alignment, DroppedAndInserted) {
    auto al = align_lines(keyed({"a", "x", "c"}), keyed({"a", "c", "y"}));
    EXPECT_EQ(al.dropped, (std::vector<std::size_t>{2}));
    EXPECT_EQ(al.inserted, (std::vector<std::size_t>{3}));
}

TEST(Alignment, LcsLengthMatchesBruteForce) {
    // Exhaustive over short strings on a two-letter alphabet.
    auto lcs = [](const std::string& x, const std::string& y) {
        std::size_t best = 0;
        for (unsigned mask = 0; mask < (1u << x.size()); ++mask) {
            std::string sub;
            for (std::size_t i = 0; i < x.size(); ++i)
                if (mask & (1u << i)) sub += x[i];
            std::size_t j = 0;
            for (char c : y)
                if (j < sub.size() && sub[j] == c) ++j;
            if (j == sub.size()) best = std::max(best, sub.size());
        }
        return best;
    };
    std::mt19937 rng(3);
    for (int round = 0; round < 300; ++round) {
        std::string x, y;
        for (int i = 0, n = rng() % 8; i < n; ++i) x += "ab"[rng() % 2];
        for (int i = 0, n = rng() % 8; i < n; ++i) y += "ab"[rng() % 2];
        std::vector<std::string> xs, ys;
        for (char c : x) xs.emplace_back(1, c);
        for (char c : y) ys.emplace_back(1, c);
        auto al = align_lines(keyed(xs), keyed(ys));
        std::size_t identical = 0;
        for (const auto& p : al.pairs) {
            identical += p.identical;
            if (p.identical) EXPECT_EQ(xs[p.a - 1], ys[p.b - 1]);
        }
        ASSERT_EQ(identical, lcs(x, y)) << x << " / " << y;
        EXPECT_EQ(al.pairs.size() + al.dropped.size(), xs.size());
        EXPECT_EQ(al.pairs.size() + al.inserted.size(), ys.size());
    }
}

// ---------------------------------------------------------------------------
// Ratio formulas against the published tables

TEST(Formulas, IsisScriptMeanCounts) {
    EXPECT_NEAR(*precision_of(36.8, 2.8) * 100, 92.39, 0.01);
    EXPECT_NEAR(*recall_of(36.8, 2.8, 40) * 100, 85.00, 0.01);
    EXPECT_NEAR(*recall_of(34, 0, 40) * 100, 85.0, 1e-9);
}

TEST(Formulas, FormatRetentionRows) {
    EXPECT_NEAR(*retention_of(69.7, 98 - 69.7) * 100, 71.12, 0.01);
    EXPECT_NEAR(*retention_of(57.4, 98 - 57.4) * 100, 58.57, 0.01);
    EXPECT_NEAR(*retention_of(803.4, 1822 - 803.4) * 100, 44.09, 0.01);
    EXPECT_NEAR(*retention_of(26, 0) * 100, 100.0, 1e-9);
    EXPECT_NEAR(*retention_of(0, 26), 0.0, 1e-12);
}

TEST(Formulas, UndefinedRatios) {
    EXPECT_FALSE(precision_of(0, 0).has_value());
    EXPECT_FALSE(recall_of(3, 0, 0).has_value());
    EXPECT_FALSE(retention_of(0, 0).has_value());
}

TEST(Formulas, RecallIsCappedWhenMoreLinesEvolveThanRequired) {
    // plantuml row: 2 lines required, 5 evolved, none wrong, 100% recall.
    EXPECT_DOUBLE_EQ(*recall_of(5, 0, 2), 1.0);
}

TEST(Formulas, XtextOrmRatioOfMeans) {
    EXPECT_NEAR(*precision_of(15.8, 3) * 100, 81.01, 0.01);
}

// ---------------------------------------------------------------------------
// Per-run metrics on the Domainmodel fixture

TEST(Metrics, LineReqOfInstance1) {
    Domainmodel d;
    EXPECT_EQ(compute_line_req(d.inst1, d.g2), 4u);
    EXPECT_EQ(compute_line_req(lex_instance(d.text, d.g1), d.g1), 0u);
}

TEST(Metrics, IdentityCandidateEvolvesNothing) {
    Domainmodel d;
    LosslessInstance same = lex_instance(d.text, d.g1);
    CorrectnessMetrics c = compute_correctness(same, same, d.g1, 0);
    EXPECT_EQ(c.line_evl, 0u);
    EXPECT_FALSE(c.precision.has_value());
    EXPECT_FALSE(c.recall.has_value());
    EXPECT_EQ(c.error_rate, 0.0);
    PreservationMetrics p = compute_preservation(d.profile, same, same);
    EXPECT_EQ(p.cmt_save, 7u);
    EXPECT_EQ(p.cmt_lost, 0u);
    EXPECT_EQ(p.fmt_save, 8u);
    EXPECT_EQ(p.fmt_lost, 0u);
}

TEST(Metrics, HandMigratedCandidateIsPerfect) {
    Domainmodel d;
    RunMetrics r = evaluate_run(d.inst1, d.profile, read_fixture("domainmodel/rules_instance2.dmodel"), d.g2, 4, 0.0);
    EXPECT_EQ(r.correctness.line_err, 0u);
    EXPECT_EQ(r.correctness.line_evl, 4u);
    EXPECT_EQ(r.correctness.line_evl_wrg, 0u);
    EXPECT_DOUBLE_EQ(*r.correctness.precision, 1.0);
    EXPECT_DOUBLE_EQ(*r.correctness.recall, 1.0);
    EXPECT_DOUBLE_EQ(*r.preservation.cmt_ret, 1.0);
    EXPECT_DOUBLE_EQ(*r.preservation.fmt_ret, 1.0);
}

TEST(Metrics, TransformationOutputLosesHumanInformation) {
    Domainmodel d;
    RunMetrics r = evaluate_run(d.inst1, d.profile, read_fixture("domainmodel/mde_instance2.dmodel"), d.g2, 4, 0.0);
    EXPECT_EQ(r.preservation.cmt_save, 0u);
    EXPECT_EQ(r.preservation.cmt_lost, 7u);
    // The transformation output keeps the old syntax on the four lines needing change.
    EXPECT_EQ(r.correctness.line_err, 4u);
    EXPECT_LT(*r.preservation.fmt_ret, 1.0);
}

TEST(Metrics, MissedLineLowersRecallNotPrecision) {
    Domainmodel d;
    std::string cand = read_fixture("domainmodel/rules_instance2.dmodel");
    cand.replace(cand.find("datatype String;"), 16, "datatype String");
    RunMetrics r = evaluate_run(d.inst1, d.profile, cand, d.g2, 4, 0.0);
    EXPECT_EQ(r.correctness.line_evl, 3u);
    EXPECT_EQ(r.correctness.line_evl_wrg, 0u);
    EXPECT_DOUBLE_EQ(*r.correctness.precision, 1.0);
    EXPECT_DOUBLE_EQ(*r.correctness.recall, 0.75);
    EXPECT_EQ(r.correctness.line_err, 1u);
}

TEST(Metrics, WrongEditCountsAsWrongEvolution) {
    Domainmodel d;
    std::string cand = read_fixture("domainmodel/rules_instance2.dmodel");
    cand.replace(cand.find("datatype String;"), 16, "datatype String:");
    RunMetrics r = evaluate_run(d.inst1, d.profile, cand, d.g2, 4, 0.0);
    EXPECT_EQ(r.correctness.line_evl, 4u);
    EXPECT_EQ(r.correctness.line_evl_wrg, 1u);
    EXPECT_DOUBLE_EQ(*r.correctness.precision, 0.75);
}

TEST(Metrics, DroppedLineWithoutJustificationIsWrong) {
    Domainmodel d;
    std::string cand = read_fixture("domainmodel/rules_instance2.dmodel");
    cand.replace(cand.find("    many comments: Comment\n"), 27, "");
    RunMetrics r = evaluate_run(d.inst1, d.profile, cand, d.g2, 4, 0.0);
    // The dangling ',' after 'content: String' is reported on the unchanged '}'
    // line, where recovery skips ahead, so only the unjustified drop is wrong.
    EXPECT_EQ(r.correctness.line_evl, 5u);
    EXPECT_EQ(r.correctness.line_evl_wrg, 1u);
    EXPECT_EQ(r.correctness.candidate_error_lines, (std::set<std::size_t>{20}));
}

TEST(Metrics, EmptyCandidateIsFailedGeneration) {
    Domainmodel d;
    RunMetrics r = evaluate_run(d.inst1, d.profile, "", d.g2, 4, 12.5);
    EXPECT_TRUE(r.failed_generation);
    EXPECT_DOUBLE_EQ(*r.correctness.precision, 0.0);
    EXPECT_DOUBLE_EQ(*r.correctness.recall, 0.0);
    EXPECT_EQ(r.correctness.error_rate, 0.0);
    EXPECT_EQ(r.preservation.cmt_lost, 7u);
    EXPECT_DOUBLE_EQ(*r.preservation.cmt_ret, 0.0);
    EXPECT_DOUBLE_EQ(*r.preservation.fmt_ret, 0.0);
    EXPECT_DOUBLE_EQ(r.response_time_s, 12.5);
}

TEST(Metrics, DnnEvolvedFragmentAgainstOriginal) {
    GrammarAst g1 = parse_grammar(read_fixture("xtext-dnn/grammar1.xtext"));
    GrammarAst g2 = parse_grammar(read_fixture("xtext-dnn/grammar2.xtext"));
    std::string text = read_fixture("xtext-dnn/listing7.dnn");
    LosslessInstance inst1 = lex_for_evaluation(text, g1, g2);
    HumanInfoProfile profile = extract_human_info(lex_instance(text, g1), &g1);
    std::size_t req = compute_line_req(inst1, g2);
    EXPECT_EQ(req, 2u);
    RunMetrics r = evaluate_run(inst1, profile, read_fixture("xtext-dnn/listing8.dnn"), g2, req, 0.0);
    // Line 2 rewritten, line 3 removed as the evolved grammar requires.
    EXPECT_EQ(r.correctness.line_evl, 2u);
    EXPECT_EQ(r.correctness.line_evl_wrg, 0u);
    EXPECT_DOUBLE_EQ(*r.correctness.recall, 1.0);
}

TEST(Metrics, PositionalCommentMode) {
    Domainmodel d;
    // Move the trailing comment of line 24 to its own line before the entity.
    std::string cand = read_fixture("domainmodel/rules_instance2.dmodel");
    cand.replace(cand.find(" // this is the second comment, added 2025-01-01"), 48, "");
    cand.replace(cand.find("entity Comment"), 0, "// this is the second comment, added 2025-01-01\n");
    LosslessInstance c = lex_candidate(cand, d.g2);
    PreservationMetrics relocated = compute_preservation(d.profile, d.inst1, c);
    EXPECT_EQ(relocated.cmt_lost, 0u);
    MetricOptions positional;
    positional.comment_mode = CommentMode::Positional;
    PreservationMetrics strict = compute_preservation(d.profile, d.inst1, c, positional);
    EXPECT_EQ(strict.cmt_lost, 1u);
}

TEST(Metrics, AllLinesFormatDenominator) {
    Domainmodel d;
    MetricOptions all;
    all.fmt_denominator = FmtDenominator::AllLines;
    LosslessInstance c = lex_candidate(read_fixture("domainmodel/rules_instance2.dmodel"), d.g2);
    PreservationMetrics p = compute_preservation(d.profile, d.inst1, c, all);
    EXPECT_EQ(p.fmt_save + p.fmt_lost, 25u);
    EXPECT_EQ(p.fmt_lost, 0u);
}

// ---------------------------------------------------------------------------
// Aggregation

TEST(Aggregate, TwoRunHandExample) {
    RunMetrics a, b;
    a.correctness.line_evl = 10;
    a.correctness.line_evl_wrg = 0;
    a.correctness.precision = 1.0;
    b.correctness.line_evl = 2;
    b.correctness.line_evl_wrg = 1;
    b.correctness.precision = 0.5;
    AggregateMetrics agg = aggregate({a, b});
    EXPECT_DOUBLE_EQ(*agg.precision.mean_of_ratios, 0.75);
    EXPECT_NEAR(*agg.precision.ratio_of_means, 11.0 / 12.0, 1e-12);
}

TEST(Aggregate, IdenticalRunsAgreeUnderBothConventions) {
    Domainmodel d;
    RunMetrics r = evaluate_run(d.inst1, d.profile, read_fixture("domainmodel/rules_instance2.dmodel"), d.g2, 4, 2.0);
    AggregateMetrics agg = aggregate(std::vector<RunMetrics>(10, r));
    EXPECT_EQ(agg.run_count, 10u);
    EXPECT_NEAR(agg.line_evl, 4.0, 1e-12);
    EXPECT_NEAR(*agg.precision.mean_of_ratios, *agg.precision.ratio_of_means, 1e-12);
    EXPECT_NEAR(*agg.fmt_ret.mean_of_ratios, *agg.fmt_ret.ratio_of_means, 1e-12);
    EXPECT_NEAR(agg.response_time_s, 2.0, 1e-12);
}

TEST(Aggregate, AllRunsFailed) {
    Domainmodel d;
    RunMetrics r = evaluate_run(d.inst1, d.profile, "", d.g2, 4, 1.0);
    AggregateMetrics agg = aggregate(std::vector<RunMetrics>(10, r));
    EXPECT_EQ(agg.failed_runs, 10u);
    EXPECT_DOUBLE_EQ(*agg.precision.ratio_of_means, 0.0);
    EXPECT_DOUBLE_EQ(*agg.cmt_ret.ratio_of_means, 0.0);
}

TEST(Aggregate, EmptyInputThrows) { EXPECT_THROW(aggregate({}), Error); }

TEST(Aggregate, MeansWithinRunRange) {
    std::mt19937 rng(11);
    for (int round = 0; round < 50; ++round) {
        std::vector<RunMetrics> runs(1 + rng() % 10);
        double lo = 1e9, hi = -1;
        for (auto& r : runs) {
            r.correctness.line_evl = rng() % 20;
            r.correctness.line_evl_wrg = r.correctness.line_evl ? rng() % (r.correctness.line_evl + 1) : 0;
            r.correctness.precision = precision_of(r.correctness.line_evl, r.correctness.line_evl_wrg);
            lo = std::min(lo, double(r.correctness.line_evl));
            hi = std::max(hi, double(r.correctness.line_evl));
        }
        AggregateMetrics agg = aggregate(runs);
        EXPECT_GE(agg.line_evl, lo - 1e-9);
        EXPECT_LE(agg.line_evl, hi + 1e-9);
    }
}
