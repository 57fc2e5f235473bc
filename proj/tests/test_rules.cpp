#include <gtest/gtest.h>

#include <sstream>

#include "coevolve/grammar.hpp"
#include "coevolve/grammar_diff.hpp"
#include "coevolve/human_info.hpp"
#include "coevolve/instance.hpp"
#include "coevolve/metrics.hpp"
#include "coevolve/recognizer.hpp"
#include "coevolve/rules_migrator.hpp"
#include "test_util.hpp"

using namespace coevolve;
using coevolve::test::read_fixture;

namespace {

GrammarAst fixture_grammar(const std::string& rel) { return parse_grammar(read_fixture(rel)); }

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

std::string rstrip_lines(const std::string& text) {
    std::string out;
    for (auto line : split_lines(text)) {
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.pop_back();
        out += line + "\n";
    }
    return out;
}

}  // namespace

TEST(RulesMigrator, DomainmodelMatchesHandAppliedOutput) {
    const GrammarAst g1 = fixture_grammar("domainmodel/grammar1.xtext");
    const GrammarAst g2 = fixture_grammar("domainmodel/grammar2.xtext");
    const std::string source = read_fixture("domainmodel/instance1.dmodel");
    EditScript script;
    const std::string out = migrate_with_rules(source, g1, g2, {}, &script);
    EXPECT_EQ(out, read_fixture("domainmodel/rules_instance2.dmodel"));
    EXPECT_EQ(script.touched_lines, (std::set<std::size_t>{5, 9, 17, 18}));
    ASSERT_EQ(script.edits.size(), 4u);
    for (const auto& e : script.edits) EXPECT_EQ(e.kind, Edit::Kind::InsertTextAfterToken);

    EXPECT_TRUE(check_conformance(lex_instance(out, g2), g2).conforms);

    // Lines outside the touched set are byte-identical.
    const auto before = split_lines(source);
    const auto after = split_lines(out);
    ASSERT_EQ(before.size(), after.size());
    for (std::size_t i = 0; i < before.size(); ++i)
        if (!script.touched_lines.count(i + 1)) EXPECT_EQ(before[i], after[i]) << "line " << i + 1;
}

TEST(RulesMigrator, DomainmodelOutputScoresPerfectly) {
    const GrammarAst g1 = fixture_grammar("domainmodel/grammar1.xtext");
    const GrammarAst g2 = fixture_grammar("domainmodel/grammar2.xtext");
    const std::string source = read_fixture("domainmodel/instance1.dmodel");
    const std::string out = migrate_with_rules(source, g1, g2);
    const LosslessInstance inst1 = lex_for_evaluation(source, g1, g2);
    const HumanInfoProfile profile = extract_human_info(lex_instance(source, g1), &g1);
    const RunMetrics m = evaluate_run(inst1, profile, out, g2, compute_line_req(inst1, g2), 0.0);
    EXPECT_EQ(m.correctness.line_err, 0u);
    EXPECT_EQ(m.correctness.precision, 1.0);
    EXPECT_EQ(m.correctness.recall, 1.0);
    EXPECT_EQ(m.preservation.cmt_ret, 1.0);
    EXPECT_EQ(m.preservation.fmt_ret, 1.0);
}

TEST(RulesMigrator, XtextDnnBranchFragmentMigrates) {
    const GrammarAst g1 = fixture_grammar("xtext-dnn/grammar1.xtext");
    const GrammarAst g2 = fixture_grammar("xtext-dnn/grammar2.xtext");
    EditScript script;
    const std::string out = migrate_with_rules(read_fixture("xtext-dnn/listing7.dnn"), g1, g2, {}, &script);
    // The expected fixture carries a trailing blank after PROD; layout otherwise equal.
    EXPECT_EQ(rstrip_lines(out), rstrip_lines(read_fixture("xtext-dnn/listing8.dnn")));
    EXPECT_EQ(out, "    branch (name: \"b1\" in:\"c3\" out:32)     {\n\t\teltwiseOperation -> PROD\n\t}\n");
    EXPECT_TRUE(check_conformance(lex_instance(out, g2), g2).conforms);
    ASSERT_EQ(script.edits.size(), 2u);
    EXPECT_EQ(script.edits[0].kind, Edit::Kind::ReplaceToken);
    EXPECT_EQ(script.edits[0].payload, "eltwiseOperation");
    EXPECT_EQ(script.edits[1].kind, Edit::Kind::DeleteLineRange);
    EXPECT_EQ(script.edits[1].first_line, 3u);
    EXPECT_EQ(script.edits[1].last_line, 3u);
}

TEST(RulesMigrator, SmartDslRenamesKeywordOnly) {
    const GrammarAst g1 = fixture_grammar("smart-dsl/grammar1.xtext");
    const GrammarAst g2 = fixture_grammar("smart-dsl/grammar2.xtext");
    const std::string source = read_fixture("smart-dsl/instance1.smart");
    const std::string out = migrate_with_rules(source, g1, g2);
    std::string expected = source;
    expected.replace(expected.find("Modifier onlyOwner"), 8, "validator");
    EXPECT_EQ(out, expected);
    EXPECT_TRUE(check_conformance(lex_instance(out, g2), g2).conforms);
}

TEST(RulesMigrator, KeywordRenameFollowsTheDerivation) {
    const GrammarAst g1 = parse_grammar("grammar t.K\nM: (xs+=X | ys+=Y)*;\nX: 'a' name=ID;\nY: 'b' 'a' name=ID;\n");
    const GrammarAst g2 = parse_grammar("grammar t.K\nM: (xs+=X | ys+=Y)*;\nX: 'c' name=ID;\nY: 'b' 'a' name=ID;\n");
    const std::string out = migrate_with_rules("a p\nb a q\na r\n", g1, g2);
    EXPECT_EQ(out, "c p\nb a q\nc r\n");
}

TEST(RulesMigrator, EmptyDeltaGivesEmptyScript) {
    const GrammarAst g1 = fixture_grammar("domainmodel/grammar1.xtext");
    const std::string source = read_fixture("domainmodel/instance1.dmodel");
    const LosslessInstance inst = lex_instance(source, g1);
    const EditScript script = plan_edits(inst, diff_grammars(g1, g1), g1, g1);
    EXPECT_TRUE(script.edits.empty());
    EXPECT_TRUE(script.touched_lines.empty());
    EXPECT_EQ(apply_edits(inst, script), source);
    EXPECT_EQ(apply_edits(inst, EditScript{}), source);
}

TEST(RulesMigrator, SingleReplaceTokenChangesOneToken) {
    const GrammarAst g1 = fixture_grammar("smart-dsl/grammar1.xtext");
    const std::string source = read_fixture("smart-dsl/instance1.smart");
    const LosslessInstance inst = lex_instance(source, g1);
    std::size_t index = 0;
    while (inst.tokens()[index].text != "Modifier") ++index;
    EditScript script;
    script.edits.push_back({Edit::Kind::ReplaceToken, index, 0, 0, "validator"});
    const std::string out = apply_edits(inst, script);
    const std::size_t at = inst.tokens()[index].offset;
    EXPECT_EQ(out.substr(0, at), source.substr(0, at));
    EXPECT_EQ(out.substr(at, 9), "validator");
    EXPECT_EQ(out.substr(at + 9), source.substr(at + 8));
}

TEST(RulesMigrator, DeleteLineRangeRemovesRepositoryBlock) {
    // Layout of the isis-script repository block; the expected text is the
    // same lines with the annotated block (lines 2-12) cut out.
    const std::string source =
        "    ...\n"
        "    @DomainServiceLayout(menuOrder = \"10\")\n"
        "\trepository {\n"
        "\n"
        "    \t@Action(semantics = SemanticsOf.SAFE)\n"
        "    \t@ActionLayout(bookmarking = BookmarkPolicy.AS_ROOT)\n"
        "\t\t@MemberOrder(sequence = \"1\")\n"
        "\t\taction listAll() {\n"
        "\t\t\tcontainer.allInstances(SimpleObject)\n"
        "\t\t}\n"
        "\t\t...\n"
        "\t}\n"
        "\n"
        "    ...\n";
    const std::string expected =
        "    ...\n"
        "\n"
        "    ...\n";
    const GrammarAst g = parse_grammar("grammar t.Any\nM: (xs+=ID)*;\n");
    const LosslessInstance inst = lex_instance(source, g, {}, LexMode::Lenient);
    EditScript script;
    script.edits.push_back({Edit::Kind::DeleteLineRange, 0, 2, 12, ""});
    EXPECT_EQ(apply_edits(inst, script), expected);
}

TEST(RulesMigrator, OverlappingEditsAreRejected) {
    const GrammarAst g1 = fixture_grammar("domainmodel/grammar1.xtext");
    const LosslessInstance inst = lex_instance(read_fixture("domainmodel/instance1.dmodel"), g1);
    std::size_t index = 0;
    while (inst.tokens()[index].line != 9) ++index;
    EditScript script;
    script.edits.push_back({Edit::Kind::DeleteLineRange, 0, 8, 10, ""});
    script.edits.push_back({Edit::Kind::ReplaceToken, index, 0, 0, "name"});
    EXPECT_THROW(apply_edits(inst, script), OverlapError);

    EditScript twice;
    twice.edits.push_back({Edit::Kind::InsertTextAfterToken, index, 0, 0, ","});
    twice.edits.push_back({Edit::Kind::InsertTextAfterToken, index, 0, 0, ";"});
    EXPECT_THROW(apply_edits(inst, twice), OverlapError);
}

TEST(RulesMigrator, AttributeDeletionSharingALineKeepsTheRest) {
    const GrammarAst g1 = parse_grammar("grammar t.D\nM: (es+=E)*;\nE: 'e' name=ID 'k' k=ID ';';\n");
    const GrammarAst g2 = parse_grammar("grammar t.D\nM: (es+=E)*;\nE: 'e' name=ID ';';\n");
    const GrammarDelta d = diff_grammars(g1, g2);
    ASSERT_EQ(d.changes.size(), 2u);
    const std::string out = migrate_with_rules("e foo k bar ; // keep\ne baz\n  k qux\n  ;\n", g1, g2);
    EXPECT_EQ(out, "e foo ; // keep\ne baz\n  ;\n");
    EXPECT_TRUE(check_conformance(lex_instance(out, g2), g2).conforms);
}

TEST(RulesMigrator, SeparatorSpacing) {
    const GrammarAst g1 = parse_grammar("grammar t.S\nM: (xs+=P)*;\nP: '(' v=ID ')';\n");
    const GrammarAst g2 = parse_grammar("grammar t.S\nM: (xs+=P (',' xs+=P)*)?;\nP: '(' v=ID ')';\n");
    EXPECT_EQ(migrate_with_rules("(a)(b) (c)\n(d)\n", g1, g2), "(a), (b), (c),\n(d)\n");

    RulesConfig tight;
    tight.separator_by_rule["M"] = InsertionStyle{"", ""};
    EXPECT_EQ(migrate_with_rules("(a)(b)\n", g1, g2, tight), "(a),(b)\n");
}

TEST(RulesMigrator, UnsupportedChangesAreReported) {
    // A mandatory attribute cannot be invented.
    const GrammarAst g1 = parse_grammar("grammar t.U\nM: (es+=E)*;\nE: 'e' name=ID;\n");
    const GrammarAst g2 = parse_grammar("grammar t.U\nM: (es+=E)*;\nE: 'e' name=ID 'size' size=INT;\n");
    try {
        migrate_with_rules("e a\n", g1, g2);
        FAIL() << "expected UnsupportedChange";
    } catch (const UnsupportedChange& e) {
        EXPECT_EQ(e.change().kind, ChangeKind::ElementInserted);
    }
    // The same delta is fine for an instance that never uses the rule.
    EXPECT_EQ(migrate_with_rules("\n", g1, g2), "\n");

    // Deleting a rule the instance uses.
    const GrammarAst r1 = parse_grammar("grammar t.R\nM: (es+=(E | F))*;\nE: 'e' name=ID;\nF: 'f' name=ID;\n");
    const GrammarAst r2 = parse_grammar("grammar t.R\nM: (es+=E)*;\nE: 'e' name=ID;\n");
    EXPECT_THROW(migrate_with_rules("e a\nf b\n", r1, r2), UnsupportedChange);
}

TEST(RulesMigrator, EditScriptJsonSidecar) {
    const GrammarAst g1 = fixture_grammar("xtext-dnn/grammar1.xtext");
    const GrammarAst g2 = fixture_grammar("xtext-dnn/grammar2.xtext");
    const std::string source = read_fixture("xtext-dnn/listing7.dnn");
    EditScript script;
    migrate_with_rules(source, g1, g2, {}, &script);
    const std::string json = edit_script_to_json(script, lex_instance(source, g1));
    EXPECT_NE(json.find("\"kind\": \"replace_token\""), std::string::npos) << json;
    EXPECT_NE(json.find("\"kind\": \"delete_line_range\""), std::string::npos) << json;
    EXPECT_NE(json.find("\"touched_lines\""), std::string::npos) << json;
}
