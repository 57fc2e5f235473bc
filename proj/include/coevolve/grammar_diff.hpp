#pragma once

// Classified differences between two versions of a grammar.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coevolve/grammar.hpp"

namespace coevolve {

enum class ChangeOp { Add, Delete, Rename, Modify };
enum class ChangeSubject { Rule, Attribute, Keyword };
enum class Impact { Breaking, NonBreaking };

/// Finer classification; decides how paths are read and which
/// migration edits apply.
enum class ChangeKind {
    RuleAdded,            // new_path: the added rule
    RuleDeleted,          // old_path: the deleted rule
    RuleRenamed,          // both paths: rule roots
    RuleRestructured,     // both paths: replaced subtree (whole body when nothing finer aligns)
    KeywordRenamed,       // both paths: the keyword leaf
    AttributeRenamed,     // both paths: the assignment
    RuleCallChanged,      // both paths: the rule call
    ReferenceChanged,     // both paths: the cross reference
    OperatorChanged,      // both paths: the assignment
    CardinalityChanged,   // both paths: the replaced subtree
    OrderingChanged,      // both paths: unordered group <-> sequence
    SeparatorIntroduced,  // both paths: `X*` in old, `(X (',' X)*)?` in new
    ElementInserted,      // old_path: container, position: insertion index; new_path: inserted element
    OptionalInserted,     // as ElementInserted, element is nullable
    TerminatorAdded,      // as ElementInserted, a keyword appended to a rule body
    AlternativeAdded,     // old_path: alternatives container; new_path: the new alternative
    ElementDeleted,       // old_path: the removed element
    AlternativeDeleted,   // old_path: the removed alternative
};

struct GrammarChange {
    ChangeOp operation = ChangeOp::Modify;
    ChangeSubject subject = ChangeSubject::Rule;
    std::string rule_name;  // rule in the new grammar (old grammar for deletions)
    std::string detail;
    Impact impact = Impact::Breaking;
    ChangeKind kind = ChangeKind::RuleRestructured;
    std::optional<NodePath> old_path;
    std::optional<NodePath> new_path;
    std::string old_text;  // keyword text, feature or rule name, or the serialized fragment
    std::string new_text;
    std::string old_rule_name;
    std::size_t position = 0;

    friend bool operator==(const GrammarChange&, const GrammarChange&) = default;
};

struct GrammarDelta {
    std::vector<GrammarChange> changes;
    std::size_t total = 0;
    std::size_t breaking_count = 0;
    std::size_t non_breaking_count = 0;
};

struct DeltaSummary {
    std::size_t total = 0;
    std::size_t breaking = 0;
    std::size_t non_breaking = 0;
    std::vector<ChangeOp> primary_operation_types;
};

/// Rules present in one version only become Add/Delete, or a Rename when
/// their bodies are equal up to one substituted identifier or keyword.
/// Rules in both versions are aligned structurally and reported per
/// keyword, assignment or element where possible, else as one Modify.
GrammarDelta diff_grammars(const GrammarAst& old_grammar, const GrammarAst& new_grammar);

/// Breaking when an instance of the old grammar could stop conforming
/// because of this change alone. Modifications count as non-breaking only
/// when a conservative structural check shows the new fragment accepts
/// everything the old one did.
Impact classify_impact(const GrammarChange& change, const GrammarAst& old_grammar, const GrammarAst& new_grammar);

DeltaSummary summarize_delta(const GrammarDelta& delta);

/// Old rule name -> new rule name for rules detected as renamed.
std::map<std::string, std::string> detect_rule_renames(const GrammarAst& old_grammar, const GrammarAst& new_grammar);

/// The old grammar with this single change applied. Rules of the new
/// grammar that the change brings into reference are copied along.
/// Throws Error for deletions that would leave dangling references.
GrammarAst apply_change(const GrammarAst& old_grammar, const GrammarAst& new_grammar, const GrammarChange& change);

std::string_view to_string(ChangeOp op);
std::string_view to_string(ChangeSubject subject);
std::string_view to_string(Impact impact);
std::string_view to_string(ChangeKind kind);

}  // namespace coevolve
