#pragma once

// Representation of the supported Xtext grammar subset.
//
// A grammar is an ordered list of rules. Parser rules describe instance
// structure; terminal rules describe tokens. The header directives
// (`grammar`, `import`, `generate`) are kept as opaque preamble text.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "coevolve/error.hpp"

namespace coevolve {

enum class AssignOp { Set, Add, Bool };          // =  +=  ?=
enum class Multiplicity { Optional, Star, Plus };  // ?  *  +

std::string_view to_string(AssignOp op);
std::string_view to_string(Multiplicity m);

class BodyNode {
public:
    enum class Kind {
        Keyword,
        RuleCall,
        Assignment,
        CrossReference,
        Group,
        Alternatives,
        UnorderedGroup,
        Cardinality,
        CharRange,
        Wildcard,
        NegatedToken,
    };

    // Constructors enforce the node invariants and throw GrammarError when
    // they are violated. Single-child groups and alternatives collapse into
    // their child so that structurally equal grammars compare equal.
    static BodyNode keyword(std::string text);
    static BodyNode rule_call(std::string rule);
    static BodyNode assignment(std::string feature, AssignOp op, BodyNode child);
    static BodyNode cross_reference(std::string target, std::optional<std::string> syntax_rule = {});
    static BodyNode group(std::vector<BodyNode> children);
    static BodyNode alternatives(std::vector<BodyNode> children);
    static BodyNode unordered_group(std::vector<BodyNode> children);
    static BodyNode cardinality(BodyNode child, Multiplicity m);
    static BodyNode char_range(std::string lo, std::string hi);
    static BodyNode wildcard();
    static BodyNode negated(BodyNode child);

    Kind kind() const noexcept { return kind_; }

    /// Keyword text, rule-call target, assignment feature, cross-reference
    /// target type, or lower bound of a char range.
    const std::string& text() const noexcept { return text_; }

    /// Upper bound of a char range.
    const std::string& upper() const noexcept { return upper_; }

    /// Syntax rule of a cross reference; empty means the implicit ID.
    const std::optional<std::string>& syntax_rule() const noexcept { return syntax_; }

    /// The rule that recognizes a cross reference's text.
    std::string_view reference_syntax() const noexcept { return syntax_ ? std::string_view(*syntax_) : "ID"; }

    AssignOp op() const noexcept { return op_; }
    Multiplicity multiplicity() const noexcept { return mult_; }
    const std::vector<BodyNode>& children() const noexcept { return children_; }
    const BodyNode& child() const { return children_.at(0); }

    /// Source line the node was parsed from; 0 for constructed nodes.
    /// Not part of structural equality.
    std::size_t line() const noexcept { return line_; }
    BodyNode& at_line(std::size_t line) & noexcept;
    BodyNode&& at_line(std::size_t line) && noexcept;

    bool is_leaf() const noexcept;

    friend bool operator==(const BodyNode& a, const BodyNode& b);

private:
    BodyNode(Kind k) : kind_(k) {}

    Kind kind_;
    std::string text_;
    std::string upper_;
    std::optional<std::string> syntax_;
    AssignOp op_ = AssignOp::Set;
    Multiplicity mult_ = Multiplicity::Optional;
    std::vector<BodyNode> children_;
    std::size_t line_ = 0;
};

enum class RuleKind { Parser, Terminal };

struct RuleDef {
    std::string name;
    RuleKind kind = RuleKind::Parser;
    std::optional<std::string> returns_type;
    BodyNode body = BodyNode::wildcard();
    std::size_t line = 0;

    friend bool operator==(const RuleDef& a, const RuleDef& b);
};

/// Path from a rule's body root to a nested node, as child indices.
struct NodePath {
    std::string rule;
    std::vector<std::size_t> steps;

    friend bool operator==(const NodePath&, const NodePath&) = default;
};

class GrammarAst {
public:
    /// Validates the grammar invariants: unique rule names, every rule call
    /// and cross reference resolves, terminal rules hold no assignments or
    /// cross references, parser rules hold no character-level constructs.
    GrammarAst(std::string name, std::string preamble, std::vector<RuleDef> rules);

    const std::string& name() const noexcept { return name_; }
    const std::string& preamble() const noexcept { return preamble_; }
    const std::vector<RuleDef>& rules() const noexcept { return rules_; }

    /// First parser rule.
    const std::string& entry_rule() const noexcept { return entry_; }

    /// User-defined rule with this name, if any.
    const RuleDef* find_rule(std::string_view name) const;

    /// User-defined rule, else a built-in terminal (ID, INT, STRING,
    /// ML_COMMENT, SL_COMMENT, WS) not overridden by the grammar.
    const RuleDef* resolve(std::string_view name) const;

    bool is_terminal(std::string_view name) const;

    /// Keywords used by parser rules.
    const std::set<std::string>& keywords() const noexcept { return keywords_; }

    /// Lexer terminals in matching priority order: user terminal rules
    /// first, then the built-ins they do not override.
    std::vector<const RuleDef*> lexer_terminals() const;

    /// Parser rules reachable from the entry rule.
    std::set<std::string> reachable_rules() const;

    /// Whether the node can derive the empty token string.
    bool nullable(const BodyNode& node) const;

    const BodyNode* resolve(const NodePath& path) const;

    friend bool operator==(const GrammarAst& a, const GrammarAst& b);

private:
    bool nullable_impl(const BodyNode& node, std::set<std::string>& visiting) const;

    std::string name_;
    std::string preamble_;
    std::vector<RuleDef> rules_;
    std::map<std::string, std::size_t, std::less<>> by_name_;
    std::string entry_;
    std::set<std::string> keywords_;
};

/// Built-in terminal rules, parsed once.
const std::vector<RuleDef>& builtin_terminals();

/// Names of terminals whose matches are hidden trivia.
bool is_hidden_terminal(std::string_view name);

GrammarAst parse_grammar(std::string_view text);
std::string serialize_grammar(const GrammarAst& ast);

/// Text of a single body node in grammar notation.
std::string serialize_body(const BodyNode& node);

/// Quote a keyword the way the grammar language writes it.
std::string quote_keyword(std::string_view text);

}  // namespace coevolve
