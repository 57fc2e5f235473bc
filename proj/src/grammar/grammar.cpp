#include "coevolve/grammar.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include "grammar_parser.hpp"

namespace coevolve {

SyntaxError::SyntaxError(std::size_t line, std::size_t col, std::string expected, std::string message)
    : Error(std::to_string(line) + ":" + std::to_string(col) + ": " + message +
            (expected.empty() ? std::string() : " (expected " + expected + ")")),
      line_(line),
      col_(col),
      expected_(std::move(expected)) {}

UnsupportedConstruct::UnsupportedConstruct(std::size_t line, std::string construct)
    : Error(std::to_string(line) + ": unsupported construct: " + construct), line_(line), construct_(std::move(construct)) {}

LexError::LexError(std::size_t line, std::size_t col, std::string message)
    : Error(std::to_string(line) + ":" + std::to_string(col) + ": " + message), line_(line), col_(col) {}

std::string_view to_string(AssignOp op) {
    switch (op) {
        case AssignOp::Set: return "=";
        case AssignOp::Add: return "+=";
        case AssignOp::Bool: return "?=";
    }
    return "=";
}

std::string_view to_string(Multiplicity m) {
    switch (m) {
        case Multiplicity::Optional: return "?";
        case Multiplicity::Star: return "*";
        case Multiplicity::Plus: return "+";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// BodyNode

BodyNode BodyNode::keyword(std::string text) {
    if (text.empty()) throw GrammarError("keyword text must not be empty");
    BodyNode n(Kind::Keyword);
    n.text_ = std::move(text);
    return n;
}

BodyNode BodyNode::rule_call(std::string rule) {
    if (rule.empty()) throw GrammarError("rule call needs a rule name");
    BodyNode n(Kind::RuleCall);
    n.text_ = std::move(rule);
    return n;
}

BodyNode BodyNode::assignment(std::string feature, AssignOp op, BodyNode child) {
    if (feature.empty()) throw GrammarError("assignment needs a feature name");
    switch (child.kind()) {
        case Kind::Keyword:
        case Kind::RuleCall:
        case Kind::CrossReference:
        case Kind::Alternatives:
        case Kind::Group:
        case Kind::Cardinality:
            break;
        default:
            throw GrammarError("assignment to '" + feature + "' has an unassignable element");
    }
    BodyNode n(Kind::Assignment);
    n.text_ = std::move(feature);
    n.op_ = op;
    n.children_.push_back(std::move(child));
    return n;
}

BodyNode BodyNode::cross_reference(std::string target, std::optional<std::string> syntax_rule) {
    if (target.empty()) throw GrammarError("cross reference needs a target type");
    BodyNode n(Kind::CrossReference);
    n.text_ = std::move(target);
    n.syntax_ = std::move(syntax_rule);
    return n;
}

BodyNode BodyNode::group(std::vector<BodyNode> children) {
    if (children.empty()) throw GrammarError("empty group");
    if (children.size() == 1) return std::move(children.front());
    BodyNode n(Kind::Group);
    n.children_ = std::move(children);
    return n;
}

BodyNode BodyNode::alternatives(std::vector<BodyNode> children) {
    if (children.empty()) throw GrammarError("empty alternatives");
    if (children.size() == 1) return std::move(children.front());
    BodyNode n(Kind::Alternatives);
    n.children_ = std::move(children);
    return n;
}

BodyNode BodyNode::unordered_group(std::vector<BodyNode> children) {
    if (children.empty()) throw GrammarError("empty unordered group");
    if (children.size() == 1) return std::move(children.front());
    BodyNode n(Kind::UnorderedGroup);
    n.children_ = std::move(children);
    return n;
}

BodyNode BodyNode::cardinality(BodyNode child, Multiplicity m) {
    if (child.kind() == Kind::Cardinality) throw GrammarError("cardinality cannot wrap another cardinality");
    BodyNode n(Kind::Cardinality);
    n.mult_ = m;
    n.children_.push_back(std::move(child));
    return n;
}

BodyNode BodyNode::char_range(std::string lo, std::string hi) {
    if (lo.empty() || hi.empty()) throw GrammarError("character range bounds must not be empty");
    BodyNode n(Kind::CharRange);
    n.text_ = std::move(lo);
    n.upper_ = std::move(hi);
    return n;
}

BodyNode BodyNode::wildcard() { return BodyNode(Kind::Wildcard); }

BodyNode BodyNode::negated(BodyNode child) {
    BodyNode n(Kind::NegatedToken);
    n.children_.push_back(std::move(child));
    return n;
}

BodyNode& BodyNode::at_line(std::size_t line) & noexcept {
    line_ = line;
    return *this;
}

BodyNode&& BodyNode::at_line(std::size_t line) && noexcept {
    line_ = line;
    return std::move(*this);
}

bool BodyNode::is_leaf() const noexcept {
    switch (kind_) {
        case Kind::Keyword:
        case Kind::RuleCall:
        case Kind::CrossReference:
        case Kind::CharRange:
        case Kind::Wildcard:
            return true;
        default:
            return false;
    }
}

bool operator==(const BodyNode& a, const BodyNode& b) {
    return a.kind_ == b.kind_ && a.text_ == b.text_ && a.upper_ == b.upper_ && a.syntax_ == b.syntax_ &&
           a.op_ == b.op_ && a.mult_ == b.mult_ && a.children_ == b.children_;
}

bool operator==(const RuleDef& a, const RuleDef& b) {
    return a.name == b.name && a.kind == b.kind && a.returns_type == b.returns_type && a.body == b.body;
}

// ---------------------------------------------------------------------------
// Built-in terminals

namespace {

constexpr std::string_view kBuiltinTerminals = R"(
terminal ID: '^'? ('a'..'z'|'A'..'Z'|'_') ('a'..'z'|'A'..'Z'|'_'|'0'..'9')*;
terminal INT returns ecore::EInt: ('0'..'9')+;
terminal STRING: '"' ('\\' . | !('\\'|'"'))* '"' | "'" ('\\' . | !('\\'|"'"))* "'";
terminal ML_COMMENT: '/*' (!'*' | '*'+ !('*'|'/'))* '*'+ '/';
terminal SL_COMMENT: '//' !('\n'|'\r')*;
terminal WS: (' '|'\t'|'\r'|'\n')+;
)";

void collect_keywords(const BodyNode& node, std::set<std::string>& out) {
    if (node.kind() == BodyNode::Kind::Keyword) out.insert(node.text());
    for (const auto& c : node.children()) collect_keywords(c, out);
}

void check_body(const GrammarAst& g, const RuleDef& rule, const BodyNode& node) {
    using K = BodyNode::Kind;
    const bool terminal = rule.kind == RuleKind::Terminal;
    switch (node.kind()) {
        case K::Assignment:
        case K::CrossReference:
        case K::UnorderedGroup:
            if (terminal)
                throw GrammarError("terminal rule '" + rule.name + "' contains a parser-only element");
            break;
        case K::CharRange:
        case K::Wildcard:
        case K::NegatedToken:
            if (!terminal)
                throw GrammarError("parser rule '" + rule.name + "' contains a character-level element");
            break;
        default:
            break;
    }
    if (node.kind() == K::RuleCall) {
        const RuleDef* target = g.resolve(node.text());
        if (!target) throw GrammarError("rule '" + rule.name + "' calls unknown rule '" + node.text() + "'");
        if (terminal && target->kind != RuleKind::Terminal)
            throw GrammarError("terminal rule '" + rule.name + "' calls parser rule '" + node.text() + "'");
    }
    if (node.kind() == K::CrossReference) {
        bool found = false;
        for (const auto& r : g.rules()) {
            if (r.kind == RuleKind::Parser && (r.name == node.text() || r.returns_type == node.text())) {
                found = true;
                break;
            }
        }
        if (!found)
            throw GrammarError("rule '" + rule.name + "' cross-references unknown type '" + node.text() + "'");
        if (!g.resolve(node.reference_syntax()))
            throw GrammarError("rule '" + rule.name + "' uses unknown cross-reference syntax '" +
                               std::string(node.reference_syntax()) + "'");
    }
    for (const auto& c : node.children()) check_body(g, rule, c);
}

}  // namespace

const std::vector<RuleDef>& builtin_terminals() {
    static const std::vector<RuleDef> rules = detail::parse_rule_list(kBuiltinTerminals).rules;
    return rules;
}

bool is_hidden_terminal(std::string_view name) {
    return name == "WS" || name == "ML_COMMENT" || name == "SL_COMMENT";
}

// ---------------------------------------------------------------------------
// GrammarAst

GrammarAst::GrammarAst(std::string name, std::string preamble, std::vector<RuleDef> rules)
    : name_(std::move(name)), preamble_(std::move(preamble)), rules_(std::move(rules)) {
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        if (!by_name_.emplace(rules_[i].name, i).second)
            throw GrammarError("duplicate rule name '" + rules_[i].name + "'");
        if (entry_.empty() && rules_[i].kind == RuleKind::Parser) entry_ = rules_[i].name;
    }
    if (entry_.empty()) throw GrammarError("grammar has no parser rule");
    for (const auto& r : rules_) {
        check_body(*this, r, r.body);
        if (r.kind == RuleKind::Parser) collect_keywords(r.body, keywords_);
    }
}

const RuleDef* GrammarAst::find_rule(std::string_view name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : &rules_[it->second];
}

const RuleDef* GrammarAst::resolve(std::string_view name) const {
    if (const RuleDef* r = find_rule(name)) return r;
    for (const auto& b : builtin_terminals())
        if (b.name == name) return &b;
    return nullptr;
}

bool GrammarAst::is_terminal(std::string_view name) const {
    const RuleDef* r = resolve(name);
    return r && r->kind == RuleKind::Terminal;
}

std::vector<const RuleDef*> GrammarAst::lexer_terminals() const {
    std::vector<const RuleDef*> out;
    for (const auto& r : rules_)
        if (r.kind == RuleKind::Terminal) out.push_back(&r);
    for (const auto& b : builtin_terminals())
        if (!find_rule(b.name)) out.push_back(&b);
    return out;
}

std::set<std::string> GrammarAst::reachable_rules() const {
    std::set<std::string> seen{entry_};
    std::deque<std::string> queue{entry_};
    while (!queue.empty()) {
        const RuleDef* r = resolve(queue.front());
        queue.pop_front();
        if (!r) continue;
        std::vector<const BodyNode*> stack{&r->body};
        while (!stack.empty()) {
            const BodyNode* n = stack.back();
            stack.pop_back();
            std::string target;
            if (n->kind() == BodyNode::Kind::RuleCall) target = n->text();
            if (n->kind() == BodyNode::Kind::CrossReference) target = n->reference_syntax();
            if (!target.empty() && seen.insert(target).second) queue.push_back(target);
            for (const auto& c : n->children()) stack.push_back(&c);
        }
    }
    return seen;
}

bool GrammarAst::nullable(const BodyNode& node) const {
    std::set<std::string> visiting;
    return nullable_impl(node, visiting);
}

bool GrammarAst::nullable_impl(const BodyNode& node, std::set<std::string>& visiting) const {
    using K = BodyNode::Kind;
    switch (node.kind()) {
        case K::Keyword:
        case K::CrossReference:
        case K::CharRange:
        case K::Wildcard:
        case K::NegatedToken:
            return false;
        case K::RuleCall: {
            const RuleDef* r = resolve(node.text());
            if (!r || r->kind == RuleKind::Terminal) return false;
            if (!visiting.insert(r->name).second) return false;
            bool result = nullable_impl(r->body, visiting);
            visiting.erase(r->name);
            return result;
        }
        case K::Assignment:
            return nullable_impl(node.child(), visiting);
        case K::Group:
        case K::UnorderedGroup:
            return std::all_of(node.children().begin(), node.children().end(),
                               [&](const BodyNode& c) { return nullable_impl(c, visiting); });
        case K::Alternatives:
            return std::any_of(node.children().begin(), node.children().end(),
                               [&](const BodyNode& c) { return nullable_impl(c, visiting); });
        case K::Cardinality:
            return node.multiplicity() != Multiplicity::Plus || nullable_impl(node.child(), visiting);
    }
    return false;
}

const BodyNode* GrammarAst::resolve(const NodePath& path) const {
    const RuleDef* r = find_rule(path.rule);
    if (!r) return nullptr;
    const BodyNode* n = &r->body;
    for (std::size_t step : path.steps) {
        if (step >= n->children().size()) return nullptr;
        n = &n->children()[step];
    }
    return n;
}

bool operator==(const GrammarAst& a, const GrammarAst& b) {
    return a.name_ == b.name_ && a.preamble_ == b.preamble_ && a.rules_ == b.rules_;
}

// ---------------------------------------------------------------------------
// Serialization

std::string quote_keyword(std::string_view text) {
    std::string out = "'";
    for (char c : text) {
        switch (c) {
            case '\'': out += "\\'"; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            case '\b': out += "\\b"; break;
            case '\f': out += "\\f"; break;
            default: out += c;
        }
    }
    out += '\'';
    return out;
}

namespace {

int precedence(const BodyNode& n) {
    switch (n.kind()) {
        case BodyNode::Kind::Alternatives: return 1;
        case BodyNode::Kind::UnorderedGroup: return 2;
        case BodyNode::Kind::Group: return 3;
        default: return 4;
    }
}

void write_node(std::ostream& os, const BodyNode& n, int min_prec);

void write_atom(std::ostream& os, const BodyNode& n) {
    // Atoms that carry their own suffix or prefix read more clearly in parentheses.
    using K = BodyNode::Kind;
    if (n.kind() == K::Assignment || n.kind() == K::Cardinality || precedence(n) < 4) {
        os << '(';
        write_node(os, n, 0);
        os << ')';
    } else {
        write_node(os, n, 4);
    }
}

void write_node(std::ostream& os, const BodyNode& n, int min_prec) {
    using K = BodyNode::Kind;
    if (precedence(n) < min_prec) {
        os << '(';
        write_node(os, n, 0);
        os << ')';
        return;
    }
    auto join = [&](std::string_view sep, int child_prec) {
        bool first = true;
        for (const auto& c : n.children()) {
            if (!first) os << sep;
            first = false;
            write_node(os, c, child_prec);
        }
    };
    switch (n.kind()) {
        case K::Keyword: os << quote_keyword(n.text()); break;
        case K::RuleCall: os << n.text(); break;
        case K::Assignment:
            os << n.text() << to_string(n.op());
            write_atom(os, n.child());
            break;
        case K::CrossReference:
            os << '[' << n.text();
            if (n.syntax_rule()) os << '|' << *n.syntax_rule();
            os << ']';
            break;
        case K::Group: join(" ", 4); break;
        case K::Alternatives: join(" | ", 2); break;
        case K::UnorderedGroup: join(" & ", 3); break;
        case K::Cardinality:
            write_atom(os, n.child());
            os << to_string(n.multiplicity());
            break;
        case K::CharRange: os << quote_keyword(n.text()) << ".." << quote_keyword(n.upper()); break;
        case K::Wildcard: os << '.'; break;
        case K::NegatedToken:
            os << '!';
            write_atom(os, n.child());
            break;
    }
}

}  // namespace

std::string serialize_body(const BodyNode& node) {
    std::ostringstream os;
    write_node(os, node, 0);
    return os.str();
}

std::string serialize_grammar(const GrammarAst& ast) {
    std::ostringstream os;
    if (!ast.preamble().empty()) os << ast.preamble() << "\n\n";
    bool first = true;
    for (const auto& r : ast.rules()) {
        if (!first) os << "\n\n";
        first = false;
        if (r.kind == RuleKind::Terminal) os << "terminal ";
        os << r.name;
        if (r.returns_type) os << " returns " << *r.returns_type;
        os << ":\n    " << serialize_body(r.body) << ";";
    }
    os << '\n';
    return os.str();
}

GrammarAst parse_grammar(std::string_view text) {
    auto parsed = detail::parse_rule_list(text);
    return GrammarAst(std::move(parsed.name), std::move(parsed.preamble), std::move(parsed.rules));
}

}  // namespace coevolve
