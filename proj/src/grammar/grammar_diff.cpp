#include "coevolve/grammar_diff.hpp"

#include <algorithm>
#include <functional>
#include <set>

namespace coevolve {

namespace {

using Kind = BodyNode::Kind;
using Steps = std::vector<std::size_t>;
using Renames = std::map<std::string, std::string>;

std::string mapped(const Renames& renames, const std::string& name) {
    auto it = renames.find(name);
    return it == renames.end() ? name : it->second;
}

bool same_shape(const BodyNode& a, const BodyNode& b) {
    if (a.kind() != b.kind() || a.children().size() != b.children().size()) return false;
    for (std::size_t i = 0; i < a.children().size(); ++i)
        if (!same_shape(a.children()[i], b.children()[i])) return false;
    return true;
}

struct LeafDiff {
    ChangeKind kind;
    Steps steps;
    std::string feature;  // nearest enclosing assignment
    std::string old_label;
    std::string new_label;
};

std::string mapped_syntax(const Renames& renames, const BodyNode& n) {
    return mapped(renames, std::string(n.reference_syntax()));
}

// Differences between two trees of the same shape, leaf by leaf.
void leaf_diffs(const BodyNode& a, const BodyNode& b, const Renames& renames, Steps& steps,
                const std::string& feature, std::vector<LeafDiff>& out) {
    switch (a.kind()) {
        case Kind::Keyword:
            if (a.text() != b.text()) out.push_back({ChangeKind::KeywordRenamed, steps, feature, a.text(), b.text()});
            break;
        case Kind::RuleCall:
            if (mapped(renames, a.text()) != b.text())
                out.push_back({ChangeKind::RuleCallChanged, steps, feature, a.text(), b.text()});
            break;
        case Kind::CrossReference:
            if (mapped(renames, a.text()) != b.text() || mapped_syntax(renames, a) != b.reference_syntax())
                out.push_back({ChangeKind::ReferenceChanged, steps, feature, serialize_body(a), serialize_body(b)});
            break;
        case Kind::Assignment:
            if (a.text() != b.text()) out.push_back({ChangeKind::AttributeRenamed, steps, a.text(), a.text(), b.text()});
            if (a.op() != b.op())
                out.push_back({ChangeKind::OperatorChanged, steps, b.text(), std::string(to_string(a.op())),
                               std::string(to_string(b.op()))});
            break;
        case Kind::Cardinality:
            if (a.multiplicity() != b.multiplicity())
                out.push_back({ChangeKind::CardinalityChanged, steps, feature, std::string(to_string(a.multiplicity())),
                               std::string(to_string(b.multiplicity()))});
            break;
        case Kind::CharRange:
            if (a.text() != b.text() || a.upper() != b.upper())
                out.push_back({ChangeKind::RuleRestructured, steps, feature, serialize_body(a), serialize_body(b)});
            break;
        default:
            break;
    }
    const std::string& inner = a.kind() == Kind::Assignment ? b.text() : feature;
    for (std::size_t i = 0; i < a.children().size(); ++i) {
        steps.push_back(i);
        leaf_diffs(a.children()[i], b.children()[i], renames, steps, inner, out);
        steps.pop_back();
    }
}

std::vector<LeafDiff> leaf_diffs(const BodyNode& a, const BodyNode& b, const Renames& renames) {
    std::vector<LeafDiff> out;
    Steps steps;
    leaf_diffs(a, b, renames, steps, {}, out);
    return out;
}

bool equal_mod(const BodyNode& a, const BodyNode& b, const Renames& renames) {
    return same_shape(a, b) && leaf_diffs(a, b, renames).empty();
}

void collect_features(const BodyNode& n, std::set<std::string>& out) {
    if (n.kind() == Kind::Assignment) out.insert(n.text());
    for (const auto& c : n.children()) collect_features(c, out);
}

std::set<std::string> features_of(const BodyNode& n) {
    std::set<std::string> out;
    collect_features(n, out);
    return out;
}

std::string first_feature(const BodyNode& n) {
    if (n.kind() == Kind::Assignment) return n.text();
    for (const auto& c : n.children()) {
        std::string f = first_feature(c);
        if (!f.empty()) return f;
    }
    return {};
}

bool share_feature(const BodyNode& a, const BodyNode& b) {
    const auto fa = features_of(a);
    for (const auto& f : features_of(b))
        if (fa.count(f)) return true;
    return false;
}

// `X*` -> `(X (s X)*)?` or `X+` -> `X (s X)*`; yields the separator keyword.
std::optional<std::string> separator_pattern(const BodyNode& a, const BodyNode& b, const Renames& renames) {
    if (a.kind() != Kind::Cardinality || a.multiplicity() == Multiplicity::Optional) return std::nullopt;
    const BodyNode* g = &b;
    if (a.multiplicity() == Multiplicity::Star) {
        if (b.kind() != Kind::Cardinality || b.multiplicity() != Multiplicity::Optional) return std::nullopt;
        g = &b.child();
    }
    if (g->kind() != Kind::Group || g->children().size() != 2) return std::nullopt;
    const BodyNode& head = g->children()[0];
    const BodyNode& tail = g->children()[1];
    if (!equal_mod(a.child(), head, renames)) return std::nullopt;
    if (tail.kind() != Kind::Cardinality || tail.multiplicity() != Multiplicity::Star) return std::nullopt;
    const BodyNode& rep = tail.child();
    if (rep.kind() != Kind::Group || rep.children().size() != 2) return std::nullopt;
    if (rep.children()[0].kind() != Kind::Keyword) return std::nullopt;
    if (!equal_mod(a.child(), rep.children()[1], renames)) return std::nullopt;
    return rep.children()[0].text();
}

bool compatible(const BodyNode& a, const BodyNode& b, const Renames& renames) {
    if (same_shape(a, b) || share_feature(a, b) || separator_pattern(a, b, renames)) return true;
    if (a.kind() == Kind::Cardinality && b.kind() == Kind::Cardinality) return compatible(a.child(), b.child(), renames);
    if (a.kind() == Kind::Cardinality) return equal_mod(a.child(), b, renames);
    if (b.kind() == Kind::Cardinality) return equal_mod(a, b.child(), renames);
    return false;
}

Steps child_steps(const Steps& base, std::size_t i) {
    Steps s = base;
    s.push_back(i);
    return s;
}

// Members of a sequence (or of an alternatives or unordered container) with their paths.
struct Member {
    const BodyNode* node;
    Steps steps;
};

std::vector<Member> members(const BodyNode& n, const Steps& base, Kind container) {
    std::vector<Member> out;
    if (n.kind() == container) {
        for (std::size_t i = 0; i < n.children().size(); ++i) out.push_back({&n.children()[i], child_steps(base, i)});
    } else {
        out.push_back({&n, base});
    }
    return out;
}

std::string quoted_or_text(const BodyNode& n) {
    return n.kind() == Kind::Keyword ? quote_keyword(n.text()) : serialize_body(n);
}

// ---------------------------------------------------------------------------
// Impact

class Judge {
public:
    Judge(const GrammarAst& o, const GrammarAst& n, Renames renames)
        : old_(o), new_(n), renames_(std::move(renames)), reachable_(o.reachable_rules()) {
        for (const auto& r : o.rules()) {
            std::function<void(const BodyNode&)> walk = [&](const BodyNode& b) {
                if (b.kind() == Kind::RuleCall) referenced_.insert(b.text());
                if (b.kind() == Kind::CrossReference) {
                    referenced_.insert(b.text());
                    referenced_.insert(std::string(b.reference_syntax()));
                }
                for (const auto& c : b.children()) walk(c);
            };
            walk(r.body);
        }
    }

    Impact classify(const GrammarChange& c) const {
        if (c.operation != ChangeOp::Add && in_unused_rule(c.old_rule_name)) return Impact::NonBreaking;
        switch (c.operation) {
            case ChangeOp::Add:
                if (c.kind == ChangeKind::ElementInserted) {
                    const BodyNode* e = c.new_path ? new_.resolve(*c.new_path) : nullptr;
                    return e && new_.nullable(*e) ? Impact::NonBreaking : Impact::Breaking;
                }
                return Impact::NonBreaking;
            case ChangeOp::Delete:
                return Impact::Breaking;
            case ChangeOp::Rename:
                if (c.kind == ChangeKind::KeywordRenamed) return Impact::Breaking;
                if (c.kind == ChangeKind::RuleRenamed)
                    return referenced_.count(c.old_rule_name) || c.old_rule_name == old_.entry_rule() ? Impact::Breaking
                                                                                                     : Impact::NonBreaking;
                return Impact::NonBreaking;
            case ChangeOp::Modify:
                break;
        }
        const BodyNode* n = c.new_path ? new_.resolve(*c.new_path) : nullptr;
        if (!n) return Impact::Breaking;
        switch (c.kind) {
            case ChangeKind::OptionalInserted:
            case ChangeKind::TerminatorAdded:
            case ChangeKind::ElementInserted:
                return subsumes(n, nullptr, 0) ? Impact::NonBreaking : Impact::Breaking;
            case ChangeKind::CardinalityChanged:
                return widens(c.old_text, c.new_text) ? Impact::NonBreaking : Impact::Breaking;
            case ChangeKind::OperatorChanged:
            case ChangeKind::AttributeRenamed:
                return Impact::NonBreaking;  // concrete syntax unchanged
            default:
                break;
        }
        const BodyNode* o = c.old_path ? old_.resolve(*c.old_path) : nullptr;
        if (!o) return Impact::Breaking;
        return subsumes(n, o, 0) ? Impact::NonBreaking : Impact::Breaking;
    }

private:
    bool in_unused_rule(const std::string& rule) const {
        const RuleDef* r = old_.find_rule(rule);
        if (!r) return false;
        if (r->kind == RuleKind::Parser) return reachable_.count(rule) == 0;
        return false;
    }

    // Empty old/new text means the element had no cardinality.
    static bool widens(const std::string& from, const std::string& to) {
        if (from == to || to == "*") return true;
        if (to == "?") return from.empty();
        if (to == "+") return from.empty();
        return false;
    }

    static std::vector<const BodyNode*> seq(const BodyNode* n) {
        std::vector<const BodyNode*> out;
        if (n->kind() == Kind::Group)
            for (const auto& c : n->children()) out.push_back(&c);
        else
            out.push_back(n);
        return out;
    }

    bool parser_rule(const GrammarAst& g, const std::string& name) const {
        const RuleDef* r = g.find_rule(name);
        return r && r->kind == RuleKind::Parser;
    }

    // Conservative check that every token string derived by `o` (old
    // grammar; nullptr = the empty string) is also derived by `n` (new grammar).
    bool subsumes(const BodyNode* n, const BodyNode* o, int depth) const {
        if (!o) return new_.nullable(*n);
        if (depth > 16) return false;
        if (equal_mod(*o, *n, renames_)) return true;
        if (o->kind() == Kind::Assignment) return subsumes(n, &o->child(), depth);
        if (n->kind() == Kind::Assignment) return subsumes(&n->child(), o, depth);
        if (o->kind() == Kind::Alternatives) {
            return std::all_of(o->children().begin(), o->children().end(),
                               [&](const BodyNode& alt) { return subsumes(n, &alt, depth); });
        }
        if (n->kind() == Kind::Alternatives) {
            for (const auto& alt : n->children())
                if (subsumes(&alt, o, depth)) return true;
        }
        if (n->kind() == Kind::Cardinality) {
            if (subsumes(&n->child(), o, depth)) return true;
            if (o->kind() == Kind::Cardinality &&
                widens(std::string(to_string(o->multiplicity())), std::string(to_string(n->multiplicity()))))
                return subsumes(&n->child(), &o->child(), depth);
        }
        if (n->kind() == Kind::RuleCall && parser_rule(new_, n->text()) && mapped(renames_, o->text()) != n->text())
            if (subsumes(&new_.find_rule(n->text())->body, o, depth + 1)) return true;
        if (o->kind() == Kind::RuleCall && parser_rule(old_, o->text()))
            if (subsumes(n, &old_.find_rule(o->text())->body, depth + 1)) return true;
        if (n->kind() == Kind::CrossReference) {
            const BodyNode syntax_n = BodyNode::rule_call(std::string(n->reference_syntax()));
            if (o->kind() == Kind::CrossReference) {
                if (mapped(renames_, o->text()) != n->text()) return false;
                const BodyNode syntax_o = BodyNode::rule_call(std::string(o->reference_syntax()));
                return subsumes(&syntax_n, &syntax_o, depth + 1);
            }
            if (o->kind() == Kind::RuleCall) return subsumes(&syntax_n, o, depth + 1);
        }
        if (n->kind() == Kind::UnorderedGroup && o->kind() != Kind::UnorderedGroup) {
            const auto os = seq(o);
            std::vector<bool> used(n->children().size(), false);
            for (const BodyNode* e : os) {
                bool placed = false;
                for (std::size_t k = 0; k < used.size() && !placed; ++k) {
                    if (used[k] || !subsumes(&n->children()[k], e, depth)) continue;
                    used[k] = placed = true;
                }
                if (!placed) return false;
            }
            for (std::size_t k = 0; k < used.size(); ++k)
                if (!used[k] && !new_.nullable(n->children()[k])) return false;
            return true;
        }
        if (n->kind() == Kind::Group || o->kind() == Kind::Group) {
            if (o->kind() == Kind::UnorderedGroup) return false;
            const auto ns = seq(n);
            const auto os = seq(o);
            std::function<bool(std::size_t, std::size_t)> match = [&](std::size_t i, std::size_t j) {
                if (j == os.size()) {
                    for (; i < ns.size(); ++i)
                        if (!new_.nullable(*ns[i])) return false;
                    return true;
                }
                if (i == ns.size()) return false;
                if (new_.nullable(*ns[i]) && match(i + 1, j)) return true;
                return subsumes(ns[i], os[j], depth) && match(i + 1, j + 1);
            };
            if (ns.size() > 1 || os.size() > 1) return match(0, 0);
        }
        return false;
    }

    const GrammarAst& old_;
    const GrammarAst& new_;
    Renames renames_;
    std::set<std::string> reachable_;
    std::set<std::string> referenced_;
};

// ---------------------------------------------------------------------------
// Differencing

class Differ {
public:
    Differ(const GrammarAst& o, const GrammarAst& n, Renames renames)
        : old_(o), new_(n), renames_(std::move(renames)) {}

    std::vector<GrammarChange> run() {
        std::map<std::string, std::string> inverse;
        for (const auto& [from, to] : renames_) inverse[to] = from;
        for (const auto& nr : new_.rules()) {
            if (nr.kind == RuleKind::Terminal && !old_.find_rule(nr.name) && !inverse.count(nr.name) &&
                old_.resolve(nr.name)) {
                compare_rule(*old_.resolve(nr.name), nr);  // overrides a built-in terminal
                continue;
            }
            auto inv = inverse.find(nr.name);
            if (inv != inverse.end()) {
                const RuleDef& orule = *old_.find_rule(inv->second);
                rule_old_ = orule.name;
                rule_new_ = nr.name;
                GrammarChange c = make(ChangeOp::Rename, ChangeSubject::Rule, ChangeKind::RuleRenamed,
                                       "rule " + orule.name + " renamed to " + nr.name, Steps{}, Steps{});
                c.old_text = orule.name;
                c.new_text = nr.name;
                out_.push_back(std::move(c));
                compare_rule(orule, nr);
                continue;
            }
            const RuleDef* orule = old_.find_rule(nr.name);
            if (!orule) {
                rule_old_.clear();
                rule_new_ = nr.name;
                GrammarChange c = make(ChangeOp::Add, ChangeSubject::Rule, ChangeKind::RuleAdded,
                                       "rule " + nr.name + " added", std::nullopt, Steps{});
                c.new_text = nr.name;
                out_.push_back(std::move(c));
                continue;
            }
            compare_rule(*orule, nr);
        }
        for (const auto& orule : old_.rules()) {
            if (new_.find_rule(orule.name) || renames_.count(orule.name)) continue;
            if (orule.kind == RuleKind::Terminal && new_.resolve(orule.name)) {
                compare_rule(orule, *new_.resolve(orule.name));  // falls back to the built-in
                continue;
            }
            rule_old_ = orule.name;
            rule_new_ = orule.name;
            GrammarChange c = make(ChangeOp::Delete, ChangeSubject::Rule, ChangeKind::RuleDeleted,
                                   "rule " + orule.name + " deleted", Steps{}, std::nullopt);
            c.old_text = orule.name;
            out_.push_back(std::move(c));
        }
        return std::move(out_);
    }

private:
    GrammarChange make(ChangeOp op, ChangeSubject subject, ChangeKind kind, std::string detail,
                       std::optional<Steps> old_steps, std::optional<Steps> new_steps) const {
        GrammarChange c;
        c.operation = op;
        c.subject = subject;
        c.kind = kind;
        c.rule_name = op == ChangeOp::Delete && rule_new_.empty() ? rule_old_ : rule_new_;
        c.old_rule_name = rule_old_;
        c.detail = std::move(detail);
        if (old_steps) c.old_path = NodePath{rule_old_, std::move(*old_steps)};
        if (new_steps) c.new_path = NodePath{rule_new_, std::move(*new_steps)};
        return c;
    }

    void compare_rule(const RuleDef& o, const RuleDef& n) {
        rule_old_ = o.name;
        rule_new_ = n.name;
        if (o.kind != n.kind) {
            GrammarChange c = make(ChangeOp::Modify, ChangeSubject::Rule, ChangeKind::RuleRestructured,
                                   "rule " + n.name + " changed kind", Steps{}, Steps{});
            c.old_text = serialize_body(o.body);
            c.new_text = serialize_body(n.body);
            out_.push_back(std::move(c));
            return;
        }
        diff_nodes(o.body, n.body, {}, {}, {});
    }

    void emit_leaf(const LeafDiff& d, const Steps& pa, const Steps& pb) {
        Steps so = pa, sn = pb;
        so.insert(so.end(), d.steps.begin(), d.steps.end());
        sn.insert(sn.end(), d.steps.begin(), d.steps.end());
        const bool attr = !d.feature.empty();
        GrammarChange c;
        switch (d.kind) {
            case ChangeKind::KeywordRenamed:
                c = make(ChangeOp::Rename, ChangeSubject::Keyword, d.kind,
                         "keyword " + quote_keyword(d.old_label) + " renamed to " + quote_keyword(d.new_label), so, sn);
                break;
            case ChangeKind::AttributeRenamed:
                c = make(ChangeOp::Rename, ChangeSubject::Attribute, d.kind,
                         "attribute " + d.old_label + " renamed to " + d.new_label, so, sn);
                break;
            case ChangeKind::RuleCallChanged:
                c = make(ChangeOp::Modify, attr ? ChangeSubject::Attribute : ChangeSubject::Rule, d.kind,
                         attr ? "attribute " + d.feature + " type changed from " + d.old_label + " to " + d.new_label
                              : "rule call " + d.old_label + " replaced by " + d.new_label,
                         so, sn);
                break;
            case ChangeKind::ReferenceChanged:
                c = make(ChangeOp::Modify, ChangeSubject::Attribute, d.kind,
                         (attr ? "attribute " + d.feature + " reference" : std::string("reference")) + " changed from " +
                             d.old_label + " to " + d.new_label,
                         so, sn);
                break;
            case ChangeKind::OperatorChanged:
                c = make(ChangeOp::Modify, ChangeSubject::Attribute, d.kind,
                         "attribute " + d.feature + " operator changed from " + d.old_label + " to " + d.new_label, so,
                         sn);
                break;
            case ChangeKind::CardinalityChanged:
                c = make(ChangeOp::Modify, attr ? ChangeSubject::Attribute : ChangeSubject::Keyword, d.kind,
                         (attr ? "attribute " + d.feature + " cardinality" : std::string("cardinality")) +
                             " changed from " + d.old_label + " to " + d.new_label,
                         so, sn);
                break;
            default:
                c = make(ChangeOp::Modify, ChangeSubject::Rule, ChangeKind::RuleRestructured,
                         "element " + d.old_label + " replaced by " + d.new_label, so, sn);
                break;
        }
        c.old_text = d.old_label;
        c.new_text = d.new_label;
        out_.push_back(std::move(c));
    }

    void diff_nodes(const BodyNode& a, const BodyNode& b, const Steps& pa, const Steps& pb, const std::string& feature) {
        if (same_shape(a, b)) {
            for (const auto& d : leaf_diffs(a, b, renames_)) {
                LeafDiff scoped = d;
                if (scoped.feature.empty()) scoped.feature = feature;
                emit_leaf(scoped, pa, pb);
            }
            return;
        }
        if (auto sep = separator_pattern(a, b, renames_)) {
            GrammarChange c = make(ChangeOp::Modify, ChangeSubject::Keyword, ChangeKind::SeparatorIntroduced,
                                   "separator " + quote_keyword(*sep) + " introduced", pa, pb);
            c.old_text = serialize_body(a);
            c.new_text = *sep;
            out_.push_back(std::move(c));
            return;
        }
        if (a.kind() == Kind::Assignment && b.kind() == Kind::Assignment) {
            if (a.text() != b.text()) {
                GrammarChange c = make(ChangeOp::Rename, ChangeSubject::Attribute, ChangeKind::AttributeRenamed,
                                       "attribute " + a.text() + " renamed to " + b.text(), pa, pb);
                c.old_text = a.text();
                c.new_text = b.text();
                out_.push_back(std::move(c));
            }
            if (a.op() != b.op()) {
                GrammarChange c = make(ChangeOp::Modify, ChangeSubject::Attribute, ChangeKind::OperatorChanged,
                                       "attribute " + b.text() + " operator changed from " +
                                           std::string(to_string(a.op())) + " to " + std::string(to_string(b.op())),
                                       pa, pb);
                c.old_text = to_string(a.op());
                c.new_text = to_string(b.op());
                out_.push_back(std::move(c));
            }
            diff_nodes(a.child(), b.child(), child_steps(pa, 0), child_steps(pb, 0), b.text());
            return;
        }
        const bool unordered = a.kind() == Kind::UnorderedGroup || b.kind() == Kind::UnorderedGroup;
        const bool alternatives = a.kind() == Kind::Alternatives || b.kind() == Kind::Alternatives;
        if (unordered && !alternatives) return diff_unordered(a, b, pa, pb, feature);
        if (a.kind() == Kind::Group || b.kind() == Kind::Group) return diff_sequence(a, b, pa, pb, feature);
        if (alternatives) return diff_alternatives(a, b, pa, pb, feature);
        if (a.kind() == Kind::Cardinality && b.kind() == Kind::Cardinality) {
            if (a.multiplicity() != b.multiplicity())
                emit_leaf({ChangeKind::CardinalityChanged, {}, feature, std::string(to_string(a.multiplicity())),
                           std::string(to_string(b.multiplicity()))},
                          pa, pb);
            diff_nodes(a.child(), b.child(), child_steps(pa, 0), child_steps(pb, 0), feature);
            return;
        }
        if (b.kind() == Kind::Cardinality && equal_mod(a, b.child(), renames_)) {
            emit_leaf({ChangeKind::CardinalityChanged, {}, feature, "", std::string(to_string(b.multiplicity()))}, pa,
                      pb);
            return;
        }
        if (a.kind() == Kind::Cardinality && equal_mod(a.child(), b, renames_)) {
            emit_leaf({ChangeKind::CardinalityChanged, {}, feature, std::string(to_string(a.multiplicity())), ""}, pa,
                      pb);
            return;
        }
        restructured(a, b, pa, pb, feature);
    }

    void restructured(const BodyNode& a, const BodyNode& b, const Steps& pa, const Steps& pb,
                      const std::string& feature) {
        std::string detail = pa.empty()       ? "rule body restructured"
                             : feature.empty() ? "element " + serialize_body(a) + " replaced by " + serialize_body(b)
                                               : "attribute " + feature + " restructured";
        GrammarChange c = make(ChangeOp::Modify, feature.empty() ? ChangeSubject::Rule : ChangeSubject::Attribute,
                               ChangeKind::RuleRestructured, std::move(detail), pa, pb);
        c.old_text = serialize_body(a);
        c.new_text = serialize_body(b);
        out_.push_back(std::move(c));
    }

    void inserted(const BodyNode& e, const Steps& container, std::size_t position, const Steps& pe, bool rule_tail) {
        const std::string f = first_feature(e);
        GrammarChange c;
        if (new_.nullable(e)) {
            c = make(ChangeOp::Modify, f.empty() ? ChangeSubject::Keyword : ChangeSubject::Attribute,
                     ChangeKind::OptionalInserted,
                     f.empty() ? "optional element " + serialize_body(e) + " added" : "optional attribute " + f + " added",
                     container, pe);
        } else if (e.kind() == Kind::Keyword && rule_tail) {
            c = make(ChangeOp::Modify, ChangeSubject::Keyword, ChangeKind::TerminatorAdded,
                     "terminator " + quote_keyword(e.text()) + " added", container, pe);
        } else if (e.kind() == Kind::Keyword) {
            c = make(ChangeOp::Add, ChangeSubject::Keyword, ChangeKind::ElementInserted,
                     "mandatory keyword " + quote_keyword(e.text()) + " added", container, pe);
        } else if (!f.empty()) {
            c = make(ChangeOp::Add, ChangeSubject::Attribute, ChangeKind::ElementInserted,
                     "mandatory attribute " + f + " added", container, pe);
        } else {
            c = make(ChangeOp::Add, e.kind() == Kind::RuleCall ? ChangeSubject::Rule : ChangeSubject::Keyword,
                     ChangeKind::ElementInserted, "mandatory element " + serialize_body(e) + " added", container, pe);
        }
        c.position = position;
        c.new_text = e.kind() == Kind::Keyword ? e.text() : serialize_body(e);
        out_.push_back(std::move(c));
    }

    void deleted(const BodyNode& e, const Steps& pe, ChangeKind kind) {
        const std::string f = first_feature(e);
        GrammarChange c;
        const std::string what = kind == ChangeKind::AlternativeDeleted ? "alternative " : "";
        if (!f.empty())
            c = make(ChangeOp::Delete, ChangeSubject::Attribute, kind, what + "attribute " + f + " removed", pe,
                     std::nullopt);
        else if (e.kind() == Kind::RuleCall)
            c = make(ChangeOp::Delete, ChangeSubject::Rule, kind, what + "rule call " + e.text() + " removed", pe,
                     std::nullopt);
        else if (e.kind() == Kind::Keyword)
            c = make(ChangeOp::Delete, ChangeSubject::Keyword, kind, what + "keyword " + quote_keyword(e.text()) + " removed",
                     pe, std::nullopt);
        else
            c = make(ChangeOp::Delete, ChangeSubject::Keyword, kind,
                     (what.empty() ? "element " : what) + serialize_body(e) + " removed", pe, std::nullopt);
        c.old_text = e.kind() == Kind::Keyword ? e.text() : serialize_body(e);
        out_.push_back(std::move(c));
    }

    void diff_sequence(const BodyNode& a, const BodyNode& b, const Steps& pa, const Steps& pb,
                       const std::string& feature) {
        const auto os = members(a, pa, Kind::Group);
        const auto ns = members(b, pb, Kind::Group);
        const std::size_t n = os.size(), m = ns.size();

        // LCS over structurally equal elements.
        std::vector<std::vector<std::size_t>> L(n + 1, std::vector<std::size_t>(m + 1, 0));
        for (std::size_t i = n; i-- > 0;)
            for (std::size_t j = m; j-- > 0;)
                L[i][j] = equal_mod(*os[i].node, *ns[j].node, renames_) ? L[i + 1][j + 1] + 1
                                                                        : std::max(L[i + 1][j], L[i][j + 1]);
        std::vector<std::pair<std::size_t, std::size_t>> anchors;
        for (std::size_t i = 0, j = 0; i < n && j < m;) {
            if (equal_mod(*os[i].node, *ns[j].node, renames_)) {
                anchors.emplace_back(i, j);
                ++i;
                ++j;
            } else if (L[i + 1][j] >= L[i][j + 1]) {
                ++i;
            } else {
                ++j;
            }
        }
        anchors.emplace_back(n, m);

        const Steps& container = pa;
        std::size_t oi = 0, nj = 0;
        for (const auto& [ai, aj] : anchors) {
            // Pair gap elements in order by compatibility; the rest are deleted or inserted.
            std::size_t j = nj;
            std::size_t consumed_old = oi;
            for (std::size_t i = oi; i < ai; ++i) {
                std::size_t k = j;
                while (k < aj && !compatible(*os[i].node, *ns[k].node, renames_)) ++k;
                if (k == aj) {
                    deleted(*os[i].node, os[i].steps, ChangeKind::ElementDeleted);
                    consumed_old = i + 1;
                    continue;
                }
                for (; j < k; ++j) inserted(*ns[j].node, container, i, ns[j].steps, pb.empty() && j + 1 == m);
                diff_nodes(*os[i].node, *ns[k].node, os[i].steps, ns[k].steps, feature);
                j = k + 1;
                consumed_old = i + 1;
            }
            for (; j < aj; ++j) inserted(*ns[j].node, container, consumed_old, ns[j].steps, pb.empty() && j + 1 == m);
            oi = ai + 1;
            nj = aj + 1;
        }
    }

    void diff_alternatives(const BodyNode& a, const BodyNode& b, const Steps& pa, const Steps& pb,
                           const std::string& feature) {
        const auto oa = members(a, pa, Kind::Alternatives);
        const auto na = members(b, pb, Kind::Alternatives);
        std::vector<int> partner(oa.size(), -1);
        std::vector<bool> taken(na.size(), false);
        auto pair_by = [&](auto&& pred) {
            for (std::size_t i = 0; i < oa.size(); ++i) {
                if (partner[i] >= 0) continue;
                for (std::size_t k = 0; k < na.size(); ++k) {
                    if (taken[k] || !pred(*oa[i].node, *na[k].node)) continue;
                    partner[i] = static_cast<int>(k);
                    taken[k] = true;
                    break;
                }
            }
        };
        pair_by([&](const BodyNode& x, const BodyNode& y) { return equal_mod(x, y, renames_); });
        pair_by([&](const BodyNode& x, const BodyNode& y) { return compatible(x, y, renames_); });
        for (std::size_t i = 0; i < oa.size(); ++i) {
            if (partner[i] < 0)
                deleted(*oa[i].node, oa[i].steps, ChangeKind::AlternativeDeleted);
            else
                diff_nodes(*oa[i].node, *na[partner[i]].node, oa[i].steps, na[partner[i]].steps, feature);
        }
        for (std::size_t k = 0; k < na.size(); ++k) {
            if (taken[k]) continue;
            const BodyNode& e = *na[k].node;
            const std::string f = first_feature(e);
            GrammarChange c = make(
                ChangeOp::Add,
                e.kind() == Kind::RuleCall ? ChangeSubject::Rule
                : f.empty()                ? ChangeSubject::Keyword
                                           : ChangeSubject::Attribute,
                ChangeKind::AlternativeAdded, "alternative " + quoted_or_text(e) + " added", pa, na[k].steps);
            c.position = oa.size();
            c.new_text = serialize_body(e);
            out_.push_back(std::move(c));
        }
    }

    void diff_unordered(const BodyNode& a, const BodyNode& b, const Steps& pa, const Steps& pb,
                        const std::string& feature) {
        auto om = members(a, pa, Kind::UnorderedGroup);
        auto nm = members(b, pb, Kind::UnorderedGroup);
        // A sequence facing an unordered group is read either as one member
        // or as its elements, whichever matches more members exactly.
        auto exact = [&](const std::vector<Member>& xs, const std::vector<Member>& ys) {
            std::size_t count = 0;
            for (const auto& x : xs)
                for (const auto& y : ys)
                    if (equal_mod(*x.node, *y.node, renames_)) {
                        ++count;
                        break;
                    }
            return count;
        };
        if (a.kind() == Kind::Group) {
            auto split = members(a, pa, Kind::Group);
            if (exact(split, nm) > exact(om, nm)) om = std::move(split);
        }
        if (b.kind() == Kind::Group) {
            auto split = members(b, pb, Kind::Group);
            if (exact(om, split) > exact(om, nm)) nm = std::move(split);
        }
        std::vector<int> partner(om.size(), -1);
        std::vector<bool> taken(nm.size(), false);
        auto pair_by = [&](auto&& pred) {
            for (std::size_t i = 0; i < om.size(); ++i) {
                if (partner[i] >= 0) continue;
                for (std::size_t k = 0; k < nm.size(); ++k) {
                    if (taken[k] || !pred(*om[i].node, *nm[k].node)) continue;
                    partner[i] = static_cast<int>(k);
                    taken[k] = true;
                    break;
                }
            }
        };
        pair_by([&](const BodyNode& x, const BodyNode& y) { return equal_mod(x, y, renames_); });
        pair_by([&](const BodyNode& x, const BodyNode& y) { return share_feature(x, y); });
        pair_by([&](const BodyNode& x, const BodyNode& y) { return same_shape(x, y); });

        std::size_t paired = 0;
        for (int p : partner) paired += p >= 0;
        if (paired >= 2 && (a.kind() == Kind::UnorderedGroup) != (b.kind() == Kind::UnorderedGroup)) {
            GrammarChange c = make(ChangeOp::Modify, ChangeSubject::Rule, ChangeKind::OrderingChanged,
                                   a.kind() == Kind::UnorderedGroup ? "unordered group replaced by sequence"
                                                                    : "sequence replaced by unordered group",
                                   pa, pb);
            c.old_text = serialize_body(a);
            c.new_text = serialize_body(b);
            out_.push_back(std::move(c));
        }
        for (std::size_t i = 0; i < om.size(); ++i) {
            if (partner[i] < 0)
                deleted(*om[i].node, om[i].steps, ChangeKind::ElementDeleted);
            else
                diff_nodes(*om[i].node, *nm[partner[i]].node, om[i].steps, nm[partner[i]].steps, feature);
        }
        for (std::size_t k = 0; k < nm.size(); ++k)
            if (!taken[k]) inserted(*nm[k].node, pa, om.size(), nm[k].steps, false);
    }

    const GrammarAst& old_;
    const GrammarAst& new_;
    Renames renames_;
    std::vector<GrammarChange> out_;
    std::string rule_old_;
    std::string rule_new_;
};

// ---------------------------------------------------------------------------
// Applying one change

BodyNode rebuild(const BodyNode& n, std::vector<BodyNode> kids) {
    switch (n.kind()) {
        case Kind::Assignment:
            return BodyNode::assignment(n.text(), n.op(), std::move(kids.at(0)));
        case Kind::Group:
            return BodyNode::group(std::move(kids));
        case Kind::Alternatives:
            return BodyNode::alternatives(std::move(kids));
        case Kind::UnorderedGroup:
            return BodyNode::unordered_group(std::move(kids));
        case Kind::Cardinality:
            if (kids.at(0).kind() == Kind::Cardinality) return std::move(kids.at(0));
            return BodyNode::cardinality(std::move(kids.at(0)), n.multiplicity());
        case Kind::NegatedToken:
            return BodyNode::negated(std::move(kids.at(0)));
        default:
            return n;
    }
}

BodyNode edit_at(const BodyNode& n, const Steps& steps, std::size_t depth,
                 const std::function<BodyNode(const BodyNode&)>& f) {
    if (depth == steps.size()) return f(n);
    std::vector<BodyNode> kids = n.children();
    kids.at(steps[depth]) = edit_at(kids[steps[depth]], steps, depth + 1, f);
    return rebuild(n, std::move(kids));
}

BodyNode rename_refs(const BodyNode& n, const Renames& renames) {
    switch (n.kind()) {
        case Kind::RuleCall:
            return BodyNode::rule_call(mapped(renames, n.text()));
        case Kind::CrossReference: {
            std::optional<std::string> syntax;
            if (n.syntax_rule()) syntax = mapped(renames, *n.syntax_rule());
            return BodyNode::cross_reference(mapped(renames, n.text()), syntax);
        }
        default:
            break;
    }
    if (n.children().empty()) return n;
    std::vector<BodyNode> kids;
    for (const auto& c : n.children()) kids.push_back(rename_refs(c, renames));
    return rebuild(n, std::move(kids));
}

void collect_refs(const BodyNode& n, std::set<std::string>& out) {
    if (n.kind() == Kind::RuleCall) out.insert(n.text());
    if (n.kind() == Kind::CrossReference) {
        out.insert(n.text());
        if (n.syntax_rule()) out.insert(*n.syntax_rule());
    }
    for (const auto& c : n.children()) collect_refs(c, out);
}

const RuleDef& rule_at(const GrammarAst& g, const std::optional<NodePath>& path) {
    if (!path) throw Error("change has no path for this operation");
    const RuleDef* r = g.find_rule(path->rule);
    if (!r) r = g.resolve(path->rule);
    if (!r) throw Error("change refers to unknown rule '" + path->rule + "'");
    return *r;
}

const BodyNode& node_at(const GrammarAst& g, const std::optional<NodePath>& path) {
    rule_at(g, path);
    const BodyNode* n = g.resolve(*path);
    if (!n) throw Error("change path does not resolve in rule '" + path->rule + "'");
    return *n;
}

std::optional<Multiplicity> parse_multiplicity(const std::string& s) {
    if (s == "?") return Multiplicity::Optional;
    if (s == "*") return Multiplicity::Star;
    if (s == "+") return Multiplicity::Plus;
    return std::nullopt;
}

}  // namespace

std::map<std::string, std::string> detect_rule_renames(const GrammarAst& old_grammar, const GrammarAst& new_grammar) {
    std::vector<const RuleDef*> deleted, added;
    for (const auto& r : old_grammar.rules())
        if (!new_grammar.find_rule(r.name)) deleted.push_back(&r);
    for (const auto& r : new_grammar.rules())
        if (!old_grammar.find_rule(r.name)) added.push_back(&r);

    Renames renames;
    std::set<std::string> used;
    bool changed = true;
    while (changed) {
        changed = false;
        for (const RuleDef* d : deleted) {
            if (renames.count(d->name)) continue;
            for (const RuleDef* a : added) {
                if (used.count(a->name) || a->kind != d->kind || !same_shape(d->body, a->body)) continue;
                Renames trial = renames;
                trial[d->name] = a->name;
                std::set<std::pair<std::string, std::string>> substitutions;
                for (const auto& diff : leaf_diffs(d->body, a->body, trial))
                    if (!(diff.old_label == d->name && diff.new_label == a->name))
                        substitutions.emplace(diff.old_label, diff.new_label);
                if (substitutions.size() > 1) continue;
                renames = std::move(trial);
                used.insert(a->name);
                changed = true;
                break;
            }
        }
    }
    return renames;
}

GrammarDelta diff_grammars(const GrammarAst& old_grammar, const GrammarAst& new_grammar) {
    Renames renames = detect_rule_renames(old_grammar, new_grammar);
    GrammarDelta delta;
    delta.changes = Differ(old_grammar, new_grammar, renames).run();
    Judge judge(old_grammar, new_grammar, renames);
    for (auto& c : delta.changes) {
        c.impact = judge.classify(c);
        ++(c.impact == Impact::Breaking ? delta.breaking_count : delta.non_breaking_count);
    }
    delta.total = delta.changes.size();
    return delta;
}

Impact classify_impact(const GrammarChange& change, const GrammarAst& old_grammar, const GrammarAst& new_grammar) {
    return Judge(old_grammar, new_grammar, detect_rule_renames(old_grammar, new_grammar)).classify(change);
}

DeltaSummary summarize_delta(const GrammarDelta& delta) {
    DeltaSummary s;
    s.total = delta.changes.size();
    std::map<ChangeOp, std::size_t> freq;
    for (const auto& c : delta.changes) {
        ++(c.impact == Impact::Breaking ? s.breaking : s.non_breaking);
        ++freq[c.operation];
    }
    for (const auto& [op, count] : freq) s.primary_operation_types.push_back(op);
    std::stable_sort(s.primary_operation_types.begin(), s.primary_operation_types.end(),
                     [&](ChangeOp x, ChangeOp y) { return freq[x] > freq[y]; });
    return s;
}

GrammarAst apply_change(const GrammarAst& old_grammar, const GrammarAst& new_grammar, const GrammarChange& change) {
    const Renames renames = detect_rule_renames(old_grammar, new_grammar);
    Renames inverse;
    for (const auto& [from, to] : renames) inverse[to] = from;
    // Fragments taken from the new grammar use old rule names where a rename is known.
    auto transplant = [&](const BodyNode& n) { return rename_refs(n, inverse); };

    std::vector<RuleDef> rules = old_grammar.rules();
    auto rule_index = [&](const std::string& name) -> RuleDef& {
        for (auto& r : rules)
            if (r.name == name) return r;
        throw Error("change refers to unknown rule '" + name + "'");
    };
    auto edit = [&](const std::function<BodyNode(const BodyNode&)>& f) {
        if (!change.old_path) throw Error("change has no old path");
        if (!old_grammar.find_rule(change.old_path->rule)) {
            const RuleDef* builtin = old_grammar.resolve(change.old_path->rule);
            if (!builtin) throw Error("change refers to unknown rule '" + change.old_path->rule + "'");
            rules.push_back(*builtin);
        }
        RuleDef& r = rule_index(change.old_path->rule);
        r.body = edit_at(r.body, change.old_path->steps, 0, f);
    };

    switch (change.kind) {
        case ChangeKind::RuleAdded: {
            RuleDef r = rule_at(new_grammar, change.new_path);
            r.body = transplant(r.body);
            rules.push_back(std::move(r));
            break;
        }
        case ChangeKind::RuleDeleted: {
            const std::string name = rule_at(old_grammar, change.old_path).name;
            rules.erase(std::remove_if(rules.begin(), rules.end(), [&](const RuleDef& r) { return r.name == name; }),
                        rules.end());
            break;
        }
        case ChangeKind::RuleRenamed: {
            const Renames one{{change.old_text, change.new_text}};
            for (auto& r : rules) {
                if (r.name == change.old_text) r.name = change.new_text;
                r.body = rename_refs(r.body, one);
            }
            break;
        }
        case ChangeKind::KeywordRenamed:
        case ChangeKind::RuleCallChanged:
        case ChangeKind::ReferenceChanged:
        case ChangeKind::RuleRestructured:
        case ChangeKind::SeparatorIntroduced: {
            const BodyNode replacement = transplant(node_at(new_grammar, change.new_path));
            edit([&](const BodyNode&) { return replacement; });
            break;
        }
        case ChangeKind::AttributeRenamed:
        case ChangeKind::OperatorChanged: {
            const BodyNode& target = node_at(new_grammar, change.new_path);
            edit([&](const BodyNode& n) {
                if (n.kind() != Kind::Assignment) throw Error("change path does not name an assignment");
                return BodyNode::assignment(change.kind == ChangeKind::AttributeRenamed ? target.text() : n.text(),
                                            change.kind == ChangeKind::OperatorChanged ? target.op() : n.op(),
                                            n.child());
            });
            break;
        }
        case ChangeKind::CardinalityChanged: {
            const auto to = parse_multiplicity(change.new_text);
            edit([&](const BodyNode& n) {
                const BodyNode& inner = n.kind() == Kind::Cardinality ? n.child() : n;
                return to ? BodyNode::cardinality(inner, *to) : inner;
            });
            break;
        }
        case ChangeKind::OrderingChanged: {
            const bool to_unordered = node_at(new_grammar, change.new_path).kind() == Kind::UnorderedGroup;
            edit([&](const BodyNode& n) {
                return to_unordered ? BodyNode::unordered_group(n.children()) : BodyNode::group(n.children());
            });
            break;
        }
        case ChangeKind::ElementInserted:
        case ChangeKind::OptionalInserted:
        case ChangeKind::TerminatorAdded:
        case ChangeKind::AlternativeAdded: {
            const BodyNode element = transplant(node_at(new_grammar, change.new_path));
            const Kind container_kind = change.kind == ChangeKind::AlternativeAdded ? Kind::Alternatives : Kind::Group;
            edit([&](const BodyNode& n) {
                const bool unordered = n.kind() == Kind::UnorderedGroup && container_kind == Kind::Group;
                std::vector<BodyNode> kids;
                if (n.kind() == container_kind || unordered)
                    kids = n.children();
                else
                    kids.push_back(n);
                kids.insert(kids.begin() + static_cast<std::ptrdiff_t>(std::min(change.position, kids.size())),
                            element);
                if (unordered) return BodyNode::unordered_group(std::move(kids));
                return container_kind == Kind::Alternatives ? BodyNode::alternatives(std::move(kids))
                                                            : BodyNode::group(std::move(kids));
            });
            break;
        }
        case ChangeKind::ElementDeleted:
        case ChangeKind::AlternativeDeleted: {
            if (!change.old_path || change.old_path->steps.empty()) throw Error("cannot delete a whole rule body");
            NodePath parent = *change.old_path;
            const std::size_t index = parent.steps.back();
            parent.steps.pop_back();
            RuleDef& r = rule_index(parent.rule);
            r.body = edit_at(r.body, parent.steps, 0, [&](const BodyNode& n) {
                std::vector<BodyNode> kids = n.children();
                kids.erase(kids.begin() + static_cast<std::ptrdiff_t>(index));
                if (kids.empty()) throw Error("deletion would leave an empty element");
                return rebuild(n, std::move(kids));
            });
            break;
        }
    }

    // Bring along new-grammar rules that are now referenced but missing.
    for (bool added = true; added;) {
        added = false;
        std::set<std::string> refs;
        for (const auto& r : rules) collect_refs(r.body, refs);
        for (const auto& name : refs) {
            if (std::any_of(rules.begin(), rules.end(), [&](const RuleDef& r) { return r.name == name; })) continue;
            if (std::any_of(builtin_terminals().begin(), builtin_terminals().end(),
                            [&](const RuleDef& r) { return r.name == name; }))
                continue;
            const RuleDef* source = new_grammar.find_rule(name);
            if (!source) continue;
            RuleDef copy = *source;
            copy.body = transplant(copy.body);
            rules.push_back(std::move(copy));
            added = true;
        }
    }
    return GrammarAst(old_grammar.name(), old_grammar.preamble(), std::move(rules));
}

std::string_view to_string(ChangeOp op) {
    switch (op) {
        case ChangeOp::Add: return "Add";
        case ChangeOp::Delete: return "Delete";
        case ChangeOp::Rename: return "Rename";
        case ChangeOp::Modify: return "Modify";
    }
    return "?";
}

std::string_view to_string(ChangeSubject subject) {
    switch (subject) {
        case ChangeSubject::Rule: return "rule";
        case ChangeSubject::Attribute: return "attribute";
        case ChangeSubject::Keyword: return "keyword";
    }
    return "?";
}

std::string_view to_string(Impact impact) { return impact == Impact::Breaking ? "breaking" : "non_breaking"; }

std::string_view to_string(ChangeKind kind) {
    switch (kind) {
        case ChangeKind::RuleAdded: return "rule_added";
        case ChangeKind::RuleDeleted: return "rule_deleted";
        case ChangeKind::RuleRenamed: return "rule_renamed";
        case ChangeKind::RuleRestructured: return "rule_restructured";
        case ChangeKind::KeywordRenamed: return "keyword_renamed";
        case ChangeKind::AttributeRenamed: return "attribute_renamed";
        case ChangeKind::RuleCallChanged: return "rule_call_changed";
        case ChangeKind::ReferenceChanged: return "reference_changed";
        case ChangeKind::OperatorChanged: return "operator_changed";
        case ChangeKind::CardinalityChanged: return "cardinality_changed";
        case ChangeKind::OrderingChanged: return "ordering_changed";
        case ChangeKind::SeparatorIntroduced: return "separator_introduced";
        case ChangeKind::ElementInserted: return "element_inserted";
        case ChangeKind::OptionalInserted: return "optional_inserted";
        case ChangeKind::TerminatorAdded: return "terminator_added";
        case ChangeKind::AlternativeAdded: return "alternative_added";
        case ChangeKind::ElementDeleted: return "element_deleted";
        case ChangeKind::AlternativeDeleted: return "alternative_deleted";
    }
    return "?";
}

}  // namespace coevolve
