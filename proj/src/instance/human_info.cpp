#include "coevolve/human_info.hpp"

#include <algorithm>
#include <functional>

#include "coevolve/recognizer.hpp"

namespace coevolve {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

bool contains_assignment(const BodyNode& n) {
    if (n.kind() == BodyNode::Kind::Assignment) return true;
    return std::any_of(n.children().begin(), n.children().end(), contains_assignment);
}

void collect_calls(const BodyNode& n, bool under_assignment, std::vector<std::string>& unassigned) {
    if (n.kind() == BodyNode::Kind::Assignment) return;
    if (n.kind() == BodyNode::Kind::RuleCall && !under_assignment) unassigned.push_back(n.text());
    for (const auto& c : n.children()) collect_calls(c, under_assignment, unassigned);
}

// Parser rules that create model objects: rules with assignments, or
// delegating (unassigned call) to such rules. The rest are datatype rules.
std::set<std::string> object_rules(const GrammarAst& g) {
    std::set<std::string> out;
    for (const auto& r : g.rules())
        if (r.kind == RuleKind::Parser && contains_assignment(r.body)) out.insert(r.name);
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& r : g.rules()) {
            if (r.kind != RuleKind::Parser || out.count(r.name)) continue;
            std::vector<std::string> calls;
            collect_calls(r.body, false, calls);
            if (std::any_of(calls.begin(), calls.end(), [&](const std::string& c) { return out.count(c) != 0; })) {
                out.insert(r.name);
                changed = true;
            }
        }
    }
    return out;
}

bool assigns_object(const BodyNode& n, const std::set<std::string>& objects) {
    if (n.kind() == BodyNode::Kind::RuleCall) return objects.count(n.text()) != 0;
    if (n.kind() == BodyNode::Kind::CrossReference) return false;
    return std::any_of(n.children().begin(), n.children().end(),
                       [&](const BodyNode& c) { return assigns_object(c, objects); });
}

std::set<std::size_t> compressed_lines(const LosslessInstance& inst, const GrammarAst& g) {
    std::set<std::size_t> out;
    auto derivation = Recognizer(g).derive(inst);
    if (!derivation) return out;
    const std::set<std::string> objects = object_rules(g);
    std::map<std::size_t, std::set<std::size_t>> owners_by_line;
    std::size_t next_owner = 1;
    std::function<void(const DerivationNode&, std::size_t)> walk = [&](const DerivationNode& n, std::size_t owner) {
        if (n.kind == DerivationNode::Kind::Token) {
            owners_by_line[inst.tokens()[n.first_token].line].insert(owner);
            return;
        }
        if (n.kind == DerivationNode::Kind::Element && n.node->kind() == BodyNode::Kind::Assignment &&
            n.node->op() != AssignOp::Bool && assigns_object(n.node->child(), objects)) {
            owner = next_owner++;
        }
        for (const auto& c : n.children) walk(c, owner);
    };
    walk(*derivation, 0);
    for (const auto& [line, owners] : owners_by_line)
        if (owners.size() >= 2) out.insert(line);
    return out;
}

// Largest space indentation step that explains at least 80% of the
// space-indented lines; falls back to the smallest width seen.
std::string indent_unit(const std::map<std::size_t, LineSignature>& sigs) {
    std::vector<std::size_t> widths;
    for (const auto& [line, sig] : sigs) {
        if (sig.blank || sig.indentation.empty() || sig.inside_comment) continue;
        if (sig.indentation.find_first_not_of(' ') != std::string::npos) continue;
        widths.push_back(sig.indentation.size());
    }
    if (widths.empty()) return {};
    std::set<std::size_t> candidates(widths.begin(), widths.end());
    for (auto it = candidates.rbegin(); it != candidates.rend(); ++it) {
        std::size_t u = *it;
        auto explained = std::count_if(widths.begin(), widths.end(), [&](std::size_t w) { return w % u == 0; });
        if (explained * 5 >= static_cast<long>(widths.size()) * 4) return std::string(u, ' ');
    }
    return std::string(*candidates.begin(), ' ');
}

}  // namespace

std::map<std::size_t, LineSignature> line_signatures(const LosslessInstance& inst) {
    std::map<std::size_t, LineSignature> sigs;
    for (std::size_t l = 1; l <= inst.line_count(); ++l) {
        std::string_view text = inst.line_text(l);
        LineSignature sig;
        std::size_t indent = 0;
        while (indent < text.size() && is_space(text[indent])) ++indent;
        sig.blank = indent == text.size();
        sig.indentation = std::string(text.substr(0, indent));
        sig.content_chars = static_cast<std::size_t>(
            std::count_if(text.begin(), text.end(), [](char c) { return !is_space(c); }));
        sigs.emplace(l, std::move(sig));
    }
    for (const auto& t : inst.trivia()) {
        if (!t.is_comment()) continue;
        std::string_view body = inst.text_of(t);
        std::size_t line = inst.line_of(t.offset);
        std::size_t start = 0;
        while (start <= body.size()) {
            std::size_t nl = body.find('\n', start);
            std::string_view piece = body.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
            if (!piece.empty() && piece.back() == '\r') piece.remove_suffix(1);
            if (!piece.empty()) sigs[line].comments.emplace_back(piece);
            if (nl == std::string_view::npos) break;
            start = nl + 1;
            ++line;
            if (start < body.size()) sigs[line].inside_comment = true;
        }
    }
    return sigs;
}

HumanInfoProfile extract_human_info(const LosslessInstance& instance, const GrammarAst* grammar) {
    HumanInfoProfile p;
    p.per_line_signature = line_signatures(instance);
    p.indent_unit = indent_unit(p.per_line_signature);
    for (const auto& t : instance.trivia()) {
        if (!t.is_comment()) continue;
        ++p.comment_regions;
        std::size_t first = instance.line_of(t.offset);
        std::size_t last = instance.line_of(t.offset + t.length - 1);
        for (std::size_t l = first; l <= last; ++l) p.comment_lines.insert(l);
    }
    if (grammar) p.compressed_lines = compressed_lines(instance, *grammar);
    for (const auto& [line, sig] : p.per_line_signature) {
        bool format = sig.blank || instance.line_text(line).find('\t') != std::string_view::npos ||
                      p.compressed_lines.count(line) != 0;
        if (!format && !sig.indentation.empty() && !sig.inside_comment && !p.indent_unit.empty())
            format = sig.indentation.size() % p.indent_unit.size() != 0;
        if (format) p.format_lines.insert(line);
    }
    return p;
}

}  // namespace coevolve
