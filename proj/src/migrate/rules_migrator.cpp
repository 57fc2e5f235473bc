#include "coevolve/rules_migrator.hpp"

#include <algorithm>
#include <functional>
#include <optional>

#include "coevolve/recognizer.hpp"
#include "json.hpp"

namespace coevolve {

namespace {

using Kind = BodyNode::Kind;

// Derivation nodes produced by one grammar node, outermost first, one per token span.
std::vector<const DerivationNode*> occurrences(const DerivationNode& root, const BodyNode* target) {
    std::vector<const DerivationNode*> out;
    std::function<void(const DerivationNode&)> walk = [&](const DerivationNode& n) {
        if (n.node == target) {
            const DerivationNode* inner = &n;
            while (inner->children.size() == 1 && inner->children[0].node == target) inner = &inner->children[0];
            out.push_back(inner);
            for (const auto& c : inner->children) walk(c);
            return;
        }
        for (const auto& c : n.children) walk(c);
    };
    walk(root);
    return out;
}

bool is_space_or_tab(char c) { return c == ' ' || c == '\t'; }

class Planner {
public:
    Planner(const LosslessInstance& inst, const GrammarAst& old_grammar, const GrammarAst& new_grammar,
            const RulesConfig& config)
        : inst_(inst), old_(old_grammar), new_(new_grammar), config_(config) {}

    EditScript plan(const GrammarDelta& delta) {
        if (inst_.tokens().empty()) return {};
        auto derivation = Recognizer(old_).derive(inst_);
        if (!derivation) throw Error("instance does not conform to the old grammar; rule-based migration needs a derivation");
        root_ = &*derivation;
        for (const auto& c : delta.changes)
            if (c.impact == Impact::Breaking) handle(c);
        return finish();
    }

private:
    const BodyNode* old_node(const GrammarChange& c) const {
        if (!c.old_path) return nullptr;
        return old_.resolve(*c.old_path);
    }

    void handle(const GrammarChange& c) {
        switch (c.kind) {
            case ChangeKind::RuleRenamed:
            case ChangeKind::AttributeRenamed:
            case ChangeKind::OperatorChanged:
                return;  // no concrete syntax involved
            case ChangeKind::KeywordRenamed:
                return rename_keyword(c);
            case ChangeKind::ElementDeleted:
                return delete_element(c);
            case ChangeKind::TerminatorAdded:
                return add_terminator(c);
            case ChangeKind::SeparatorIntroduced:
                return add_separator(c);
            default:
                break;
        }
        // Anything else is only acceptable when the instance never uses the construct.
        const BodyNode* n = old_node(c);
        if (c.kind == ChangeKind::RuleDeleted && c.old_path) n = &old_.find_rule(c.old_path->rule)->body;
        if (n && occurrences(*root_, n).empty()) return;
        throw UnsupportedChange(c);
    }

    void rename_keyword(const GrammarChange& c) {
        const BodyNode* kw = old_node(c);
        if (!kw || kw->kind() != Kind::Keyword) throw UnsupportedChange(c);
        for (const DerivationNode* occ : occurrences(*root_, kw)) {
            if (occ->kind != DerivationNode::Kind::Token) continue;
            replacements_[occ->first_token] = c.new_text;
        }
    }

    void delete_element(const GrammarChange& c) {
        const BodyNode* n = old_node(c);
        if (!n) throw UnsupportedChange(c);
        for (const DerivationNode* occ : occurrences(*root_, n))
            for (std::size_t t = occ->first_token; t < occ->end_token; ++t) deleted_.insert(t);
    }

    InsertionStyle style(const std::map<std::string, InsertionStyle>& by_rule, const InsertionStyle& fallback,
                         const std::string& rule) const {
        auto it = by_rule.find(rule);
        return it == by_rule.end() ? fallback : it->second;
    }

    void insert_after(std::size_t token, const std::string& text, const InsertionStyle& s) {
        std::string payload = s.before + text;
        if (token + 1 < inst_.tokens().size() && inst_.tokens()[token + 1].offset == inst_.tokens()[token].end())
            payload += s.after;
        insertions_[token] += payload;
    }

    void add_terminator(const GrammarChange& c) {
        const BodyNode* container = old_node(c);
        if (!container) throw UnsupportedChange(c);
        const std::size_t length = container->kind() == Kind::Group ? container->children().size() : 1;
        if (c.position != length) throw UnsupportedChange(c);  // only appended keywords
        const InsertionStyle s = style(config_.terminator_by_rule, config_.terminator, c.rule_name);
        for (const DerivationNode* occ : occurrences(*root_, container)) {
            if (occ->empty()) throw UnsupportedChange(c);
            insert_after(occ->end_token - 1, c.new_text, s);
        }
    }

    void add_separator(const GrammarChange& c) {
        const BodyNode* star = old_node(c);
        if (!star || star->kind() != Kind::Cardinality) throw UnsupportedChange(c);
        const InsertionStyle s = style(config_.separator_by_rule, config_.separator, c.rule_name);
        for (const DerivationNode* occ : occurrences(*root_, star)) {
            std::vector<const DerivationNode*> iterations;
            for (const auto& it : occ->children)
                if (!it.empty()) iterations.push_back(&it);
            for (std::size_t k = 0; k + 1 < iterations.size(); ++k)
                insert_after(iterations[k]->end_token - 1, c.new_text, s);
        }
    }

    EditScript finish() {
        const auto& toks = inst_.tokens();
        // Lines whose tokens are all deleted disappear entirely.
        std::map<std::size_t, std::pair<std::size_t, std::size_t>> per_line;  // line -> (tokens, deleted)
        for (std::size_t t = 0; t < toks.size(); ++t) {
            auto& [total, gone] = per_line[toks[t].line];
            ++total;
            gone += deleted_.count(t);
        }
        std::set<std::size_t> dead_lines;
        for (const auto& [line, counts] : per_line)
            if (counts.second > 0 && counts.second == counts.first) dead_lines.insert(line);

        EditScript script;
        struct Located {
            std::size_t offset;
            Edit edit;
        };
        std::vector<Located> located;
        for (auto it = dead_lines.begin(); it != dead_lines.end();) {
            std::size_t first = *it, last = *it;
            for (++it; it != dead_lines.end() && *it == last + 1; ++it) last = *it;
            Edit e;
            e.kind = Edit::Kind::DeleteLineRange;
            e.first_line = first;
            e.last_line = last;
            located.push_back({inst_.line_start(first), e});
        }
        auto on_dead_line = [&](std::size_t t) { return dead_lines.count(toks[t].line) != 0; };
        for (std::size_t t : deleted_) {
            if (on_dead_line(t)) continue;
            Edit e;
            e.kind = Edit::Kind::DeleteToken;
            e.token = t;
            located.push_back({toks[t].offset, e});
        }
        for (const auto& [t, text] : replacements_) {
            if (on_dead_line(t) || deleted_.count(t)) continue;
            Edit e;
            e.kind = Edit::Kind::ReplaceToken;
            e.token = t;
            e.payload = text;
            located.push_back({toks[t].offset, e});
        }
        for (const auto& [t, text] : insertions_) {
            if (on_dead_line(t) || deleted_.count(t)) continue;
            Edit e;
            e.kind = Edit::Kind::InsertTextAfterToken;
            e.token = t;
            e.payload = text;
            located.push_back({toks[t].end(), e});
        }
        std::stable_sort(located.begin(), located.end(),
                         [](const Located& a, const Located& b) { return a.offset < b.offset; });
        for (auto& l : located) {
            if (l.edit.kind == Edit::Kind::DeleteLineRange) {
                for (std::size_t line = l.edit.first_line; line <= l.edit.last_line; ++line)
                    script.touched_lines.insert(line);
            } else {
                script.touched_lines.insert(toks[l.edit.token].line);
            }
            script.edits.push_back(std::move(l.edit));
        }
        return script;
    }

    const LosslessInstance& inst_;
    const GrammarAst& old_;
    const GrammarAst& new_;
    const RulesConfig& config_;
    const DerivationNode* root_ = nullptr;
    std::map<std::size_t, std::string> replacements_;
    std::map<std::size_t, std::string> insertions_;
    std::set<std::size_t> deleted_;
};

struct ByteEdit {
    std::size_t begin;
    std::size_t end;
    std::string text;
    bool token_deletion = false;
};

ByteEdit to_bytes(const LosslessInstance& inst, const Edit& e) {
    const auto& toks = inst.tokens();
    const std::string& src = inst.source();
    if (e.kind == Edit::Kind::DeleteLineRange) {
        if (e.first_line < 1 || e.last_line < e.first_line || e.last_line > inst.line_count())
            throw Error("line range out of bounds");
        const std::size_t begin = inst.line_start(e.first_line);
        const std::size_t end = e.last_line < inst.line_count() ? inst.line_start(e.last_line + 1) : src.size();
        return {begin, end, ""};
    }
    if (e.token >= toks.size()) throw Error("edit refers to a token past the end");
    const Token& t = toks[e.token];
    switch (e.kind) {
        case Edit::Kind::ReplaceToken:
            return {t.offset, t.end(), e.payload};
        case Edit::Kind::InsertTextAfterToken:
            return {t.end(), t.end(), e.payload};
        case Edit::Kind::DeleteToken: {
            // Take the blanks before the token along, or after it when it starts the line.
            std::size_t begin = t.offset, end = t.end();
            while (begin > 0 && is_space_or_tab(src[begin - 1])) --begin;
            if (begin == 0 || src[begin - 1] == '\n') {
                begin = t.offset;
                while (end < src.size() && is_space_or_tab(src[end])) ++end;
            }
            return {begin, end, "", true};
        }
        default:
            break;
    }
    throw Error("unknown edit kind");
}

}  // namespace

UnsupportedChange::UnsupportedChange(GrammarChange change)
    : Error("unsupported change for rule-based migration: " + std::string(to_string(change.operation)) + " " +
            change.rule_name + " (" + change.detail + ")"),
      change_(std::move(change)) {}

EditScript plan_edits(const LosslessInstance& instance, const GrammarDelta& delta, const GrammarAst& old_grammar,
                      const GrammarAst& new_grammar, const RulesConfig& config) {
    return Planner(instance, old_grammar, new_grammar, config).plan(delta);
}

std::string apply_edits(const LosslessInstance& instance, const EditScript& script) {
    std::vector<ByteEdit> edits;
    for (const auto& e : script.edits) edits.push_back(to_bytes(instance, e));
    std::stable_sort(edits.begin(), edits.end(), [](const ByteEdit& a, const ByteEdit& b) { return a.begin < b.begin; });
    // Neighbouring token deletions may both claim the blanks between them.
    std::vector<ByteEdit> merged;
    for (auto& e : edits) {
        if (!merged.empty() && merged.back().token_deletion && e.token_deletion && e.begin <= merged.back().end) {
            merged.back().end = std::max(merged.back().end, e.end);
            continue;
        }
        merged.push_back(std::move(e));
    }
    edits = std::move(merged);
    for (std::size_t i = 1; i < edits.size(); ++i) {
        const ByteEdit& prev = edits[i - 1];
        const ByteEdit& cur = edits[i];
        const bool both_points = prev.begin == prev.end && cur.begin == cur.end;
        if (cur.begin < prev.end || (both_points && cur.begin == prev.begin))
            throw OverlapError("edits overlap at byte " + std::to_string(cur.begin));
    }
    const std::string& src = instance.source();
    std::string out;
    out.reserve(src.size());
    std::size_t pos = 0;
    for (const auto& e : edits) {
        out.append(src, pos, e.begin - pos);
        out += e.text;
        pos = e.end;
    }
    out.append(src, pos, std::string::npos);
    return out;
}

std::string migrate_with_rules(const std::string& instance_text, const GrammarAst& old_grammar,
                               const GrammarAst& new_grammar, const RulesConfig& config, EditScript* script_out) {
    const LosslessInstance inst = lex_instance(instance_text, old_grammar);
    const GrammarDelta delta = diff_grammars(old_grammar, new_grammar);
    EditScript script = plan_edits(inst, delta, old_grammar, new_grammar, config);
    std::string out = apply_edits(inst, script);
    if (script_out) *script_out = std::move(script);
    return out;
}

std::string edit_script_to_json(const EditScript& script, const LosslessInstance& instance) {
    nlohmann::ordered_json j;
    j["edits"] = nlohmann::ordered_json::array();
    for (const auto& e : script.edits) {
        nlohmann::ordered_json item;
        item["kind"] = to_string(e.kind);
        if (e.kind == Edit::Kind::DeleteLineRange) {
            item["first_line"] = e.first_line;
            item["last_line"] = e.last_line;
        } else {
            const Token& t = instance.tokens().at(e.token);
            item["token"] = e.token;
            item["line"] = t.line;
            item["col"] = t.col;
            item["token_text"] = t.text;
        }
        if (e.kind == Edit::Kind::ReplaceToken || e.kind == Edit::Kind::InsertTextAfterToken)
            item["payload"] = e.payload;
        j["edits"].push_back(std::move(item));
    }
    j["touched_lines"] = script.touched_lines;
    return j.dump(2) + "\n";
}

std::string_view to_string(Edit::Kind kind) {
    switch (kind) {
        case Edit::Kind::ReplaceToken: return "replace_token";
        case Edit::Kind::DeleteLineRange: return "delete_line_range";
        case Edit::Kind::InsertTextAfterToken: return "insert_text_after_token";
        case Edit::Kind::DeleteToken: return "delete_token";
    }
    return "?";
}

}  // namespace coevolve
