#include "coevolve/recognizer.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <unordered_map>
#include <unordered_set>

namespace coevolve {

namespace {

// Tokens of lookahead that a repair must let through before it is accepted.
constexpr std::size_t kRepairWindow = 2;
constexpr int kNoTerminal = -1;

struct Sym {
    int id;
    bool terminal;
    const BodyNode* leaf;  // node a terminal symbol stands for
};

struct Production {
    int lhs;
    std::vector<Sym> rhs;
};

struct NtInfo {
    enum class Kind { Rule, Element, Splice, Start };
    Kind kind;
    const BodyNode* node;
    std::string rule;
    bool nullable = false;
    std::vector<int> prods;
};

struct TermInfo {
    std::string text;  // keyword text or terminal rule name
    bool keyword;
};

// Context-free form of a grammar's parser rules. Every non-leaf element gets
// its own nonterminal so that derivations map back onto grammar nodes.
class Cfg {
public:
    explicit Cfg(const GrammarAst& g) : g_(g) {
        start_ = add_nt(NtInfo::Kind::Start, nullptr, "");
        int entry = rule_nt(g.entry_rule());
        add_prod(start_, {Sym{entry, false, nullptr}});
        compute_nullable();
        for (std::size_t t = 0; t < terms_.size(); ++t) ordered_terms_.push_back(static_cast<int>(t));
        std::sort(ordered_terms_.begin(), ordered_terms_.end(), [&](int a, int b) {
            if (terms_[a].keyword != terms_[b].keyword) return terms_[a].keyword;
            return terms_[a].text < terms_[b].text;
        });
    }

    const GrammarAst& grammar() const { return g_; }
    int start() const { return start_; }
    const NtInfo& nt(int id) const { return nts_[id]; }
    const Production& prod(int id) const { return prods_[id]; }
    const TermInfo& term(int id) const { return terms_[id]; }
    const std::vector<int>& ordered_terms() const { return ordered_terms_; }

    int keyword_id(const std::string& text) const {
        auto it = keyword_ids_.find(text);
        return it == keyword_ids_.end() ? kNoTerminal : it->second;
    }
    int terminal_id(const std::string& name) const {
        auto it = terminal_ids_.find(name);
        return it == terminal_ids_.end() ? kNoTerminal : it->second;
    }

    std::string display(int term) const {
        return terms_[term].keyword ? quote_keyword(terms_[term].text) : terms_[term].text;
    }

private:
    int add_nt(NtInfo::Kind kind, const BodyNode* node, std::string rule) {
        nts_.push_back(NtInfo{kind, node, std::move(rule), false, {}});
        return static_cast<int>(nts_.size()) - 1;
    }

    void add_prod(int lhs, std::vector<Sym> rhs) {
        prods_.push_back({lhs, std::move(rhs)});
        nts_[lhs].prods.push_back(static_cast<int>(prods_.size()) - 1);
    }

    int keyword_term(const std::string& text) {
        auto [it, inserted] = keyword_ids_.emplace(text, static_cast<int>(terms_.size()));
        if (inserted) terms_.push_back({text, true});
        return it->second;
    }

    int terminal_term(const std::string& name) {
        auto [it, inserted] = terminal_ids_.emplace(name, static_cast<int>(terms_.size()));
        if (inserted) terms_.push_back({name, false});
        return it->second;
    }

    int rule_nt(const std::string& name) {
        auto it = rule_nts_.find(name);
        if (it != rule_nts_.end()) return it->second;
        const RuleDef* r = g_.find_rule(name);
        int id = add_nt(NtInfo::Kind::Rule, &r->body, name);
        rule_nts_.emplace(name, id);
        for (auto& rhs : expand(r->body, name)) add_prod(id, std::move(rhs));
        return id;
    }

    Sym reference(const std::string& name, const BodyNode* leaf) {
        if (g_.is_terminal(name)) return Sym{terminal_term(name), true, leaf};
        return Sym{rule_nt(name), false, leaf};
    }

    Sym sym(const BodyNode& node, const std::string& rule) {
        using K = BodyNode::Kind;
        switch (node.kind()) {
            case K::Keyword:
                return Sym{keyword_term(node.text()), true, &node};
            case K::RuleCall:
                return reference(node.text(), &node);
            case K::CrossReference:
                return reference(std::string(node.reference_syntax()), &node);
            default:
                break;
        }
        auto it = element_nts_.find(&node);
        if (it != element_nts_.end()) return Sym{it->second, false, nullptr};
        int id = add_nt(NtInfo::Kind::Element, &node, rule);
        element_nts_.emplace(&node, id);
        switch (node.kind()) {
            case K::Assignment:
                for (auto& rhs : expand(node.child(), rule)) add_prod(id, std::move(rhs));
                break;
            case K::Group:
            case K::Alternatives:
                for (auto& rhs : expand(node, rule)) add_prod(id, std::move(rhs));
                break;
            case K::Cardinality: {
                Sym c = sym(node.child(), rule);
                Sym self{id, false, nullptr};
                switch (node.multiplicity()) {
                    case Multiplicity::Optional:
                        add_prod(id, {});
                        add_prod(id, {c});
                        break;
                    case Multiplicity::Star:
                        add_prod(id, {});
                        add_prod(id, {self, c});
                        break;
                    case Multiplicity::Plus:
                        add_prod(id, {c});
                        add_prod(id, {self, c});
                        break;
                }
                break;
            }
            case K::UnorderedGroup: {
                if (node.children().size() > 12)
                    throw GrammarError("unordered group with more than 12 members in rule '" + rule + "'");
                std::vector<Sym> members;
                std::vector<bool> nullable;
                for (const auto& m : node.children()) {
                    members.push_back(sym(m, rule));
                    nullable.push_back(g_.nullable(m));
                }
                std::map<unsigned, int> masks;
                int first = unordered_nt(0, members, nullable, masks, rule);
                add_prod(id, {Sym{first, false, nullptr}});
                break;
            }
            default:
                throw GrammarError("unexpected element in parser rule '" + rule + "'");
        }
        return Sym{id, false, nullptr};
    }

    // U(mask) derives any order of the members not yet in mask, each once.
    int unordered_nt(unsigned mask, const std::vector<Sym>& members, const std::vector<bool>& nullable,
                     std::map<unsigned, int>& masks, const std::string& rule) {
        auto it = masks.find(mask);
        if (it != masks.end()) return it->second;
        int id = add_nt(NtInfo::Kind::Splice, nullptr, rule);
        masks.emplace(mask, id);
        bool rest_nullable = true;
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (mask & (1u << i)) continue;
            if (!nullable[i]) rest_nullable = false;
            int next = unordered_nt(mask | (1u << i), members, nullable, masks, rule);
            add_prod(id, {members[i], Sym{next, false, nullptr}});
        }
        if (rest_nullable) add_prod(id, {});
        return id;
    }

    std::vector<std::vector<Sym>> expand(const BodyNode& node, const std::string& rule) {
        std::vector<std::vector<Sym>> out;
        if (node.kind() == BodyNode::Kind::Alternatives) {
            for (const auto& alt : node.children()) out.push_back(seq(alt, rule));
        } else {
            out.push_back(seq(node, rule));
        }
        return out;
    }

    std::vector<Sym> seq(const BodyNode& node, const std::string& rule) {
        std::vector<Sym> out;
        if (node.kind() == BodyNode::Kind::Group) {
            for (const auto& c : node.children()) out.push_back(sym(c, rule));
        } else {
            out.push_back(sym(node, rule));
        }
        return out;
    }

    void compute_nullable() {
        bool changed = true;
        while (changed) {
            changed = false;
            for (const auto& p : prods_) {
                if (nts_[p.lhs].nullable) continue;
                bool all = std::all_of(p.rhs.begin(), p.rhs.end(),
                                       [&](const Sym& s) { return !s.terminal && nts_[s.id].nullable; });
                if (all) {
                    nts_[p.lhs].nullable = true;
                    changed = true;
                }
            }
        }
    }

    const GrammarAst& g_;
    std::vector<NtInfo> nts_;
    std::vector<Production> prods_;
    std::vector<TermInfo> terms_;
    std::vector<int> ordered_terms_;
    std::map<std::string, int> keyword_ids_;
    std::map<std::string, int> terminal_ids_;
    std::map<std::string, int> rule_nts_;
    std::unordered_map<const BodyNode*, int> element_nts_;
    int start_ = 0;
};

struct Item {
    std::uint32_t prod;
    std::uint32_t dot;
    std::uint32_t origin;
};

// Back pointer recorded the first time an item is added.
struct Link {
    static constexpr std::int32_t kPredicted = -3;
    static constexpr std::int32_t kEpsilon = -2;
    static constexpr std::int32_t kScanned = -1;
    std::int32_t prev_set;
    std::int32_t prev_item;
    std::int32_t child;  // index of a completed item in the same set, or one of the markers above
};

struct EarleySet {
    std::vector<Item> items;
    std::vector<Link> links;
    std::unordered_map<std::uint64_t, std::uint32_t> index;
    std::unordered_map<int, std::vector<std::uint32_t>> nt_waiting;
    std::unordered_map<int, std::vector<std::uint32_t>> term_waiting;
    std::unordered_set<int> predicted;
    long token = -1;  // token consumed to reach this set; -1 for virtual tokens and restarts
};

class Chart {
public:
    explicit Chart(const Cfg& cfg) : cfg_(cfg) {}

    void start() {
        sets_.clear();
        restart();
    }

    // Begins a fresh parse of the entry rule at the current position.
    void restart() {
        sets_.emplace_back();
        start_origin_ = sets_.size() - 1;
        for (int p : cfg_.nt(cfg_.start()).prods) add(sets_.size() - 1, Item{std::uint32_t(p), 0, std::uint32_t(start_origin_)},
                                                      Link{-1, -1, Link::kPredicted});
        close(sets_.size() - 1);
    }

    bool scan(int term, long token) {
        if (term == kNoTerminal) return false;
        std::size_t j = sets_.size() - 1;
        auto it = sets_[j].term_waiting.find(term);
        if (it == sets_[j].term_waiting.end()) return false;
        sets_.emplace_back();
        sets_.back().token = token;
        auto waiting = it->second;
        for (std::uint32_t idx : waiting) {
            Item item = sets_[j].items[idx];
            ++item.dot;
            add(j + 1, item, Link{std::int32_t(j), std::int32_t(idx), Link::kScanned});
        }
        close(j + 1);
        return true;
    }

    bool can_scan(int term) const {
        return term != kNoTerminal && sets_.back().term_waiting.count(term) != 0;
    }

    std::vector<int> expected() const {
        std::vector<int> out;
        for (int t : cfg_.ordered_terms())
            if (sets_.back().term_waiting.count(t)) out.push_back(t);
        return out;
    }

    std::size_t size() const { return sets_.size(); }
    std::size_t start_origin() const { return start_origin_; }

    void truncate(std::size_t size, std::size_t start_origin) {
        sets_.resize(size);
        start_origin_ = start_origin;
    }

    // Index of the completed start item in the last set, or -1.
    long accepting_item() const {
        const EarleySet& s = sets_.back();
        for (int p : cfg_.nt(cfg_.start()).prods) {
            auto it = s.index.find(key(Item{std::uint32_t(p), std::uint32_t(cfg_.prod(p).rhs.size()),
                                            std::uint32_t(start_origin_)}));
            if (it != s.index.end()) return it->second;
        }
        return -1;
    }

    bool accepted() const { return accepting_item() >= 0; }

    DerivationNode derivation() const {
        std::size_t last = sets_.size() - 1;
        long item = accepting_item();
        auto children = build_children(last, static_cast<std::uint32_t>(item));
        if (!children.empty()) return std::move(children.front());
        // Entry rule derived the empty string.
        const std::string& entry = cfg_.grammar().entry_rule();
        DerivationNode node;
        node.kind = DerivationNode::Kind::Rule;
        node.node = &cfg_.grammar().find_rule(entry)->body;
        node.rule = entry;
        return node;
    }

private:
    static std::uint64_t key(const Item& item) {
        return (std::uint64_t(item.prod) << 40) | (std::uint64_t(item.dot) << 28) | std::uint64_t(item.origin);
    }

    void add(std::size_t j, const Item& item, const Link& link) {
        EarleySet& s = sets_[j];
        auto [it, inserted] = s.index.emplace(key(item), std::uint32_t(s.items.size()));
        if (!inserted) return;
        s.items.push_back(item);
        s.links.push_back(link);
    }

    void close(std::size_t j) {
        for (std::size_t idx = 0; idx < sets_[j].items.size(); ++idx) {
            const Item item = sets_[j].items[idx];
            const Production& p = cfg_.prod(item.prod);
            if (item.dot == p.rhs.size()) {
                if (item.origin == j) continue;  // nullable completions are handled at prediction
                EarleySet& origin = sets_[item.origin];
                auto it = origin.nt_waiting.find(p.lhs);
                if (it == origin.nt_waiting.end()) continue;
                for (std::uint32_t w : it->second) {
                    Item next = origin.items[w];
                    ++next.dot;
                    add(j, next, Link{std::int32_t(item.origin), std::int32_t(w), std::int32_t(idx)});
                }
                continue;
            }
            const Sym& next = p.rhs[item.dot];
            if (next.terminal) {
                sets_[j].term_waiting[next.id].push_back(std::uint32_t(idx));
                continue;
            }
            sets_[j].nt_waiting[next.id].push_back(std::uint32_t(idx));
            if (sets_[j].predicted.insert(next.id).second) {
                for (int q : cfg_.nt(next.id).prods)
                    add(j, Item{std::uint32_t(q), 0, std::uint32_t(j)}, Link{-1, -1, Link::kPredicted});
            }
            if (cfg_.nt(next.id).nullable) {
                Item advanced = item;
                ++advanced.dot;
                add(j, advanced, Link{std::int32_t(j), std::int32_t(idx), Link::kEpsilon});
            }
        }
    }

    static void span_from_children(DerivationNode& node) {
        bool any = false;
        for (const auto& c : node.children) {
            if (c.empty()) continue;
            if (!any) node.first_token = c.first_token;
            node.end_token = c.end_token;
            any = true;
        }
    }

    // Children of a completed item, in order, with splice nonterminals and
    // repetition self-references flattened into the list.
    std::vector<DerivationNode> build_children(std::size_t set, std::uint32_t item_index) const {
        std::vector<DerivationNode> rev;
        const int lhs = cfg_.prod(sets_[set].items[item_index].prod).lhs;
        std::size_t cur_set = set;
        std::uint32_t cur_item = item_index;
        while (true) {
            const Link link = sets_[cur_set].links[cur_item];
            if (link.child == Link::kPredicted) break;
            const Item& item = sets_[cur_set].items[cur_item];
            const Production& p = cfg_.prod(item.prod);
            if (link.child == Link::kScanned) {
                const Sym& s = p.rhs[item.dot - 1];
                DerivationNode tok;
                tok.kind = DerivationNode::Kind::Token;
                tok.node = s.leaf;
                tok.rule = cfg_.nt(p.lhs).rule;
                tok.first_token = static_cast<std::size_t>(sets_[cur_set].token);
                tok.end_token = tok.first_token + 1;
                rev.push_back(std::move(tok));
            } else if (link.child >= 0) {
                const std::uint32_t child_index = std::uint32_t(link.child);
                const int child_nt = cfg_.prod(sets_[cur_set].items[child_index].prod).lhs;
                const Item& prev = sets_[link.prev_set].items[link.prev_item];
                if (child_nt == lhs && prev.dot == 0) {
                    // Left-recursive repetition: continue with the inner iteration's chain.
                    cur_item = child_index;
                    continue;
                }
                const NtInfo& info = cfg_.nt(child_nt);
                auto grand = build_children(cur_set, child_index);
                if (info.kind == NtInfo::Kind::Splice || child_nt == lhs) {
                    for (auto it = grand.rbegin(); it != grand.rend(); ++it) rev.push_back(std::move(*it));
                } else {
                    DerivationNode node;
                    node.kind = info.kind == NtInfo::Kind::Rule ? DerivationNode::Kind::Rule
                                                                : DerivationNode::Kind::Element;
                    node.node = info.node;
                    node.rule = info.rule;
                    node.children = std::move(grand);
                    span_from_children(node);
                    if (node.empty()) node.first_token = node.end_token = next_token_position(cur_set);
                    rev.push_back(std::move(node));
                }
            }
            cur_set = static_cast<std::size_t>(link.prev_set);
            cur_item = static_cast<std::uint32_t>(link.prev_item);
        }
        std::reverse(rev.begin(), rev.end());
        return rev;
    }

    // Number of real tokens consumed up to and including set index `set`.
    std::size_t next_token_position(std::size_t set) const {
        for (std::size_t s = set + 1; s-- > 0;)
            if (sets_[s].token >= 0) return static_cast<std::size_t>(sets_[s].token) + 1;
        return 0;
    }

    const Cfg& cfg_;
    std::vector<EarleySet> sets_;
    std::size_t start_origin_ = 0;
};

bool is_punctuation(const std::string& text) {
    return !text.empty() && std::none_of(text.begin(), text.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '_' || c >= 0x80;
    });
}

}  // namespace

struct Recognizer::Impl {
    explicit Impl(const GrammarAst& g) : grammar(g), cfg(grammar), table(grammar) {}

    const GrammarAst& grammar;
    Cfg cfg;
    LexerTable table;

    std::vector<int> classify(const LosslessInstance& inst) const {
        std::vector<int> out;
        std::unordered_map<std::string, int> cache;
        for (const auto& tok : inst.tokens()) {
            auto it = cache.find(tok.text);
            if (it == cache.end()) {
                int id = kNoTerminal;
                if (table.is_keyword(tok.text)) {
                    id = cfg.keyword_id(tok.text);
                } else {
                    LexerTable::Match m = table.classify(tok.text);
                    if (m.length != 0 && !m.keyword) id = cfg.terminal_id(m.terminal);
                }
                it = cache.emplace(tok.text, id).first;
            }
            out.push_back(it->second);
        }
        return out;
    }

    bool run_plain(Chart& chart, const std::vector<int>& cls) const {
        chart.start();
        for (std::size_t i = 0; i < cls.size(); ++i)
            if (!chart.scan(cls[i], long(i))) return false;
        return chart.accepted();
    }

    ConformanceReport check(const LosslessInstance& inst) const;
};

ConformanceReport Recognizer::Impl::check(const LosslessInstance& inst) const {
    const auto& tokens = inst.tokens();
    const std::vector<int> cls = classify(inst);
    const std::size_t n = tokens.size();
    ConformanceReport report;
    Chart chart(cfg);
    chart.start();
    std::vector<bool> deleted(n, false);

    // Whether tokens [from, from + window) scan from the chart's current
    // state; a window reaching past the end must also leave the parse accepted.
    auto viable = [&](std::size_t from) {
        const std::size_t mark = chart.size();
        const std::size_t origin = chart.start_origin();
        bool ok = true;
        const std::size_t to = std::min(n, from + kRepairWindow);
        for (std::size_t k = from; k < to && ok; ++k) ok = chart.scan(cls[k], long(k));
        if (ok && from + kRepairWindow > n) ok = chart.accepted();
        chart.truncate(mark, origin);
        return ok;
    };

    auto expected_names = [&] {
        std::vector<std::string> out;
        for (int t : chart.expected()) out.push_back(cfg.display(t));
        return out;
    };

    auto add_error = [&](ConformanceError err) {
        for (std::size_t l : err.lines) report.error_lines.insert(l);
        report.errors.push_back(std::move(err));
    };

    bool exhausted = false;
    std::size_t i = 0;
    while (i < n) {
        if (chart.scan(cls[i], long(i))) {
            ++i;
            continue;
        }
        const Token& tok = tokens[i];
        ConformanceError err;
        err.line = tok.line;
        err.col = tok.col;
        err.expected = expected_names();
        err.token_begin = i;
        err.token_end = i + 1;
        const std::vector<int> candidates = chart.expected();

        bool repaired = false;
        for (int e : candidates) {
            const std::size_t mark = chart.size();
            const std::size_t origin = chart.start_origin();
            chart.scan(e, -1);
            bool ok = viable(i);
            if (!ok) {
                chart.truncate(mark, origin);
                continue;
            }
            const TermInfo& info = cfg.term(e);
            const bool previous_line = info.keyword && is_punctuation(info.text) && i > 0;
            err.line = previous_line ? tokens[i - 1].line : tok.line;
            err.col = previous_line ? tokens[i - 1].col + tokens[i - 1].text.size() : tok.col;
            err.repair = ConformanceError::Repair::Insertion;
            err.message = "missing " + cfg.display(e) + " before '" + tok.text + "'";
            err.token_end = i;
            err.lines = {err.line};
            repaired = true;
            break;
        }
        if (repaired) {
            add_error(std::move(err));
            continue;
        }

        for (int e : candidates) {
            const std::size_t mark = chart.size();
            const std::size_t origin = chart.start_origin();
            chart.scan(e, long(i));
            if (!viable(i + 1)) {
                chart.truncate(mark, origin);
                continue;
            }
            err.repair = ConformanceError::Repair::Substitution;
            err.message = "expected " + cfg.display(e) + " but found '" + tok.text + "'";
            err.lines = {tok.line};
            repaired = true;
            break;
        }
        if (repaired) {
            add_error(std::move(err));
            ++i;
            continue;
        }

        if (viable(i + 1)) {
            err.repair = ConformanceError::Repair::Deletion;
            err.message = "unexpected '" + tok.text + "'";
            err.lines = {tok.line};
            deleted[i] = true;
            add_error(std::move(err));
            ++i;
            continue;
        }

        // Resynchronize: the nearest token from which parsing can go on,
        // either continuing the current parse or restarting the entry rule.
        std::size_t resume = n;
        bool restart = false;
        for (std::size_t j = i; j < n && resume == n; ++j) {
            if (j > i && viable(j)) {
                resume = j;
                break;
            }
            const std::size_t mark = chart.size();
            const std::size_t origin = chart.start_origin();
            chart.restart();
            bool ok = viable(j);
            chart.truncate(mark, origin);
            if (ok) {
                resume = j;
                restart = true;
            }
        }
        err.repair = ConformanceError::Repair::Skip;
        err.token_end = resume;
        for (std::size_t k = i; k < resume; ++k) {
            err.lines.insert(tokens[k].line);
            deleted[k] = true;
        }
        if (resume == i) err.lines.insert(tok.line);
        if (resume == n) {
            err.message = "unexpected '" + tok.text + "'; no recovery point before end of input";
            exhausted = true;
        } else {
            err.message = "unexpected '" + tok.text + "'; resumed at line " + std::to_string(tokens[resume].line);
        }
        add_error(std::move(err));
        if (restart) chart.restart();
        i = resume;
    }

    if (!exhausted && !chart.accepted()) {
        ConformanceError err;
        err.repair = ConformanceError::Repair::EndOfInput;
        err.expected = expected_names();
        err.message = "unexpected end of input";
        err.token_begin = err.token_end = n;
        if (n > 0) {
            err.line = tokens[n - 1].line;
            err.col = tokens[n - 1].col + tokens[n - 1].text.size();
            err.lines = {err.line};
        } else {
            err.line = 1;
            err.col = 1;
        }
        add_error(std::move(err));
    }

    report.conforms = report.errors.empty();

    std::map<std::size_t, bool> line_all_deleted;
    for (std::size_t k = 0; k < n; ++k) {
        auto [it, inserted] = line_all_deleted.emplace(tokens[k].line, deleted[k]);
        if (!inserted) it->second = it->second && deleted[k];
    }
    for (const auto& [line, all] : line_all_deleted)
        if (all) report.deletion_lines.insert(line);
    return report;
}

Recognizer::Recognizer(const GrammarAst& grammar) : impl_(std::make_unique<Impl>(grammar)) {}
Recognizer::~Recognizer() = default;
Recognizer::Recognizer(Recognizer&&) noexcept = default;
Recognizer& Recognizer::operator=(Recognizer&&) noexcept = default;

const GrammarAst& Recognizer::grammar() const noexcept { return impl_->grammar; }

ConformanceReport Recognizer::check(const LosslessInstance& instance) const { return impl_->check(instance); }

bool Recognizer::accepts(const LosslessInstance& instance) const {
    Chart chart(impl_->cfg);
    return impl_->run_plain(chart, impl_->classify(instance));
}

std::optional<DerivationNode> Recognizer::derive(const LosslessInstance& instance) const {
    Chart chart(impl_->cfg);
    if (!impl_->run_plain(chart, impl_->classify(instance))) return std::nullopt;
    return chart.derivation();
}

ConformanceReport check_conformance(const LosslessInstance& instance, const GrammarAst& grammar) {
    return Recognizer(grammar).check(instance);
}

}  // namespace coevolve
