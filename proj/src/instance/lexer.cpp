#include <algorithm>

#include "coevolve/instance.hpp"

namespace coevolve {

// ---------------------------------------------------------------------------
// LosslessInstance

LosslessInstance::LosslessInstance(std::string source, std::vector<Token> tokens, std::vector<Trivia> trivia,
                                   std::size_t trailing_trivia_begin)
    : source_(std::move(source)),
      tokens_(std::move(tokens)),
      trivia_(std::move(trivia)),
      trailing_begin_(trailing_trivia_begin) {
    line_starts_.push_back(0);
    for (std::size_t i = 0; i < source_.size(); ++i)
        if (source_[i] == '\n') line_starts_.push_back(i + 1);
    if (source_.empty()) {
        line_count_ = 0;
    } else {
        line_count_ = line_starts_.size();
        if (source_.back() == '\n') --line_count_;
    }
}

std::size_t LosslessInstance::line_of(std::size_t offset) const {
    auto it = std::upper_bound(line_starts_.begin(), line_starts_.end(), offset);
    std::size_t line = static_cast<std::size_t>(it - line_starts_.begin());
    return std::max<std::size_t>(1, std::min(line, std::max<std::size_t>(line_count_, 1)));
}

std::string_view LosslessInstance::line_text(std::size_t line) const {
    std::size_t begin = line_starts_.at(line - 1);
    std::size_t end = line < line_starts_.size() ? line_starts_[line] : source_.size();
    std::string_view text = std::string_view(source_).substr(begin, end - begin);
    if (!text.empty() && text.back() == '\n') text.remove_suffix(1);
    if (!text.empty() && text.back() == '\r') text.remove_suffix(1);
    return text;
}

std::string LosslessInstance::reassemble() const {
    std::string out;
    out.reserve(source_.size());
    for (const auto& tok : tokens_) {
        for (std::size_t i = tok.trivia_begin; i < tok.trivia_end; ++i) out += text_of(trivia_[i]);
        out += tok.text;
    }
    for (std::size_t i = trailing_begin_; i < trivia_.size(); ++i) out += text_of(trivia_[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Terminal matching

namespace {

std::size_t utf8_length(std::string_view text, std::size_t pos) {
    auto c = static_cast<unsigned char>(text[pos]);
    std::size_t n = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
    return std::min(n, text.size() - pos);
}

unsigned decode(std::string_view text, std::size_t pos, std::size_t len) {
    auto c = static_cast<unsigned char>(text[pos]);
    if (len == 1) return c;
    unsigned cp = c & (0x7F >> len);
    for (std::size_t i = 1; i < len; ++i) cp = (cp << 6) | (static_cast<unsigned char>(text[pos + i]) & 0x3F);
    return cp;
}

unsigned decode_bound(const std::string& s) { return decode(s, 0, utf8_length(s, 0)); }

void normalize(std::vector<std::size_t>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

class TerminalMatcher {
public:
    TerminalMatcher(const GrammarAst& g, std::string_view text) : g_(g), text_(text) {}

    std::vector<std::size_t> match(const BodyNode& node, std::size_t pos, int depth = 0) const {
        using K = BodyNode::Kind;
        std::vector<std::size_t> out;
        if (depth > 64) return out;
        switch (node.kind()) {
            case K::Keyword:
                if (text_.substr(pos, node.text().size()) == node.text()) out.push_back(pos + node.text().size());
                break;
            case K::CharRange:
                if (pos < text_.size()) {
                    std::size_t len = utf8_length(text_, pos);
                    unsigned cp = decode(text_, pos, len);
                    if (cp >= decode_bound(node.text()) && cp <= decode_bound(node.upper())) out.push_back(pos + len);
                }
                break;
            case K::Wildcard:
                if (pos < text_.size()) out.push_back(pos + utf8_length(text_, pos));
                break;
            case K::NegatedToken:
                if (pos < text_.size() && match(node.child(), pos, depth + 1).empty())
                    out.push_back(pos + utf8_length(text_, pos));
                break;
            case K::RuleCall:
                if (const RuleDef* r = g_.resolve(node.text())) out = match(r->body, pos, depth + 1);
                break;
            case K::Group: {
                std::vector<std::size_t> current{pos};
                for (const auto& child : node.children()) {
                    std::vector<std::size_t> next;
                    for (std::size_t p : current) {
                        auto ends = match(child, p, depth + 1);
                        next.insert(next.end(), ends.begin(), ends.end());
                    }
                    normalize(next);
                    current = std::move(next);
                    if (current.empty()) break;
                }
                out = std::move(current);
                break;
            }
            case K::Alternatives:
                for (const auto& child : node.children()) {
                    auto ends = match(child, pos, depth + 1);
                    out.insert(out.end(), ends.begin(), ends.end());
                }
                normalize(out);
                break;
            case K::Cardinality: {
                const Multiplicity m = node.multiplicity();
                if (m == Multiplicity::Optional) {
                    out = match(node.child(), pos, depth + 1);
                    out.push_back(pos);
                    normalize(out);
                    break;
                }
                // Closure over repeated matches; each position is expanded once.
                std::vector<std::size_t> frontier;
                std::vector<std::size_t> seen;
                if (m == Multiplicity::Star) {
                    frontier.push_back(pos);
                } else {
                    frontier = match(node.child(), pos, depth + 1);
                }
                while (!frontier.empty()) {
                    std::size_t p = frontier.back();
                    frontier.pop_back();
                    if (std::find(seen.begin(), seen.end(), p) != seen.end()) continue;
                    seen.push_back(p);
                    for (std::size_t e : match(node.child(), p, depth + 1))
                        if (e > p) frontier.push_back(e);
                }
                out = std::move(seen);
                normalize(out);
                break;
            }
            default:
                break;
        }
        return out;
    }

private:
    const GrammarAst& g_;
    std::string_view text_;
};

}  // namespace

// ---------------------------------------------------------------------------
// LexerTable

LexerTable::LexerTable(const GrammarAst& grammar, const std::set<std::string>& extra_keywords)
    : grammar_(&grammar), keywords_(grammar.keywords()), terminals_(grammar.lexer_terminals()) {
    keywords_.insert(extra_keywords.begin(), extra_keywords.end());
}

std::vector<std::size_t> LexerTable::match_terminal(const RuleDef& rule, std::string_view text,
                                                    std::size_t pos) const {
    return TerminalMatcher(*grammar_, text).match(rule.body, pos);
}

LexerTable::Match LexerTable::longest_match(std::string_view text, std::size_t pos) const {
    Match best;
    for (const auto& kw : keywords_) {
        if (kw.size() > best.length && text.substr(pos, kw.size()) == kw) {
            best.length = kw.size();
            best.keyword = true;
        }
    }
    for (const RuleDef* t : terminals_) {
        auto ends = match_terminal(*t, text, pos);
        if (ends.empty()) continue;
        std::size_t len = ends.back() - pos;
        if (len > best.length) {
            best.length = len;
            best.keyword = false;
            best.terminal = t->name;
        }
    }
    return best;
}

LexerTable::Match LexerTable::classify(std::string_view text) const {
    Match m = longest_match(text, 0);
    if (m.length != text.size()) return {};
    return m;
}

// ---------------------------------------------------------------------------

LosslessInstance lex_instance(std::string text, const GrammarAst& grammar,
                              const std::set<std::string>& extra_keywords, LexMode mode) {
    LexerTable table(grammar, extra_keywords);
    std::vector<Token> tokens;
    std::vector<Trivia> trivia;
    std::size_t pos = 0;
    std::size_t line = 1;
    std::size_t line_begin = 0;
    std::size_t pending_trivia = 0;

    auto advance_lines = [&](std::size_t from, std::size_t to) {
        for (std::size_t i = from; i < to; ++i) {
            if (text[i] == '\n') {
                ++line;
                line_begin = i + 1;
            }
        }
    };

    while (pos < text.size()) {
        LexerTable::Match m = table.longest_match(text, pos);
        if (m.length == 0) {
            if (mode == LexMode::Strict)
                throw LexError(line, pos - line_begin + 1, "no terminal matches '" + std::string(1, text[pos]) + "'");
            m.length = utf8_length(text, pos);
        }
        if (!m.keyword && is_hidden_terminal(m.terminal)) {
            Trivia::Kind kind = m.terminal == "WS"           ? Trivia::Kind::Whitespace
                                : m.terminal == "SL_COMMENT" ? Trivia::Kind::LineComment
                                                             : Trivia::Kind::BlockComment;
            trivia.push_back({kind, pos, m.length});
        } else {
            Token tok;
            tok.kind = m.keyword ? Token::Kind::Keyword : Token::Kind::Terminal;
            tok.text = text.substr(pos, m.length);
            tok.terminal = m.keyword ? std::string() : m.terminal;
            tok.offset = pos;
            tok.line = line;
            tok.col = pos - line_begin + 1;
            tok.trivia_begin = pending_trivia;
            tok.trivia_end = trivia.size();
            pending_trivia = trivia.size();
            tokens.push_back(std::move(tok));
        }
        advance_lines(pos, pos + m.length);
        pos += m.length;
    }
    return LosslessInstance(std::move(text), std::move(tokens), std::move(trivia), pending_trivia);
}

}  // namespace coevolve
