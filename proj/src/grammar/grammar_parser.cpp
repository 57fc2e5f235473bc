#include "grammar_parser.hpp"

#include <array>
#include <cctype>

namespace coevolve::detail {
namespace {

struct GTok {
    enum class Kind { Id, String, Punct, End };
    Kind kind = Kind::End;
    std::string text;  // identifier (without '^'), decoded string, or punctuation
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t line = 1;
    std::size_t col = 1;
};

class GrammarLexer {
public:
    explicit GrammarLexer(std::string_view src) : src_(src) {}

    std::vector<GTok> run() {
        std::vector<GTok> out;
        for (;;) {
            skip_trivia();
            GTok t;
            t.begin = pos_;
            t.line = line_;
            t.col = col_;
            if (pos_ >= src_.size()) {
                t.end = pos_;
                out.push_back(t);
                return out;
            }
            char c = src_[pos_];
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '^') {
                t.kind = GTok::Kind::Id;
                if (c == '^') advance();
                if (pos_ >= src_.size() || !(std::isalpha(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                    throw SyntaxError(line_, col_, "identifier", "dangling '^'");
                while (pos_ < src_.size() &&
                       (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
                    t.text += src_[pos_];
                    advance();
                }
            } else if (c == '\'' || c == '"') {
                t.kind = GTok::Kind::String;
                t.text = read_string(c);
                if (t.text.empty()) throw SyntaxError(t.line, t.col, "keyword text", "empty keyword");
            } else {
                t.kind = GTok::Kind::Punct;
                static constexpr std::array<std::string_view, 6> two = {"+=", "?=", "=>", "->", "..", "::"};
                bool matched = false;
                for (auto p : two) {
                    if (src_.substr(pos_, 2) == p) {
                        t.text = p;
                        advance();
                        advance();
                        matched = true;
                        break;
                    }
                }
                if (!matched) {
                    static constexpr std::string_view singles = ":;|&()?*+=[],.!{}@<>";
                    if (singles.find(c) == std::string_view::npos)
                        throw SyntaxError(line_, col_, "", std::string("unexpected character '") + c + "'");
                    t.text = std::string(1, c);
                    advance();
                }
            }
            t.end = pos_;
            out.push_back(std::move(t));
        }
    }

private:
    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    void skip_trivia() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                advance();
            } else if (src_.substr(pos_, 2) == "//") {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else if (src_.substr(pos_, 2) == "/*") {
                std::size_t l = line_, col = col_;
                advance();
                advance();
                while (pos_ < src_.size() && src_.substr(pos_, 2) != "*/") advance();
                if (pos_ >= src_.size()) throw SyntaxError(l, col, "'*/'", "unterminated comment");
                advance();
                advance();
            } else {
                return;
            }
        }
    }

    static void append_utf8(std::string& out, unsigned cp) {
        if (cp < 0x80) {
            out += static_cast<char>(cp);
        } else if (cp < 0x800) {
            out += static_cast<char>(0xC0 | (cp >> 6));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        } else {
            out += static_cast<char>(0xE0 | (cp >> 12));
            out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        }
    }

    std::string read_string(char quote) {
        std::size_t l = line_, col = col_;
        advance();
        std::string out;
        for (;;) {
            if (pos_ >= src_.size() || src_[pos_] == '\n')
                throw SyntaxError(l, col, std::string(1, quote), "unterminated keyword");
            char c = src_[pos_];
            if (c == quote) {
                advance();
                return out;
            }
            if (c == '\\') {
                advance();
                if (pos_ >= src_.size()) throw SyntaxError(l, col, std::string(1, quote), "unterminated keyword");
                char e = src_[pos_];
                advance();
                switch (e) {
                    case 'n': out += '\n'; break;
                    case 'r': out += '\r'; break;
                    case 't': out += '\t'; break;
                    case 'b': out += '\b'; break;
                    case 'f': out += '\f'; break;
                    case 'u': {
                        if (pos_ + 4 > src_.size()) throw SyntaxError(line_, col_, "4 hex digits", "bad unicode escape");
                        unsigned cp = 0;
                        for (int i = 0; i < 4; ++i) {
                            char h = src_[pos_];
                            if (!std::isxdigit(static_cast<unsigned char>(h)))
                                throw SyntaxError(line_, col_, "hex digit", "bad unicode escape");
                            cp = cp * 16 + static_cast<unsigned>(std::isdigit(static_cast<unsigned char>(h))
                                                                     ? h - '0'
                                                                     : std::tolower(h) - 'a' + 10);
                            advance();
                        }
                        append_utf8(out, cp);
                        break;
                    }
                    default: out += e;
                }
                continue;
            }
            out += c;
            advance();
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t col_ = 1;
};

Multiplicity merge(Multiplicity outer, Multiplicity inner) {
    if (outer == inner) return outer;
    return Multiplicity::Star;  // any mix of ?, *, + accepts zero or more
}

class GrammarParser {
public:
    GrammarParser(std::string_view src, std::vector<GTok> toks) : src_(src), toks_(std::move(toks)) {}

    ParsedRules run() {
        ParsedRules out;
        parse_preamble(out);
        while (!at_end()) out.rules.push_back(parse_rule());
        return out;
    }

private:
    const GTok& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
    bool at_end() const { return peek().kind == GTok::Kind::End; }
    bool is_punct(std::string_view p, std::size_t k = 0) const {
        return peek(k).kind == GTok::Kind::Punct && peek(k).text == p;
    }
    bool is_id(std::string_view word, std::size_t k = 0) const {
        return peek(k).kind == GTok::Kind::Id && peek(k).text == word;
    }
    const GTok& take() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

    [[noreturn]] void fail(std::string expected) const {
        const GTok& t = peek();
        std::string found = t.kind == GTok::Kind::End ? "end of input" : "'" + t.text + "'";
        throw SyntaxError(t.line, t.col, std::move(expected), "unexpected " + found);
    }

    void expect_punct(std::string_view p) {
        if (!is_punct(p)) fail("'" + std::string(p) + "'");
        take();
    }

    std::string expect_id() {
        if (peek().kind != GTok::Kind::Id) fail("identifier");
        return take().text;
    }

    std::string qualified_name() {
        std::string name = expect_id();
        while (is_punct(".") && peek(1).kind == GTok::Kind::Id) {
            take();
            name += "." + take().text;
        }
        return name;
    }

    void parse_preamble(ParsedRules& out) {
        std::size_t end = 0;
        for (;;) {
            if (is_id("grammar") && peek(1).kind == GTok::Kind::Id && !is_punct(":", 1)) {
                take();
                out.name = qualified_name();
                if (is_id("with")) {
                    take();
                    qualified_name();
                    while (is_punct(",")) {
                        take();
                        qualified_name();
                    }
                }
                if (is_id("hidden") && is_punct("(", 1)) {
                    take();
                    take();
                    while (!is_punct(")")) {
                        if (at_end()) fail("')'");
                        take();
                    }
                    take();
                }
                end = toks_[pos_ - 1].end;
            } else if (is_id("generate") && peek(1).kind == GTok::Kind::Id && peek(2).kind == GTok::Kind::String) {
                take();
                take();
                take();
                if (is_id("as")) {
                    take();
                    expect_id();
                }
                end = toks_[pos_ - 1].end;
            } else if (is_id("import") && peek(1).kind == GTok::Kind::String) {
                take();
                take();
                if (is_id("as")) {
                    take();
                    expect_id();
                }
                end = toks_[pos_ - 1].end;
            } else {
                break;
            }
        }
        out.preamble = std::string(src_.substr(0, end));
    }

    RuleDef parse_rule() {
        const GTok& start = peek();
        if (is_punct("@")) throw UnsupportedConstruct(start.line, "annotation");
        RuleDef rule;
        rule.line = start.line;
        if (is_id("terminal") && peek(1).kind == GTok::Kind::Id) {
            take();
            if (is_id("fragment") && peek(1).kind == GTok::Kind::Id)
                throw UnsupportedConstruct(start.line, "terminal fragment");
            rule.kind = RuleKind::Terminal;
        } else if (is_id("fragment") && peek(1).kind == GTok::Kind::Id) {
            throw UnsupportedConstruct(start.line, "fragment rule");
        } else if (is_id("enum") && peek(1).kind == GTok::Kind::Id) {
            throw UnsupportedConstruct(start.line, "enum rule");
        }
        rule.name = expect_id();
        if (is_punct("<")) throw UnsupportedConstruct(peek().line, "rule parameters");
        if (is_id("returns")) {
            take();
            std::string type = expect_id();
            if (is_punct("::")) {
                take();
                type += "::" + expect_id();
            }
            rule.returns_type = type;
        }
        if (is_id("hidden") && is_punct("(", 1)) throw UnsupportedConstruct(peek().line, "hidden clause");
        expect_punct(":");
        terminal_ = rule.kind == RuleKind::Terminal;
        rule.body = parse_alternatives();
        expect_punct(";");
        return rule;
    }

    BodyNode parse_alternatives() {
        std::size_t line = peek().line;
        std::vector<BodyNode> alts;
        alts.push_back(parse_unordered());
        while (is_punct("|")) {
            take();
            alts.push_back(parse_unordered());
        }
        return BodyNode::alternatives(std::move(alts)).at_line(line);
    }

    BodyNode parse_unordered() {
        std::size_t line = peek().line;
        std::vector<BodyNode> parts;
        parts.push_back(parse_group());
        while (is_punct("&")) {
            if (terminal_) fail("terminal element");
            take();
            parts.push_back(parse_group());
        }
        return BodyNode::unordered_group(std::move(parts)).at_line(line);
    }

    bool at_group_end() const {
        return at_end() || is_punct("|") || is_punct("&") || is_punct(")") || is_punct(";") || is_punct("]");
    }

    BodyNode parse_group() {
        std::size_t line = peek().line;
        std::vector<BodyNode> items;
        while (!at_group_end()) items.push_back(parse_element());
        if (items.empty()) fail("rule element");
        return BodyNode::group(std::move(items)).at_line(line);
    }

    BodyNode with_cardinality(BodyNode node) {
        if (!(is_punct("?") || is_punct("*") || is_punct("+"))) return node;
        std::size_t line = peek().line;
        const std::string sym = take().text;
        Multiplicity m = sym == "?" ? Multiplicity::Optional : sym == "*" ? Multiplicity::Star : Multiplicity::Plus;
        if (is_punct("?") || is_punct("*") || is_punct("+")) fail("rule element");
        if (node.kind() == BodyNode::Kind::Cardinality) {
            BodyNode inner = node.child();
            return BodyNode::cardinality(std::move(inner), merge(m, node.multiplicity())).at_line(line);
        }
        return BodyNode::cardinality(std::move(node), m).at_line(line);
    }

    BodyNode parse_element() { return with_cardinality(parse_atom()); }

    BodyNode parse_cross_reference() {
        std::size_t line = peek().line;
        expect_punct("[");
        std::string target = expect_id();
        if (is_punct("::")) {
            take();
            target += "::" + expect_id();
        }
        std::optional<std::string> syntax;
        if (is_punct("|")) {
            take();
            if (peek().kind == GTok::Kind::String) throw UnsupportedConstruct(peek().line, "keyword cross-reference syntax");
            syntax = expect_id();
        }
        expect_punct("]");
        return BodyNode::cross_reference(std::move(target), std::move(syntax)).at_line(line);
    }

    BodyNode parse_atom() {
        const GTok& t = peek();
        const std::size_t line = t.line;
        if (t.kind == GTok::Kind::Punct) {
            if (t.text == "{") throw UnsupportedConstruct(line, "action");
            if (t.text == "=>") throw UnsupportedConstruct(line, "syntactic predicate");
            if (t.text == "->") throw UnsupportedConstruct(line, terminal_ ? "until token" : "syntactic predicate");
            if (t.text == "(") {
                take();
                BodyNode inner = parse_alternatives();
                expect_punct(")");
                return inner;
            }
            if (t.text == "[") {
                if (terminal_) fail("terminal element");
                return parse_cross_reference();
            }
            if (t.text == ".") {
                if (!terminal_) fail("rule element");
                take();
                return BodyNode::wildcard().at_line(line);
            }
            if (t.text == "!") {
                if (!terminal_) fail("rule element");
                take();
                return BodyNode::negated(parse_atom()).at_line(line);
            }
            fail("rule element");
        }
        if (t.kind == GTok::Kind::String) {
            std::string text = take().text;
            if (is_punct("..")) {
                if (!terminal_) fail("rule element");
                take();
                if (peek().kind != GTok::Kind::String) fail("keyword");
                return BodyNode::char_range(std::move(text), take().text).at_line(line);
            }
            return BodyNode::keyword(std::move(text)).at_line(line);
        }
        if (t.kind == GTok::Kind::Id) {
            if (is_punct("=", 1) || is_punct("+=", 1) || is_punct("?=", 1)) {
                if (terminal_) fail("terminal element");
                std::string feature = take().text;
                const std::string op_text = take().text;
                AssignOp op = op_text == "=" ? AssignOp::Set : op_text == "+=" ? AssignOp::Add : AssignOp::Bool;
                BodyNode value = parse_assignable();
                return BodyNode::assignment(std::move(feature), op, std::move(value)).at_line(line);
            }
            if (t.text == "EOF") throw UnsupportedConstruct(line, "EOF token");
            std::string name = take().text;
            if (is_punct("::")) throw UnsupportedConstruct(line, "qualified rule call");
            if (is_punct("<")) throw UnsupportedConstruct(line, "rule call arguments");
            return BodyNode::rule_call(std::move(name)).at_line(line);
        }
        fail("rule element");
    }

    BodyNode parse_assignable() {
        const GTok& t = peek();
        if (t.kind == GTok::Kind::Punct && t.text == "[") return parse_cross_reference();
        if (t.kind == GTok::Kind::Punct && t.text == "(") {
            take();
            BodyNode inner = parse_alternatives();
            expect_punct(")");
            return inner;
        }
        if (t.kind == GTok::Kind::String) {
            std::size_t line = t.line;
            return BodyNode::keyword(take().text).at_line(line);
        }
        if (t.kind == GTok::Kind::Id) {
            std::size_t line = t.line;
            std::string name = take().text;
            if (is_punct("::")) throw UnsupportedConstruct(line, "qualified rule call");
            return BodyNode::rule_call(std::move(name)).at_line(line);
        }
        if (t.kind == GTok::Kind::Punct && (t.text == "=>" || t.text == "->"))
            throw UnsupportedConstruct(t.line, "syntactic predicate");
        fail("assignable element");
    }

    std::string_view src_;
    std::vector<GTok> toks_;
    std::size_t pos_ = 0;
    bool terminal_ = false;
};

}  // namespace

ParsedRules parse_rule_list(std::string_view text) {
    GrammarLexer lexer(text);
    GrammarParser parser(text, lexer.run());
    try {
        return parser.run();
    } catch (const GrammarError& e) {
        // Node constructors raise GrammarError for malformed shapes; from text
        // these are syntax errors.
        throw SyntaxError(0, 0, "", e.what());
    }
}

}  // namespace coevolve::detail
