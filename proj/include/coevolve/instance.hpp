#pragma once

// Lossless lexing of DSL instance text.
//
// Every byte of the source belongs either to a token or to the trivia
// (whitespace and comments) preceding a token; trailing trivia is held
// separately. Concatenating them in order reproduces the source exactly.

#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "coevolve/grammar.hpp"

namespace coevolve {

struct Trivia {
    enum class Kind { Whitespace, LineComment, BlockComment };
    Kind kind;
    std::size_t offset;
    std::size_t length;

    bool is_comment() const noexcept { return kind != Kind::Whitespace; }
};

struct Token {
    enum class Kind { Keyword, Terminal };
    Kind kind;
    std::string text;
    std::string terminal;  // terminal rule name; empty for keywords and unlexable characters
    std::size_t offset;
    std::size_t line;  // 1-based
    std::size_t col;   // 1-based, in bytes
    std::size_t trivia_begin;  // leading trivia, index range into LosslessInstance::trivia()
    std::size_t trivia_end;

    std::size_t end() const noexcept { return offset + text.size(); }
};

class LosslessInstance {
public:
    LosslessInstance(std::string source, std::vector<Token> tokens, std::vector<Trivia> trivia,
                     std::size_t trailing_trivia_begin);

    const std::string& source() const noexcept { return source_; }
    const std::vector<Token>& tokens() const noexcept { return tokens_; }
    const std::vector<Trivia>& trivia() const noexcept { return trivia_; }

    /// Trivia after the last token, as an index range into trivia().
    std::size_t trailing_trivia_begin() const noexcept { return trailing_begin_; }

    std::string_view text_of(const Trivia& t) const { return std::string_view(source_).substr(t.offset, t.length); }

    /// 1-based line containing the byte at offset (offsets past the end map to the last line).
    std::size_t line_of(std::size_t offset) const;

    /// Number of lines, counting a final line without newline; 0 for empty text.
    std::size_t line_count() const noexcept { return line_count_; }

    /// Byte offset where a 1-based line starts.
    std::size_t line_start(std::size_t line) const { return line_starts_.at(line - 1); }

    /// Text of a 1-based line without its line terminator.
    std::string_view line_text(std::size_t line) const;

    /// Rebuilds the source from trivia and tokens.
    std::string reassemble() const;

private:
    std::string source_;
    std::vector<Token> tokens_;
    std::vector<Trivia> trivia_;
    std::size_t trailing_begin_;
    std::vector<std::size_t> line_starts_;
    std::size_t line_count_ = 0;
};

/// Token-level view of a grammar's lexical structure: keywords, terminal
/// rules in priority order, and which terminals are hidden.
class LexerTable {
public:
    explicit LexerTable(const GrammarAst& grammar, const std::set<std::string>& extra_keywords = {});

    struct Match {
        std::size_t length = 0;
        bool keyword = false;
        std::string terminal;  // set when !keyword
    };

    /// Longest match at pos; keywords win ties against terminals, earlier
    /// terminals win ties against later ones. length==0 when nothing matches.
    Match longest_match(std::string_view text, std::size_t pos) const;

    /// Classifies a whole token text as it would lex in isolation. Returns
    /// length==0 when the text is not exactly one token.
    Match classify(std::string_view text) const;

    bool is_keyword(std::string_view text) const { return keywords_.count(std::string(text)) != 0; }

private:
    std::vector<std::size_t> match_terminal(const RuleDef& rule, std::string_view text, std::size_t pos) const;

    const GrammarAst* grammar_;
    std::set<std::string> keywords_;
    std::vector<const RuleDef*> terminals_;
};

enum class LexMode {
    Strict,   // throw LexError on characters no terminal matches
    Lenient,  // turn each such character into a token of no terminal (matches nothing when parsing)
};

/// Lexes instance text using the grammar's keywords and terminals, plus
/// any extra keywords (the union with another grammar version).
LosslessInstance lex_instance(std::string text, const GrammarAst& grammar,
                              const std::set<std::string>& extra_keywords = {}, LexMode mode = LexMode::Strict);

}  // namespace coevolve
