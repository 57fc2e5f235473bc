#pragma once

// Human-oriented information in an instance: comments and layout.

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "coevolve/grammar.hpp"
#include "coevolve/instance.hpp"

namespace coevolve {

struct LineSignature {
    std::string indentation;            // leading whitespace; the whole line when blank
    std::vector<std::string> comments;  // comment text on this line, one fragment per comment
    bool blank = false;                 // whitespace only
    std::size_t content_chars = 0;      // non-whitespace bytes
    bool inside_comment = false;        // the line begins within a block comment opened earlier
};

struct HumanInfoProfile {
    std::set<std::size_t> comment_lines;
    std::set<std::size_t> format_lines;
    /// Format lines holding what the grammar's structure would spread over
    /// several lines (two or more contained objects on one line).
    std::set<std::size_t> compressed_lines;
    std::map<std::size_t, LineSignature> per_line_signature;
    /// Most common space-only indentation step; empty when no line is indented with spaces.
    std::string indent_unit;
    std::size_t comment_regions = 0;
};

/// Comment lines are lines intersecting comment trivia. A line carries
/// format information when it is blank, contains a tab, is indented by
/// something other than a whole number of indent units, or is compressed.
/// Compressed lines are found from the derivation under `grammar`; pass
/// nullptr (or a grammar the instance does not conform to) to skip them.
HumanInfoProfile extract_human_info(const LosslessInstance& instance, const GrammarAst* grammar = nullptr);

/// Signatures of every line of arbitrary text (no lexing needed).
std::map<std::size_t, LineSignature> line_signatures(const LosslessInstance& instance);

}  // namespace coevolve
