#pragma once

// Deterministic in-place migration of instances for a fixed set of
// grammar change kinds. Everything outside the edited tokens is kept
// byte for byte, comments and layout included.

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "coevolve/error.hpp"
#include "coevolve/grammar.hpp"
#include "coevolve/grammar_diff.hpp"
#include "coevolve/instance.hpp"

namespace coevolve {

struct Edit {
    enum class Kind { ReplaceToken, DeleteLineRange, InsertTextAfterToken, DeleteToken };
    Kind kind = Kind::ReplaceToken;
    std::size_t token = 0;       // token index (all kinds but DeleteLineRange)
    std::size_t first_line = 0;  // DeleteLineRange, inclusive
    std::size_t last_line = 0;
    std::string payload;  // replacement or inserted text

    friend bool operator==(const Edit&, const Edit&) = default;
};

struct EditScript {
    std::vector<Edit> edits;  // ordered by location, non-overlapping
    std::set<std::size_t> touched_lines;
};

/// A breaking change the rule engine does not handle for this instance.
class UnsupportedChange : public Error {
public:
    explicit UnsupportedChange(GrammarChange change);
    const GrammarChange& change() const noexcept { return change_; }

private:
    GrammarChange change_;
};

/// Two edits of a script cover the same bytes.
class OverlapError : public Error {
public:
    using Error::Error;
};

/// Text placed around an inserted terminator or separator. `after` is only
/// used when the following token touches the insertion point, so no
/// whitespace is doubled and no line gains trailing blanks.
struct InsertionStyle {
    std::string before;
    std::string after;
};

struct RulesConfig {
    InsertionStyle terminator{"", ""};
    InsertionStyle separator{"", " "};
    std::map<std::string, InsertionStyle> terminator_by_rule;  // keyed by rule name in the new grammar
    std::map<std::string, InsertionStyle> separator_by_rule;
};

/// Plans edits for the breaking changes of `delta`: keyword renames, element
/// deletions, appended terminators and introduced separators. Changes whose
/// grammar construct never occurs in the instance need no edit. Throws
/// UnsupportedChange for any other breaking change that occurs, and Error
/// when the instance does not conform to the old grammar.
EditScript plan_edits(const LosslessInstance& instance, const GrammarDelta& delta, const GrammarAst& old_grammar,
                      const GrammarAst& new_grammar, const RulesConfig& config = {});

/// Applies a script; throws OverlapError when edits overlap.
std::string apply_edits(const LosslessInstance& instance, const EditScript& script);

/// Lexes, diffs, plans and applies in one step.
std::string migrate_with_rules(const std::string& instance_text, const GrammarAst& old_grammar,
                               const GrammarAst& new_grammar, const RulesConfig& config = {},
                               EditScript* script_out = nullptr);

std::string edit_script_to_json(const EditScript& script, const LosslessInstance& instance);

std::string_view to_string(Edit::Kind kind);

}  // namespace coevolve
