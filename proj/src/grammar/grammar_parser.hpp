#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "coevolve/grammar.hpp"

namespace coevolve::detail {

struct ParsedRules {
    std::string name;
    std::string preamble;
    std::vector<RuleDef> rules;
};

/// Parses preamble and rules without building a GrammarAst, so that the
/// built-in terminal table can be bootstrapped from grammar text.
ParsedRules parse_rule_list(std::string_view text);

}  // namespace coevolve::detail
