#pragma once

// Chart-based (Earley) recognition of instance token streams against a
// grammar's parser rules, with line-level error localization.

#include <cstddef>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "coevolve/grammar.hpp"
#include "coevolve/instance.hpp"

namespace coevolve {

/// One node of an accepting derivation. Helper structure introduced by
/// cardinalities and unordered groups is flattened away: a `*` element's
/// children are its iterations, in instance order.
struct DerivationNode {
    enum class Kind { Rule, Element, Token };
    Kind kind = Kind::Rule;
    const BodyNode* node = nullptr;  // rule body (Rule), element (Element), or leaf that matched (Token)
    std::string rule;                // rule the node belongs to (the called rule for Kind::Rule)
    std::size_t first_token = 0;     // token span [first_token, end_token); empty when first == end
    std::size_t end_token = 0;
    std::vector<DerivationNode> children;

    bool empty() const noexcept { return first_token == end_token; }
};

struct ConformanceError {
    /// How the recognizer got past the error.
    enum class Repair { Insertion, Substitution, Deletion, Skip, EndOfInput };

    std::size_t line = 0;
    std::size_t col = 0;
    std::string message;
    std::vector<std::string> expected;
    Repair repair = Repair::Skip;
    std::size_t token_begin = 0;  // tokens covered by the error span
    std::size_t token_end = 0;
    std::set<std::size_t> lines;
};

struct ConformanceReport {
    bool conforms = true;
    std::vector<ConformanceError> errors;
    std::set<std::size_t> error_lines;
    /// Lines whose tokens were all dropped while resynchronizing; a
    /// migration that deletes these lines is doing what the grammar requires.
    std::set<std::size_t> deletion_lines;
};

class Recognizer {
public:
    explicit Recognizer(const GrammarAst& grammar);
    ~Recognizer();
    Recognizer(Recognizer&&) noexcept;
    Recognizer& operator=(Recognizer&&) noexcept;

    /// Recognizes the token stream; on failure localizes every error region
    /// by resynchronizing after each one.
    ConformanceReport check(const LosslessInstance& instance) const;

    /// Plain acceptance, no recovery.
    bool accepts(const LosslessInstance& instance) const;

    /// Accepting derivation, or nullopt when the instance does not conform.
    std::optional<DerivationNode> derive(const LosslessInstance& instance) const;

    const GrammarAst& grammar() const noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

ConformanceReport check_conformance(const LosslessInstance& instance, const GrammarAst& grammar);

}  // namespace coevolve
