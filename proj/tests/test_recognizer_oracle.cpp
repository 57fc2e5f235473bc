#include <gtest/gtest.h>

#include "coevolve/instance.hpp"
#include "coevolve/recognizer.hpp"
#include "random_grammar.hpp"

using namespace coevolve;
using namespace coevolve::test;

TEST(RecognizerOracle, AgreesWithFixpointMatcherOnRandomGrammars) {
    RandomGrammarGenerator gen(4242);
    int pairs = 0;
    int accepted = 0;
    for (int gi = 0; gi < 150; ++gi) {
        GrammarAst g = gen.grammar();
        Recognizer rec(g);
        for (int si = 0; si < 4; ++si) {
            std::vector<std::string> toks;
            if (si % 2 == 0) {
                auto s = gen.sample(g, 12);
                toks = s ? *s : gen.random_tokens(12);
            } else {
                toks = gen.random_tokens(12);
            }
            LosslessInstance inst = lex_instance(join_tokens(toks), g);
            bool expected = ReferenceMatcher(g, toks).accepts();
            bool actual = rec.accepts(inst);
            ASSERT_EQ(actual, expected) << serialize_grammar(g) << "\ninput: " << join_tokens(toks);
            EXPECT_EQ(rec.check(inst).conforms, expected);
            ++pairs;
            accepted += expected;
        }
    }
    EXPECT_GE(pairs, 200);
    EXPECT_GT(accepted, 50);
}
