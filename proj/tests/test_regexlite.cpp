#include "doctest.h"
#include "specforge/errors.hpp"
#include "specforge/regexlite.hpp"
#include "specforge/util.hpp"

using namespace specforge;
using rx::Regex;

TEST_CASE("literal and class matching") {
    CHECK(Regex::parse("LIST").full_match("LIST"));
    CHECK_FALSE(Regex::parse("LIST").full_match("LIS"));
    CHECK(Regex::parse("[0-9]{1,3}").full_match("8"));
    CHECK(Regex::parse("[0-9]{1,3}").full_match("383"));
    CHECK_FALSE(Regex::parse("[0-9]{1,3}").full_match("1234"));
    CHECK_FALSE(Regex::parse("[0-9]{1,3}").full_match(""));
    CHECK(Regex::parse("[A-Za-z0-9.@-]{1,40}").full_match("debug@localdomain.test"));
    CHECK(Regex::parse("[^x]+").full_match("abc"));
    CHECK_FALSE(Regex::parse("[^x]+").full_match("axc"));
    // Negated classes never match line terminators.
    CHECK_FALSE(Regex::parse("[^x]").full_match("\r"));
    CHECK(Regex::parse("a|bc|d").full_match("bc"));
    CHECK(Regex::parse("(ab)+").full_match("ababab"));
    CHECK_FALSE(Regex::parse("(ab)+").full_match("aba"));
    CHECK(Regex::parse("ab?c").full_match("ac"));
    CHECK(Regex::parse("x*").full_match(""));
    CHECK(Regex::parse("\\.").full_match("."));
    CHECK_FALSE(Regex::parse("\\.").full_match("x"));
    CHECK(Regex::parse(".").full_match("x"));
    CHECK_FALSE(Regex::parse(".").full_match("\n"));
    CHECK(Regex::parse("[0-9]{2,}").full_match("12345"));
    CHECK_FALSE(Regex::parse("[0-9]{2,}").full_match("1"));
}

TEST_CASE("match_ends reports end offsets longest first") {
    Regex r = Regex::parse("[0-9]+");
    auto ends = r.match_ends("383 bytes", 0);
    REQUIRE(ends.size() == 3);
    CHECK(ends[0] == 3);
    CHECK(ends[1] == 2);
    CHECK(ends[2] == 1);
    CHECK(r.match_ends("abc", 0).empty());

    // Empty-matching patterns report the current position.
    auto e2 = Regex::parse("x*").match_ends("yy", 1);
    REQUIRE(e2.size() == 1);
    CHECK(e2[0] == 1);
}

TEST_CASE("malformed patterns are rejected") {
    CHECK_THROWS_AS(Regex::parse("["), GrammarSyntaxError);
    CHECK_THROWS_AS(Regex::parse("(a"), GrammarSyntaxError);
    CHECK_THROWS_AS(Regex::parse("a)"), GrammarSyntaxError);
    CHECK_THROWS_AS(Regex::parse("*a"), GrammarSyntaxError);
    CHECK_THROWS_AS(Regex::parse("a{3,1}"), GrammarSyntaxError);
    CHECK_THROWS_AS(Regex::parse("a{"), GrammarSyntaxError);
    CHECK_THROWS_AS(Regex::parse("[z-a]"), GrammarSyntaxError);
    CHECK_THROWS_AS(Regex::parse("a\\"), GrammarSyntaxError);
}

TEST_CASE("sampled strings always match their own pattern") {
    const char* patterns[] = {
        "[0-9]{1,3}",
        "[A-Za-z0-9.@-]{1,40}",
        "(ab|cd)*x?",
        "[^ ]{1,5} [0-9]+",
        "A{2,4}(b|c)",
        "[0-9A-Za-z+]{1,70}",
        "\\+OK( [^\r\n]{1,20})?",
    };
    util::Rng rng(123);
    for (const char* p : patterns) {
        CAPTURE(p);
        Regex r = Regex::parse(p);
        for (int i = 0; i < 200; ++i) {
            std::string s = r.sample(rng);
            CAPTURE(s);
            CHECK(r.full_match(s));
        }
    }
}

TEST_CASE("sampling is deterministic under a fixed seed") {
    Regex r = Regex::parse("[a-z]{1,8}[0-9]*");
    util::Rng a(99);
    util::Rng b(99);
    for (int i = 0; i < 20; ++i) {
        CHECK(r.sample(a) == r.sample(b));
    }
}
