#include "doctest.h"
#include "specforge/errors.hpp"
#include "specforge/grammar.hpp"

using namespace specforge;
using grammar::IOGrammar;
using grammar::Party;
using grammar::Symbol;

namespace {

const char* kSessionText =
    "# anchor: 1939:3:0\n"
    "<start> ::= <Server:greeting> <auth>\n"
    "# anchor: 1939:3:0,1\n"
    "<greeting> ::= \"+OK ready\" <crlf>\n"
    "<auth> ::= <Client:user_cmd> <Server:ok_resp> | \"\"\n"
    "# anchor: 1939:4:0\n"
    "<user_cmd> ::= \"USER \" <mailbox> <crlf>\n"
    "where len(<mailbox>) >= 1 and len(<mailbox>) <= 40\n"
    "<ok_resp> ::= \"+OK\" <rest> <crlf>\n"
    "\n"
    "<terminals> ::= <crlf> | <mailbox> | <rest>\n"
    "<crlf> ::= \"\\r\\n\"\n"
    "<mailbox> ::= re(\"[A-Za-z0-9.@-]{1,40}\")\n"
    "<rest> ::= re(\"( [^\\r\\n]{1,40})?\")\n";

}  // namespace

TEST_CASE("parsing the session grammar populates every piece") {
    IOGrammar g = grammar::parse_grammar(kSessionText);

    REQUIRE(g.productions.size() == 5);
    CHECK(g.productions[0].name == "start");
    CHECK(g.productions[1].name == "greeting");

    const auto& start = g.productions[0];
    REQUIRE(start.alternatives.size() == 1);
    REQUIRE(start.alternatives[0].symbols.size() == 2);
    CHECK(start.alternatives[0].symbols[0].party == Party::server);
    CHECK(start.alternatives[0].symbols[0].text == "greeting");
    CHECK(start.alternatives[0].symbols[1].party == Party::none);

    // "" parses as an empty literal.
    const auto* auth = g.find("auth");
    REQUIRE(auth != nullptr);
    REQUIRE(auth->alternatives.size() == 2);
    REQUIRE(auth->alternatives[1].symbols.size() == 1);
    CHECK(auth->alternatives[1].symbols[0].kind == Symbol::Kind::literal);
    CHECK(auth->alternatives[1].symbols[0].text.empty());

    // Escapes resolve to bytes.
    REQUIRE(g.terminals.size() == 3);
    CHECK(g.terminals[0].first == "crlf");
    CHECK(g.terminals[0].second.text == "\r\n");
    CHECK(g.terminals[1].second.kind == grammar::TerminalDef::Kind::regex);
    CHECK(g.terminals[2].second.text == "( [^\r\n]{1,40})?");

    REQUIRE(g.constraints.size() == 1);
    CHECK(g.constraints[0].owner == "user_cmd");
    CHECK(constraint::to_string(g.constraints[0].expr) ==
          "len(<mailbox>) >= 1 and len(<mailbox>) <= 40");

    // Anchor comments land in provenance.
    REQUIRE(g.provenance.count("greeting") == 1);
    CHECK(g.provenance.at("greeting")[0].section_id == "3");
    CHECK(g.provenance.at("greeting")[0].paragraph_indices ==
          std::vector<int>{0, 1});

    CHECK(grammar::tagged_names(g, Party::client) ==
          std::vector<std::string>{"user_cmd"});
    CHECK(grammar::tagged_names(g, Party::server) ==
          std::vector<std::string>{"greeting", "ok_resp"});

    grammar::validate(g);  // must not throw
}

TEST_CASE("serialization is canonical and round-trips structurally") {
    IOGrammar g = grammar::parse_grammar(kSessionText);
    std::string s1 = grammar::serialize_grammar(g);
    IOGrammar g2 = grammar::parse_grammar(s1);
    CHECK(g.structurally_equal(g2));
    // A canonical rendering is a fixed point of parse+serialize.
    CHECK(grammar::serialize_grammar(g2) == s1);
    // Provenance survives via anchor comments.
    CHECK(g2.provenance.at("user_cmd")[0].rfc_id == "1939");
}

TEST_CASE("multi-line productions continue on indented lines") {
    IOGrammar g = grammar::parse_grammar(
        "<start> ::= \"a\"\n"
        "  | \"b\"\n"
        "  | \"c\"\n");
    REQUIRE(g.productions.size() == 1);
    CHECK(g.productions[0].alternatives.size() == 3);
}

TEST_CASE("comments are skipped but quoted hashes are bytes") {
    IOGrammar g = grammar::parse_grammar(
        "# leading comment\n"
        "<start> ::= \"a#b\" # trailing comment\n");
    REQUIRE(g.productions[0].alternatives.size() == 1);
    CHECK(g.productions[0].alternatives[0].symbols[0].text == "a#b");
}

TEST_CASE("duplicate alternatives are dropped, first occurrence wins") {
    IOGrammar g = grammar::parse_grammar("<start> ::= \"a\" | \"b\" | \"a\"\n");
    REQUIRE(g.productions[0].alternatives.size() == 2);
    CHECK(g.productions[0].alternatives[0].symbols[0].text == "a");
    CHECK(g.productions[0].alternatives[1].symbols[0].text == "b");
}

TEST_CASE("diagnosed grammar errors") {
    CHECK_THROWS_AS(grammar::parse_grammar(""), GrammarSyntaxError);
    CHECK_THROWS_AS(grammar::parse_grammar("<top> ::= \"x\"\n"), GrammarSyntaxError);
    CHECK_THROWS_AS(grammar::parse_grammar("<start> ::= <missing>\n"),
                    UndefinedNonterminal);
    CHECK_THROWS_AS(
        grammar::parse_grammar("<start> ::= \"a\"\n<start> ::= \"b\"\n"),
        DuplicateDefinition);
    CHECK_THROWS_AS(grammar::parse_grammar("<start> ::= <Proxy:x>\n<x> ::= \"a\"\n"),
                    UnknownPartyTag);
    CHECK_THROWS_AS(grammar::parse_grammar("<start> ::= | \"a\"\n"), GrammarSyntaxError);
    CHECK_THROWS_AS(grammar::parse_grammar("<start> ::= \"a\" |\n"), GrammarSyntaxError);
    CHECK_THROWS_AS(grammar::parse_grammar("<start> := \"a\"\n"), GrammarSyntaxError);
    CHECK_THROWS_AS(grammar::parse_grammar("<start> ::= \"unterminated\n"),
                    GrammarSyntaxError);
    CHECK_THROWS_AS(grammar::parse_grammar("<start> ::= re(\"[\")\n"),
                    GrammarSyntaxError);
    CHECK_THROWS_AS(grammar::parse_grammar("where int(<x>) == 1\n<start> ::= \"a\"\n"),
                    GrammarSyntaxError);
    // Lexeme listed in <terminals> but defined with structure.
    CHECK_THROWS_AS(grammar::parse_grammar("<start> ::= <t>\n"
                                           "<terminals> ::= <t>\n"
                                           "<t> ::= \"a\" | \"b\"\n"),
                    GrammarSyntaxError);
    CHECK_THROWS_AS(grammar::parse_grammar("<start> ::= \"a\"\n"
                                           "<terminals> ::= <ghost>\n"),
                    UndefinedNonterminal);
}

TEST_CASE("error locations point at the offending line") {
    try {
        grammar::parse_grammar("<start> ::= \"ok\"\n<bad> ::= @\n");
        FAIL("expected GrammarSyntaxError");
    } catch (const GrammarSyntaxError& e) {
        CHECK(e.line == 2);
        CHECK(std::string(e.what()).find("unexpected character") != std::string::npos);
    }
}

TEST_CASE("structural equality ignores provenance") {
    IOGrammar a = grammar::parse_grammar("<start> ::= \"x\"\n");
    IOGrammar b = grammar::parse_grammar("# anchor: 9:1:0\n<start> ::= \"x\"\n");
    CHECK(a.structurally_equal(b));
    IOGrammar c = grammar::parse_grammar("<start> ::= \"y\"\n");
    CHECK_FALSE(a.structurally_equal(c));
}
