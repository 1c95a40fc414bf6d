// Skeleton folding, model-backed grammar synthesis, normalization, and the
// patch gate.
#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "doctest.h"
#include "specforge/derivation.hpp"
#include "specforge/errors.hpp"
#include "specforge/grammar.hpp"
#include "specforge/provider.hpp"
#include "specforge/synth.hpp"
#include "specforge/util.hpp"

using namespace specforge;
using grammar::IOGrammar;

namespace {

graph::Mtp make_mtp(std::vector<std::array<std::string, 3>> triples,
                    const std::string& target) {
    graph::Mtp m;
    m.target = target;
    m.initial_state = triples.front()[0];
    m.postcondition = target;
    m.triples = std::move(triples);
    return m;
}

std::vector<graph::Mtp> pop3_mtps() {
    return {
        make_mtp({{"AUTHORIZATION", "USER", "AUTHORIZATION"},
                  {"AUTHORIZATION", "PASS", "TRANSACTION"},
                  {"TRANSACTION", "STAT", "TRANSACTION"}},
                 "STAT"),
        make_mtp({{"AUTHORIZATION", "USER", "AUTHORIZATION"},
                  {"AUTHORIZATION", "PASS", "TRANSACTION"},
                  {"TRANSACTION", "LIST", "TRANSACTION"}},
                 "LIST"),
        make_mtp({{"AUTHORIZATION", "USER", "AUTHORIZATION"},
                  {"AUTHORIZATION", "PASS", "TRANSACTION"},
                  {"TRANSACTION", "DELE", "TRANSACTION"}},
                 "DELE"),
        make_mtp({{"AUTHORIZATION", "USER", "AUTHORIZATION"},
                  {"AUTHORIZATION", "PASS", "TRANSACTION"},
                  {"TRANSACTION", "QUIT", "UPDATE"}},
                 "QUIT"),
    };
}

// Small but complete session grammar in the POP3 shape; used as the
// provider's reply in synthesis tests and as the patch-gate baseline.
const char* kSessionText =
    "<start> ::= <Server:greeting> <auth> <txn> <Client:c_quit> <Server:s_quit>\n"
    "# anchor: 1939:3:0\n"
    "<greeting> ::= \"+OK POP3 server ready\" <crlf>\n"
    "<auth> ::= <Client:c_user> <Server:s_user> <Client:c_pass> <Server:s_pass>\n"
    "# anchor: 1939:4:0\n"
    "<c_user> ::= \"USER\" <sp> <mailbox> <crlf>\n"
    "<s_user> ::= <ok> | <err>\n"
    "<c_pass> ::= \"PASS\" <sp> <secret> <crlf>\n"
    "<s_pass> ::= <ok> | <err>\n"
    "<txn> ::= <exchange> <txn> | \"\"\n"
    "<exchange> ::= <Client:c_stat> <Server:s_stat> | <Client:c_list> <Server:s_list>"
    " | <Client:c_dele> <Server:s_dele>\n"
    "<c_stat> ::= \"STAT\" <crlf>\n"
    "<s_stat> ::= \"+OK \" <number> \" \" <number> <crlf>\n"
    "<c_list> ::= \"LIST\" <crlf>\n"
    "<s_list> ::= \"+OK \" <number> \" messages\" <crlf>\n"
    "<c_dele> ::= \"DELE\" <sp> <msg_number> <crlf>\n"
    "where int(<msg_number>) >= 1 and int(<msg_number>) <= 8\n"
    "<s_dele> ::= <ok>\n"
    "<c_quit> ::= \"QUIT\" <crlf>\n"
    "<s_quit> ::= \"+OK bye\" <crlf>\n"
    "<ok> ::= \"+OK\" <trail> <crlf>\n"
    "<err> ::= \"-ERR\" <trail> <crlf>\n"
    "\n"
    "<terminals> ::= <crlf> | <sp> | <mailbox> | <secret> | <number> | <msg_number> | <trail>\n"
    "<crlf> ::= \"\\r\\n\"\n"
    "<sp> ::= \" \"\n"
    "<mailbox> ::= re(\"[A-Za-z0-9.@-]{1,20}\")\n"
    "<secret> ::= re(\"[A-Za-z0-9]{1,20}\")\n"
    "<number> ::= re(\"[0-9]{1,4}\")\n"
    "<msg_number> ::= re(\"[1-9]\")\n"
    "<trail> ::= re(\"( [ -~]{1,40})?\")\n";

std::vector<std::vector<std::string>> protected_paths() {
    return {{"USER", "PASS", "QUIT"},
            {"USER", "PASS", "STAT", "QUIT"},
            {"USER", "PASS", "LIST", "QUIT"},
            {"USER", "PASS", "DELE", "QUIT"}};
}

extract::Context ctx_for(provider::LlmProvider& llm) {
    return {llm, SPECFORGE_SOURCE_DIR "/prompts", "test-model"};
}

std::vector<ingest::SectionRecord> one_section() {
    ingest::SectionRecord rec;
    rec.rfc_id = "1939";
    rec.section_id = "5";
    rec.title = "The TRANSACTION State";
    rec.paragraphs = {{0, "STAT, LIST and DELE operate on the maildrop."}};
    return {rec};
}

}  // namespace

TEST_CASE("a single path transcribes to exchanges in order") {
    auto sk = synth::build_skeleton(
        {make_mtp({{"A", "USER", "A"}, {"A", "PASS", "T"}, {"T", "QUIT", "U"}}, "QUIT")});
    REQUIRE(sk.exchanges.size() == 3);
    CHECK(sk.exchanges[0].command == "USER");
    CHECK(sk.exchanges[1].command == "PASS");
    CHECK(sk.exchanges[2].command == "QUIT");
    CHECK(sk.exchanges[0].client_nt == "c_user");
    CHECK(sk.exchanges[0].server_nt == "s_user");
    CHECK(sk.exchanges[2].next_state == "U");
}

TEST_CASE("shared prefixes appear once, matching a trie of the paths") {
    auto mtps = std::vector<graph::Mtp>{
        make_mtp({{"A", "USER", "A"}, {"A", "PASS", "T"}, {"T", "STAT", "T"}}, "STAT"),
        make_mtp({{"A", "USER", "A"}, {"A", "PASS", "T"}, {"T", "LIST", "T"}}, "LIST")};
    auto sk = synth::build_skeleton(mtps);

    // Independent oracle: insert each command path into a trie and read the
    // edges back in insertion order.
    struct Trie {
        std::vector<std::array<std::string, 3>> edges;
        void insert(const std::vector<std::array<std::string, 3>>& path) {
            for (const auto& t : path) {
                if (std::find(edges.begin(), edges.end(), t) == edges.end()) {
                    edges.push_back(t);
                }
            }
        }
    } trie;
    for (const auto& m : mtps) trie.insert(m.triples);

    REQUIRE(sk.exchanges.size() == trie.edges.size());
    for (size_t i = 0; i < trie.edges.size(); ++i) {
        CHECK(sk.exchanges[i].state == trie.edges[i][0]);
        CHECK(sk.exchanges[i].command == trie.edges[i][1]);
        CHECK(sk.exchanges[i].next_state == trie.edges[i][2]);
    }
    CHECK(sk.exchanges.size() == 4);  // USER, PASS shared; STAT, LIST tails
}

TEST_CASE("the full path set covers the expected command vocabulary") {
    auto sk = synth::build_skeleton(pop3_mtps());
    std::vector<std::string> commands;
    for (const auto& ex : sk.exchanges) commands.push_back(ex.command);
    for (const char* want : {"USER", "PASS", "STAT", "LIST", "DELE", "QUIT"}) {
        CHECK(std::find(commands.begin(), commands.end(), want) != commands.end());
    }
    CHECK(sk.exchanges.size() == 6);
}

TEST_CASE("skeleton rejects inconsistent destinations and empty input") {
    CHECK_THROWS_AS(synth::build_skeleton({}), EmptyInput);
    CHECK_THROWS_AS(
        synth::build_skeleton(
            {make_mtp({{"A", "GO", "B"}}, "GO"), make_mtp({{"A", "GO", "C"}}, "GO")}),
        InconsistentMtps);
}

TEST_CASE("name plan stays unique when a command repeats across states") {
    auto sk = synth::build_skeleton(
        {make_mtp({{"A", "GO", "B"}, {"B", "GO", "C"}}, "GO")});
    REQUIRE(sk.exchanges.size() == 2);
    CHECK(sk.exchanges[0].client_nt == "c_go");
    CHECK(sk.exchanges[1].client_nt == "c_go_2");
    CHECK(sk.exchanges[1].server_nt == "s_go_2");
}

TEST_CASE("synthesis payload carries the outline and the excerpts") {
    auto sk = synth::build_skeleton(pop3_mtps());
    auto payload = synth::synthesis_payload(sk, one_section());
    CHECK(payload.find("\"client_nt\": \"c_user\"") != std::string::npos);
    CHECK(payload.find("\"next_state\": \"UPDATE\"") != std::string::npos);
    CHECK(payload.find("The TRANSACTION State") != std::string::npos);
    CHECK(payload.find("maildrop") != std::string::npos);
}

TEST_CASE("synthesize returns a validated grammar that realizes every path") {
    double seen_temp = -1;
    provider::FunctionProvider llm(
        [&](const provider::LlmRequest& r) {
            seen_temp = r.temperature;
            provider::LlmResponse resp;
            resp.text = kSessionText;
            return resp;
        },
        "stub");
    auto ctx = ctx_for(llm);
    auto g = synth::synthesize(ctx, synth::build_skeleton(pop3_mtps()), one_section());
    CHECK(seen_temp == 0.1);
    CHECK(llm.calls() == 1);
    CHECK(g.find("start") != nullptr);
    for (const auto& mtp : pop3_mtps()) {
        CHECK(synth::check_mtp_generatable(g, mtp));
    }
    // Anchor comments in the reply became provenance.
    REQUIRE(g.provenance.count("c_user") == 1);
    CHECK(g.provenance.at("c_user")[0].section_id == "4");
}

TEST_CASE("synthesize demands at least one retrieved section") {
    provider::FunctionProvider llm(
        [](const provider::LlmRequest&) { return provider::LlmResponse{}; }, "stub");
    auto ctx = ctx_for(llm);
    CHECK_THROWS_AS(synth::synthesize(ctx, synth::build_skeleton(pop3_mtps()), {}),
                    EmptyInput);
    CHECK(llm.calls() == 0);
}

TEST_CASE("commentary around the grammar is rejected, then the retry lands") {
    std::vector<int> attempts;
    provider::FunctionProvider llm(
        [&](const provider::LlmRequest& r) {
            attempts.push_back(r.attempt);
            provider::LlmResponse resp;
            resp.text = attempts.size() == 1
                            ? std::string("Here is the grammar you asked for:\n\n") +
                                  kSessionText
                            : std::string(kSessionText);
            return resp;
        },
        "stub");
    auto ctx = ctx_for(llm);
    auto g = synth::synthesize(ctx, synth::build_skeleton(pop3_mtps()), one_section());
    CHECK(llm.calls() == 2);
    CHECK(attempts == std::vector<int>{0, 1});
    CHECK(g.find("c_quit") != nullptr);
}

TEST_CASE("a reply that never parses surfaces with the provider output attached") {
    provider::FunctionProvider llm(
        [](const provider::LlmRequest&) {
            provider::LlmResponse resp;
            resp.text = "I would rather chat about the weather.";
            return resp;
        },
        "stub");
    auto ctx = ctx_for(llm);
    try {
        synth::synthesize(ctx, synth::build_skeleton(pop3_mtps()), one_section());
        FAIL("expected GrammarSyntaxError");
    } catch (const GrammarSyntaxError& e) {
        std::string msg = e.what();
        CHECK(msg.find("provider output") != std::string::npos);
        CHECK(msg.find("rather chat about the weather") != std::string::npos);
    }
    CHECK(llm.calls() == 2);
}

TEST_CASE("a missing terminals block is completed when the names are well-known") {
    provider::FunctionProvider llm(
        [](const provider::LlmRequest&) {
            provider::LlmResponse resp;
            resp.text =
                "<start> ::= <Client:c_noop> <Server:s_noop>\n"
                "<c_noop> ::= \"NOOP\" <crlf>\n"
                "<s_noop> ::= \"+OK \" <number> <crlf>\n";
            return resp;
        },
        "stub");
    auto ctx = ctx_for(llm);
    auto g = synth::synthesize(
        ctx, synth::build_skeleton({make_mtp({{"T", "NOOP", "T"}}, "NOOP")}),
        one_section());
    REQUIRE(g.find_terminal("crlf") != nullptr);
    CHECK(g.find_terminal("crlf")->text == "\r\n");
    REQUIRE(g.find_terminal("number") != nullptr);
    CHECK(g.find_terminal("number")->kind == grammar::TerminalDef::Kind::regex);
}

TEST_CASE("an unknown undefined name is a schema violation after the retry") {
    provider::FunctionProvider llm(
        [](const provider::LlmRequest&) {
            provider::LlmResponse resp;
            resp.text =
                "<start> ::= <Client:c_x> <Server:s_x>\n"
                "<c_x> ::= \"X\" <mystery_blob> <crlf>\n"
                "<s_x> ::= \"+OK\" <crlf>\n";
            return resp;
        },
        "stub");
    auto ctx = ctx_for(llm);
    CHECK_THROWS_AS(
        synth::synthesize(ctx, synth::build_skeleton({make_mtp({{"T", "X", "T"}}, "X")}),
                          one_section()),
        SchemaViolation);
    CHECK(llm.calls() == 2);
}

// --- normalization -----------------------------------------------------------

TEST_CASE("normalize drops duplicate alternatives and merges split blocks") {
    IOGrammar g;
    grammar::Production start;
    start.name = "start";
    start.alternatives.push_back({{grammar::Symbol::ref("a")}});
    grammar::Production a1;
    a1.name = "a";
    a1.alternatives.push_back({{grammar::Symbol::lit("x")}});
    grammar::Production a2;
    a2.name = "a";
    a2.alternatives.push_back({{grammar::Symbol::lit("y")}});
    a2.alternatives.push_back({{grammar::Symbol::lit("x")}});  // duplicate
    g.productions = {start, a1, a2};

    auto n = synth::normalize_grammar(g);
    CHECK(n.productions.size() == 2);
    const auto* a = n.find("a");
    REQUIRE(a != nullptr);
    REQUIRE(a->alternatives.size() == 2);
    CHECK(a->alternatives[0].symbols[0].text == "x");
    CHECK(a->alternatives[1].symbols[0].text == "y");
}

TEST_CASE("normalize moves the start production to the front") {
    IOGrammar g;
    grammar::Production a;
    a.name = "a";
    a.alternatives.push_back({{grammar::Symbol::lit("x")}});
    grammar::Production start;
    start.name = "start";
    start.alternatives.push_back({{grammar::Symbol::ref("a")}});
    g.productions = {a, start};
    auto n = synth::normalize_grammar(g);
    REQUIRE(n.productions.size() == 2);
    CHECK(n.productions[0].name == "start");
    CHECK(n.productions[1].name == "a");
    CHECK_NOTHROW(grammar::validate(n));
}

TEST_CASE("normalize completes terminals referenced only from constraints") {
    auto g = grammar::parse_grammar_lenient(
        "<start> ::= <Client:c> <Server:s>\n"
        "<c> ::= \"TOP\" <sp> <digits> <crlf>\n"
        "where int(<digits>) >= 1\n"
        "<s> ::= \"+OK\" <crlf>\n");
    auto n = synth::normalize_grammar(g);
    CHECK(n.find_terminal("sp") != nullptr);
    CHECK(n.find_terminal("digits") != nullptr);
    CHECK(n.find_terminal("crlf") != nullptr);
    CHECK_NOTHROW(grammar::validate(n));
}

TEST_CASE("normalize raises on names nobody can define") {
    auto g = grammar::parse_grammar_lenient("<start> ::= <gizmo>\n");
    CHECK_THROWS_AS(synth::normalize_grammar(g), UndefinedNonterminal);
}

TEST_CASE("normalize is idempotent on every shape we feed it") {
    std::vector<IOGrammar> inputs;
    inputs.push_back(grammar::parse_grammar(kSessionText));
    inputs.push_back(grammar::parse_grammar_lenient(
        "<start> ::= <Client:c> <Server:s>\n"
        "<c> ::= \"NOOP\" <crlf>\n"
        "<s> ::= \"+OK \" <number> <crlf>\n"));
    {
        IOGrammar g;
        grammar::Production a;
        a.name = "a";
        a.alternatives.push_back({{grammar::Symbol::lit("x")}});
        grammar::Production start;
        start.name = "start";
        start.alternatives.push_back({{grammar::Symbol::ref("a")}});
        grammar::Production a2 = a;
        g.productions = {a, start, a2};
        inputs.push_back(g);
    }
    for (const IOGrammar& g : inputs) {
        auto once = synth::normalize_grammar(g);
        auto twice = synth::normalize_grammar(once);
        CHECK(once.structurally_equal(twice));
        CHECK(grammar::serialize_grammar(once) == grammar::serialize_grammar(twice));
    }
}

TEST_CASE("the well-known lexeme table pins the usual meanings") {
    const auto& table = synth::builtin_lexemes();
    auto lookup = [&](const std::string& name) -> const grammar::TerminalDef* {
        for (const auto& [n, def] : table) {
            if (n == name) return &def;
        }
        return nullptr;
    };
    REQUIRE(lookup("crlf") != nullptr);
    CHECK(lookup("crlf")->kind == grammar::TerminalDef::Kind::literal);
    CHECK(lookup("crlf")->text == "\r\n");
    REQUIRE(lookup("sp") != nullptr);
    CHECK(lookup("sp")->text == " ");
    REQUIRE(lookup("number") != nullptr);
    CHECK(lookup("number")->kind == grammar::TerminalDef::Kind::regex);
    CHECK(lookup("number")->text == "[0-9]+");
    REQUIRE(lookup("text") != nullptr);
    CHECK(lookup("text")->text == "[ -~]*");
}

// --- patches -----------------------------------------------------------------

TEST_CASE("patch json round-trips and rejects malformed input") {
    synth::Patch p;
    synth::PatchEntry e;
    e.target_rule = "s_stat";
    e.kind = synth::PatchKind::rewrite_production;
    e.new_text = "<s_stat> ::= \"+OK 0 0\" <crlf>";
    e.provenance = {{"1939", "5", {0, 2}}};
    e.rationale = "observed replies carry two counters";
    p.entries.push_back(e);

    auto text = synth::patch_to_json(p);
    auto back = synth::patch_from_json(text);
    CHECK(back == p);

    CHECK_THROWS_AS(synth::patch_from_json("not json"), SchemaViolation);
    CHECK_THROWS_AS(synth::patch_from_json("{}"), SchemaViolation);
    CHECK_THROWS_AS(
        synth::patch_from_json(R"({"entries": [{"target_rule": "x", "kind": "paint",
            "new_text": "", "provenance": [], "rationale": ""}]})"),
        SchemaViolation);
}

TEST_CASE("a rewrite patch touches exactly its target production") {
    auto g = synth::normalize_grammar(grammar::parse_grammar(kSessionText));
    synth::Patch p;
    synth::PatchEntry e;
    e.target_rule = "s_stat";
    e.kind = synth::PatchKind::rewrite_production;
    e.new_text =
        "<s_stat> ::= \"+OK \" <number> \" \" <number> <crlf> | \"-ERR busy\" <crlf>";
    p.entries.push_back(e);

    auto patched = synth::apply_patch(g, p, protected_paths());
    auto before = util::split_lines(grammar::serialize_grammar(g));
    auto after = util::split_lines(grammar::serialize_grammar(patched));
    REQUIRE(before.size() == after.size());
    int diffs = 0;
    for (size_t i = 0; i < before.size(); ++i) {
        if (before[i] != after[i]) {
            ++diffs;
            CHECK(util::starts_with(after[i], "<s_stat>"));
        }
    }
    CHECK(diffs == 1);
}

TEST_CASE("patching an unknown rule is rejected as such") {
    auto g = synth::normalize_grammar(grammar::parse_grammar(kSessionText));
    synth::Patch p;
    synth::PatchEntry e;
    e.target_rule = "no_such_rule";
    e.kind = synth::PatchKind::add_alternative;
    e.new_text = "\"X\" <crlf>";
    p.entries.push_back(e);
    try {
        synth::apply_patch(g, p, protected_paths());
        FAIL("expected PatchRejected");
    } catch (const PatchRejected& err) {
        CHECK(err.reason == PatchRejected::Reason::unknown_target);
    }
}

TEST_CASE("a patch that drops a protected path is rejected as a regression") {
    auto g = synth::normalize_grammar(grammar::parse_grammar(kSessionText));
    synth::Patch p;
    synth::PatchEntry e;
    e.target_rule = "start";
    e.kind = synth::PatchKind::rewrite_production;
    e.new_text = "<start> ::= <Server:greeting> <auth> <txn>\n";
    p.entries.push_back(e);
    try {
        synth::apply_patch(g, p, protected_paths());
        FAIL("expected PatchRejected");
    } catch (const PatchRejected& err) {
        CHECK(err.reason == PatchRejected::Reason::mtp_regression);
        CHECK(std::string(err.what()).find("QUIT") != std::string::npos);
    }
}

TEST_CASE("unparseable patch text is rejected before anything changes") {
    auto g = synth::normalize_grammar(grammar::parse_grammar(kSessionText));
    synth::Patch p;
    synth::PatchEntry e;
    e.target_rule = "s_stat";
    e.kind = synth::PatchKind::rewrite_production;
    e.new_text = "<s_stat> ::= ::=";
    p.entries.push_back(e);
    try {
        synth::apply_patch(g, p, protected_paths());
        FAIL("expected PatchRejected");
    } catch (const PatchRejected& err) {
        CHECK(err.reason == PatchRejected::Reason::parse_failure);
    }
}

TEST_CASE("added alternatives and constraints land on their rule") {
    auto g = synth::normalize_grammar(grammar::parse_grammar(kSessionText));

    synth::Patch p;
    synth::PatchEntry alt;
    alt.target_rule = "c_list";
    alt.kind = synth::PatchKind::add_alternative;
    alt.new_text = "\"LIST\" <sp> <msg_number> <crlf>";
    p.entries.push_back(alt);
    synth::PatchEntry con;
    con.target_rule = "c_list";
    con.kind = synth::PatchKind::add_constraint;
    con.new_text = "int(<msg_number>) >= 1";
    p.entries.push_back(con);

    auto patched = synth::apply_patch(g, p, protected_paths());
    REQUIRE(patched.find("c_list")->alternatives.size() == 2);
    auto owned = patched.constraints_of("c_list");
    REQUIRE(owned.size() == 1);
    CHECK(constraint::to_string(owned[0]->expr) == "int(<msg_number>) >= 1");
    for (const auto& path : protected_paths()) {
        CHECK(derivation::check_generatable(patched, path));
    }
}

TEST_CASE("modify_constraint replaces the rule's clauses") {
    auto g = synth::normalize_grammar(grammar::parse_grammar(kSessionText));
    REQUIRE(g.constraints_of("c_dele").size() == 1);

    synth::Patch p;
    synth::PatchEntry e;
    e.target_rule = "c_dele";
    e.kind = synth::PatchKind::modify_constraint;
    e.new_text = "int(<msg_number>) == 3";
    p.entries.push_back(e);
    auto patched = synth::apply_patch(g, p, protected_paths());
    auto owned = patched.constraints_of("c_dele");
    REQUIRE(owned.size() == 1);
    CHECK(constraint::to_string(owned[0]->expr) == "int(<msg_number>) == 3");
}

TEST_CASE("patch provenance lands on the target and leaves others alone") {
    auto g = synth::normalize_grammar(grammar::parse_grammar(kSessionText));
    auto before_user = g.provenance.at("c_user");

    synth::Patch p;
    synth::PatchEntry e;
    e.target_rule = "s_stat";
    e.kind = synth::PatchKind::rewrite_production;
    e.new_text = "<s_stat> ::= \"+OK 1 120\" <crlf>";
    e.provenance = {{"1939", "5", {0}}};
    e.rationale = "pin the observed reply";
    p.entries.push_back(e);

    auto patched = synth::apply_patch(g, p, protected_paths());
    REQUIRE(patched.provenance.count("s_stat") == 1);
    CHECK(patched.provenance.at("s_stat")[0].section_id == "5");
    CHECK(patched.provenance.at("c_user") == before_user);
}

TEST_CASE("a rewrite may bring genuinely new helper rules along") {
    auto g = synth::normalize_grammar(grammar::parse_grammar(kSessionText));
    synth::Patch p;
    synth::PatchEntry e;
    e.target_rule = "s_list";
    e.kind = synth::PatchKind::rewrite_production;
    e.new_text =
        "<s_list> ::= \"+OK \" <listing> <crlf>\n"
        "<listing> ::= <number> \" \" <number>\n";
    p.entries.push_back(e);
    auto patched = synth::apply_patch(g, p, protected_paths());
    CHECK(patched.find("listing") != nullptr);
    CHECK_NOTHROW(grammar::validate(patched));

    // But silently redefining an existing non-target rule is refused.
    synth::PatchEntry bad;
    bad.target_rule = "s_list";
    bad.kind = synth::PatchKind::rewrite_production;
    bad.new_text =
        "<s_list> ::= \"+OK\" <crlf>\n"
        "<ok> ::= \"+OK hijacked\" <crlf>\n";
    synth::Patch p2;
    p2.entries.push_back(bad);
    try {
        synth::apply_patch(g, p2, protected_paths());
        FAIL("expected PatchRejected");
    } catch (const PatchRejected& err) {
        CHECK(err.reason == PatchRejected::Reason::parse_failure);
    }
}

TEST_CASE("generatability is preserved across every accepted patch") {
    auto g = synth::normalize_grammar(grammar::parse_grammar(kSessionText));
    auto paths = protected_paths();

    std::vector<synth::Patch> patches;
    {
        synth::Patch p;
        synth::PatchEntry e;
        e.target_rule = "s_user";
        e.kind = synth::PatchKind::rewrite_production;
        e.new_text = "<s_user> ::= <ok>";
        p.entries.push_back(e);
        patches.push_back(p);
    }
    {
        synth::Patch p;
        synth::PatchEntry e;
        e.target_rule = "c_stat";
        e.kind = synth::PatchKind::add_alternative;
        e.new_text = "\"STAT\" <sp> <crlf>";
        p.entries.push_back(e);
        patches.push_back(p);
    }
    {
        synth::Patch p;
        synth::PatchEntry e;
        e.target_rule = "c_dele";
        e.kind = synth::PatchKind::modify_constraint;
        e.new_text = "int(<msg_number>) >= 1 and int(<msg_number>) <= 4";
        p.entries.push_back(e);
        patches.push_back(p);
    }
    for (const auto& p : patches) {
        auto patched = synth::apply_patch(g, p, paths);
        for (const auto& path : paths) {
            CHECK(derivation::check_generatable(g, path));
            CHECK(derivation::check_generatable(patched, path));
        }
    }
}
