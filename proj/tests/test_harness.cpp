// The execution side: mock POP3 server, TCP plumbing, live sessions driven
// from the bundled session grammar, error classification, and metrics.
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "specforge/derivation.hpp"
#include "specforge/errors.hpp"
#include "specforge/grammar.hpp"
#include "specforge/graph.hpp"
#include "specforge/harness.hpp"
#include "specforge/mockpop3.hpp"
#include "specforge/util.hpp"

using namespace specforge;
using harness::Direction;
using harness::ErrorClass;
using harness::Exchange;
using harness::FailureCause;
using harness::Trace;
using harness::Verdict;
using mockpop3::MockConfig;
using mockpop3::MockPop3Server;
using mockpop3::SessionLogic;

namespace {

std::string asset_text(const std::string& rel) {
    return util::read_file(std::filesystem::path(SPECFORGE_SOURCE_DIR) / "assets" / rel);
}

grammar::IOGrammar golden_grammar() {
    auto g = grammar::parse_grammar(asset_text("grammars/pop3_golden.grammar"));
    grammar::validate(g);
    return g;
}

grammar::IOGrammar full_grammar() {
    auto g = grammar::parse_grammar(asset_text("grammars/pop3_full.grammar"));
    grammar::validate(g);
    return g;
}

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
    auto auth = [](const std::string& cmd, const std::string& to) {
        return std::vector<std::array<std::string, 3>>{
            {"AUTHORIZATION", "USER", "AUTHORIZATION"},
            {"AUTHORIZATION", "PASS", "TRANSACTION"},
            {"TRANSACTION", cmd, to}};
    };
    return {make_mtp(auth("STAT", "TRANSACTION"), "STAT"),
            make_mtp(auth("LIST", "TRANSACTION"), "LIST"),
            make_mtp(auth("DELE", "TRANSACTION"), "DELE"),
            make_mtp(auth("QUIT", "UPDATE"), "QUIT")};
}

// A localhost SUT config pointed at the given mock instance.
harness::SutConfig sut_for(const MockPop3Server& server, int read_timeout_ms = 3000) {
    harness::SutConfig cfg;
    cfg.host = "127.0.0.1";
    cfg.port = server.port();
    cfg.connect_timeout_ms = 2000;
    cfg.read_timeout_ms = read_timeout_ms;
    return cfg;
}

MockConfig ephemeral_config() {
    MockConfig cfg;
    cfg.port = 0;
    return cfg;
}

Exchange client_x(const std::string& bytes, Verdict v = Verdict::accepted, int ts = 0) {
    Exchange e;
    e.direction = Direction::client_to_server;
    e.bytes = bytes;
    e.symbol = bytes.empty() ? "" : util::to_upper(util::whitespace_tokens(bytes)[0]);
    e.verdict = v;
    e.ts = ts;
    return e;
}

Exchange server_x(const std::string& bytes, Verdict v = Verdict::accepted, int ts = 0) {
    Exchange e;
    e.direction = Direction::server_to_client;
    e.bytes = bytes;
    e.symbol = "s_reply";
    e.verdict = v;
    e.ts = ts;
    return e;
}

// True when `wanted` appears, in order, within the trace's client commands.
bool commands_subsequence(const Trace& t, const std::vector<std::string>& wanted) {
    size_t k = 0;
    for (const Exchange& e : t.exchanges) {
        if (k < wanted.size() && e.direction == Direction::client_to_server &&
            e.symbol == wanted[k]) {
            ++k;
        }
    }
    return k == wanted.size();
}

std::filesystem::path fresh_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() /
               ("specforge_harness_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

// --- mock server: reply logic -----------------------------------------------

TEST_CASE("mock session walks the canonical flow with the documented replies") {
    MockConfig cfg;
    SessionLogic s(cfg);
    bool close = false;

    CHECK(s.greeting() == "+OK Dovecot ready.\r\n");
    CHECK(s.handle("USER alice", close) == "+OK\r\n");
    CHECK(s.handle("PASS hunter2", close) == "+OK Logged in.\r\n");

    // Totals come straight from the configured mailbox.
    int total = std::accumulate(cfg.octets.begin(), cfg.octets.end(), 0);
    CHECK(total == 2170);
    CHECK(s.handle("STAT", close) == "+OK 8 2170\r\n");
    CHECK(s.handle("LIST 8", close) == "+OK 8 383\r\n");
    CHECK(s.handle("DELE 3", close) == "+OK Marked to be deleted.\r\n");
    CHECK_FALSE(close);
    CHECK(s.handle("QUIT", close) == "+OK Logging out.\r\n");
    CHECK(close);
}

TEST_CASE("mock LIST with no argument returns the full dot-terminated listing") {
    MockConfig cfg;
    SessionLogic s(cfg);
    bool close = false;
    s.handle("USER u", close);
    s.handle("PASS p", close);

    // Build the expectation independently from the octet table.
    std::string want = "+OK 8 messages (2170 octets)\r\n";
    for (size_t i = 0; i < cfg.octets.size(); ++i) {
        want += std::to_string(i + 1) + " " + std::to_string(cfg.octets[i]) + "\r\n";
    }
    want += ".\r\n";
    CHECK(s.handle("LIST", close) == want);
}

TEST_CASE("mock RETR returns a dot-terminated message body") {
    MockConfig cfg;
    SessionLogic s(cfg);
    bool close = false;
    s.handle("USER u", close);
    s.handle("PASS p", close);
    CHECK(s.handle("RETR 5", close) ==
          "+OK 400 octets\r\n"
          "Subject: mock message 5\r\n"
          "\r\n"
          "This is the body of message 5.\r\n"
          ".\r\n");
}

TEST_CASE("mock deletions change totals until RSET undoes them") {
    MockConfig cfg;
    SessionLogic s(cfg);
    bool close = false;
    s.handle("USER u", close);
    s.handle("PASS p", close);

    CHECK(s.handle("DELE 1", close) == "+OK Marked to be deleted.\r\n");
    CHECK(s.handle("STAT", close) == "+OK 7 2050\r\n");  // 2170 - 120
    CHECK(s.handle("LIST 1", close) == "-ERR No such message.\r\n");
    CHECK(s.handle("RETR 1", close) == "-ERR No such message.\r\n");
    CHECK(s.handle("DELE 1", close) == "-ERR Message is deleted.\r\n");

    // The full listing skips the deleted entry.
    std::string listing = s.handle("LIST", close);
    CHECK(listing.find("\r\n1 120\r\n") == std::string::npos);
    CHECK(listing.find("2 250\r\n") != std::string::npos);

    CHECK(s.handle("RSET", close) == "+OK\r\n");
    CHECK(s.handle("STAT", close) == "+OK 8 2170\r\n");
    CHECK(s.handle("LIST 1", close) == "+OK 1 120\r\n");
}

TEST_CASE("mock rejects bad arguments and out-of-state commands") {
    MockConfig cfg;
    SessionLogic s(cfg);
    bool close = false;

    CHECK(s.handle("USER", close) == "-ERR Missing username.\r\n");
    CHECK(s.handle("PASS p", close) == "-ERR No username given.\r\n");
    CHECK(s.handle("STAT", close) == "-ERR Unknown command.\r\n");  // auth state

    s.handle("USER u", close);
    s.handle("PASS p", close);
    CHECK(s.handle("LIST 9", close) == "-ERR No such message.\r\n");
    CHECK(s.handle("LIST 0", close) == "-ERR No such message.\r\n");
    CHECK(s.handle("LIST abc", close) == "-ERR Invalid message number.\r\n");
    CHECK(s.handle("RETR 99", close) == "-ERR No such message.\r\n");
    CHECK(s.handle("DELE zz", close) == "-ERR Invalid message number.\r\n");
    CHECK(s.handle("FROB", close) == "-ERR Unknown command.\r\n");
    CHECK(s.handle("NOOP", close) == "+OK\r\n");
    CHECK_FALSE(close);
}

// --- mock server: sockets ----------------------------------------------------

TEST_CASE("mock server speaks POP3 over a real socket") {
    MockPop3Server server(ephemeral_config());
    server.start();
    REQUIRE(server.port() > 0);

    harness::TcpClient c;
    c.connect("127.0.0.1", server.port(), 2000);
    CHECK(c.connected());

    auto greeting = c.read_until("\r\n", 2000);
    CHECK(greeting.status == harness::TcpClient::ReadStatus::ok);
    CHECK(greeting.bytes == "+OK Dovecot ready.\r\n");

    REQUIRE(c.send_all("USER bob\r\n"));
    CHECK(c.read_until("\r\n", 2000).bytes == "+OK\r\n");
    REQUIRE(c.send_all("PASS pw\r\n"));
    CHECK(c.read_until("\r\n", 2000).bytes == "+OK Logged in.\r\n");

    // Multi-line replies come back whole, terminator included.
    REQUIRE(c.send_all("LIST\r\n"));
    auto listing = c.read_until("\r\n.\r\n", 2000);
    CHECK(listing.status == harness::TcpClient::ReadStatus::ok);
    CHECK(util::starts_with(listing.bytes, "+OK 8 messages"));
    const std::string tail = "8 383\r\n.\r\n";
    REQUIRE(listing.bytes.size() >= tail.size());
    CHECK(listing.bytes.substr(listing.bytes.size() - tail.size()) == tail);

    REQUIRE(c.send_all("QUIT\r\n"));
    CHECK(c.read_until("\r\n", 2000).bytes == "+OK Logging out.\r\n");

    // After QUIT the server hangs up.
    auto after = c.read_until("\r\n", 2000);
    CHECK(after.status == harness::TcpClient::ReadStatus::closed);
    server.stop();
    CHECK_FALSE(server.running());
}

TEST_CASE("mock server assembles commands split across packets") {
    MockPop3Server server(ephemeral_config());
    server.start();
    harness::TcpClient c;
    c.connect("127.0.0.1", server.port(), 2000);
    c.read_until("\r\n", 2000);

    REQUIRE(c.send_all("US"));
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    REQUIRE(c.send_all("ER carol\r\nPASS "));
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    REQUIRE(c.send_all("pw\r\n"));
    CHECK(c.read_until("\r\n", 2000).bytes == "+OK\r\n");
    CHECK(c.read_until("\r\n", 2000).bytes == "+OK Logged in.\r\n");
    server.stop();
}

TEST_CASE("concurrent mock sessions keep independent mailboxes") {
    MockPop3Server server(ephemeral_config());
    server.start();

    harness::TcpClient a;
    harness::TcpClient b;
    a.connect("127.0.0.1", server.port(), 2000);
    b.connect("127.0.0.1", server.port(), 2000);
    a.read_until("\r\n", 2000);
    b.read_until("\r\n", 2000);

    for (harness::TcpClient* c : {&a, &b}) {
        c->send_all("USER u\r\n");
        c->read_until("\r\n", 2000);
        c->send_all("PASS p\r\n");
        c->read_until("\r\n", 2000);
    }
    a.send_all("DELE 1\r\n");
    CHECK(a.read_until("\r\n", 2000).bytes == "+OK Marked to be deleted.\r\n");
    // Session B's maildrop is untouched by A's delete.
    b.send_all("STAT\r\n");
    CHECK(b.read_until("\r\n", 2000).bytes == "+OK 8 2170\r\n");
    a.send_all("STAT\r\n");
    CHECK(a.read_until("\r\n", 2000).bytes == "+OK 7 2050\r\n");
    server.stop();
}

TEST_CASE("read_until reports a timeout when the peer stays quiet") {
    MockPop3Server server(ephemeral_config());
    server.start();
    harness::TcpClient c;
    c.connect("127.0.0.1", server.port(), 2000);
    c.read_until("\r\n", 2000);  // greeting

    auto started = std::chrono::steady_clock::now();
    auto res = c.read_until("\r\n", 250);
    auto waited = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - started)
                      .count();
    CHECK(res.status == harness::TcpClient::ReadStatus::timeout);
    CHECK(res.bytes.empty());
    CHECK(waited >= 200);
    CHECK(waited < 2000);
    server.stop();
}

TEST_CASE("sut config validation rejects nonsense") {
    harness::SutConfig cfg;
    cfg.port = 0;
    CHECK_THROWS_AS(harness::validate(cfg), ConfigError);
    cfg.port = 70000;
    CHECK_THROWS_AS(harness::validate(cfg), ConfigError);
    cfg.port = 110;
    cfg.read_timeout_ms = 0;
    CHECK_THROWS_AS(harness::validate(cfg), ConfigError);
}

// --- framing -----------------------------------------------------------------

TEST_CASE("multi-line framing is decided by the reachable dot terminator") {
    auto g = golden_grammar();
    CHECK(harness::expects_multiline(g, "s_list_all"));
    CHECK(harness::expects_multiline(g, "s_retr"));
    CHECK_FALSE(harness::expects_multiline(g, "s_list_one"));
    CHECK_FALSE(harness::expects_multiline(g, "s_stat"));
    CHECK_FALSE(harness::expects_multiline(g, "s_user"));
    CHECK_FALSE(harness::expects_multiline(g, "greeting"));
}

// --- live sessions against the mock ------------------------------------------

TEST_CASE("golden grammar sessions are accepted by the mock on every path") {
    auto g = golden_grammar();
    MockPop3Server server(ephemeral_config());
    server.start();
    auto sut = sut_for(server);

    for (const graph::Mtp& mtp : pop3_mtps()) {
        for (uint64_t seed : {1, 7, 42}) {
            Trace t = harness::run_session(g, mtp, sut, seed);
            INFO("target " << mtp.target << " seed " << seed);
            CHECK(t.terminal_state_reached);
            CHECK(t.accepted());
            CHECK(t.mtp_target == mtp.target);
            CHECK(t.commands == mtp.commands());
            CHECK(commands_subsequence(t, mtp.commands()));
            // Logical timestamps are the exchange ordinals.
            for (size_t i = 0; i < t.exchanges.size(); ++i) {
                CHECK(t.exchanges[i].ts == static_cast<int>(i));
            }
            // First exchange is the greeting, last the QUIT acknowledgement.
            REQUIRE(!t.exchanges.empty());
            CHECK(t.exchanges.front().direction == Direction::server_to_client);
            CHECK(util::starts_with(t.exchanges.front().bytes, "+OK"));
        }
    }
    server.stop();
}

TEST_CASE("the same seed reproduces a byte-identical trace") {
    auto g = golden_grammar();
    MockPop3Server server(ephemeral_config());
    server.start();
    auto sut = sut_for(server);
    auto mtp = pop3_mtps()[1];  // LIST

    Trace a = harness::run_session(g, mtp, sut, 99);
    Trace b = harness::run_session(g, mtp, sut, 99);
    CHECK(harness::trace_to_json(a) == harness::trace_to_json(b));

    Trace c = harness::run_session(g, mtp, sut, 100);
    // Different seeds are allowed to collide, but these two do not.
    CHECK(harness::trace_to_json(a) != harness::trace_to_json(c));
    server.stop();
}

TEST_CASE("a reply the grammar cannot parse fails the session as a syntax error") {
    // Doctor the reply shape for STAT so the mock's answer cannot match.
    std::string text = asset_text("grammars/pop3_golden.grammar");
    std::string from = "<s_stat> ::= \"+OK \" <count> \" \" <octets> <crlf>";
    auto pos = text.find(from);
    REQUIRE(pos != std::string::npos);
    text.replace(pos, from.size(), "<s_stat> ::= \"+NO \" <count> <crlf>");
    auto g = grammar::parse_grammar(text);
    grammar::validate(g);

    MockPop3Server server(ephemeral_config());
    server.start();
    Trace t = harness::run_session(g, pop3_mtps()[0], sut_for(server), 3);
    server.stop();

    CHECK_FALSE(t.accepted());
    CHECK_FALSE(t.terminal_state_reached);
    bool saw_parse_failure = false;
    for (const Exchange& e : t.exchanges) {
        if (e.verdict == Verdict::parse_failure) {
            saw_parse_failure = true;
            CHECK(e.symbol == "s_stat");
            CHECK(util::starts_with(e.bytes, "+OK"));  // observed bytes kept
        }
    }
    CHECK(saw_parse_failure);
    CHECK(harness::classify_error(t, g, {}) == ErrorClass::GSyn);
}

TEST_CASE("a cross-message constraint is checked against the observed reply") {
    // Force the LIST-with-argument exchange and demand an echo the mock will
    // never produce; the wrapper-level clause must catch it.
    std::string text = asset_text("grammars/pop3_golden.grammar");
    std::string from =
        "<exchange> ::= <stat_x> | <list_one_x> | <list_all_x> | <retr_x> | <noop_x> | <rset_x>";
    auto pos = text.find(from);
    REQUIRE(pos != std::string::npos);
    text.replace(pos, from.size(), "<exchange> ::= <list_one_x>");
    std::string echo = "where int(<reply_number>) == int(<list_msg>)";
    pos = text.find(echo);
    REQUIRE(pos != std::string::npos);
    text.replace(pos, echo.size(), "where int(<reply_number>) == 99");
    auto g = grammar::parse_grammar(text);
    grammar::validate(g);

    MockPop3Server server(ephemeral_config());
    server.start();
    Trace t = harness::run_session(g, pop3_mtps()[1], sut_for(server), 5);
    server.stop();

    CHECK_FALSE(t.accepted());
    bool saw_violation = false;
    for (const Exchange& e : t.exchanges) {
        if (e.verdict == Verdict::constraint_violation) {
            saw_violation = true;
            CHECK(e.symbol == "s_list_one");
        }
    }
    CHECK(saw_violation);
    CHECK(harness::classify_error(t, g, {}) == ErrorClass::TMism);
}

TEST_CASE("the honest echo constraint passes against the live mock") {
    // Same surgery but keeping the real echo clause: the mock echoes the
    // requested number, so the wrapper check must stay quiet.
    std::string text = asset_text("grammars/pop3_golden.grammar");
    std::string from =
        "<exchange> ::= <stat_x> | <list_one_x> | <list_all_x> | <retr_x> | <noop_x> | <rset_x>";
    auto pos = text.find(from);
    REQUIRE(pos != std::string::npos);
    text.replace(pos, from.size(), "<exchange> ::= <list_one_x>");
    auto g = grammar::parse_grammar(text);
    grammar::validate(g);

    MockPop3Server server(ephemeral_config());
    server.start();
    for (uint64_t seed : {2, 9}) {
        Trace t = harness::run_session(g, pop3_mtps()[1], sut_for(server), seed);
        INFO("seed " << seed);
        CHECK(t.accepted());
    }
    server.stop();
}

TEST_CASE("a single-line reply against a multi-line expectation times out") {
    std::string text = asset_text("grammars/pop3_golden.grammar");
    std::string from = "<s_stat> ::= \"+OK \" <count> \" \" <octets> <crlf>";
    auto pos = text.find(from);
    REQUIRE(pos != std::string::npos);
    text.replace(pos, from.size(),
                 "<s_stat> ::= \"+OK \" <count> \" \" <octets> <crlf> <scan_lines> <dot_line>");
    auto g = grammar::parse_grammar(text);
    grammar::validate(g);

    MockPop3Server server(ephemeral_config());
    server.start();
    Trace t = harness::run_session(g, pop3_mtps()[0], sut_for(server, 300), 3);
    server.stop();

    CHECK_FALSE(t.accepted());
    CHECK_FALSE(t.terminal_state_reached);
    CHECK(t.exchanges.back().verdict == Verdict::timeout);
    CHECK(t.exchanges.back().symbol == "s_stat");
    CHECK(harness::classify_error(t, g, {}) == ErrorClass::TMism);
}

TEST_CASE("a hangup mid-session marks the remaining exchanges as disconnected") {
    // Plan more conversation after QUIT; the mock hangs up first.
    std::string text = asset_text("grammars/pop3_golden.grammar");
    std::string from =
        "<start> ::= <Server:greeting> <auth> <txn> <maybe_dele> <Client:c_quit> <Server:s_quit>";
    auto pos = text.find(from);
    REQUIRE(pos != std::string::npos);
    text.replace(pos, from.size(),
                 "<start> ::= <Server:greeting> <auth> <Client:c_quit> <Server:s_quit>"
                 " <Client:c_noop> <Server:s_noop> <Client:c_stat> <Server:s_stat>");
    auto g = grammar::parse_grammar(text);
    grammar::validate(g);

    MockPop3Server server(ephemeral_config());
    server.start();
    graph::Mtp quit_mtp = pop3_mtps()[3];
    Trace t = harness::run_session(g, quit_mtp, sut_for(server), 8);
    server.stop();

    CHECK_FALSE(t.accepted());
    CHECK_FALSE(t.terminal_state_reached);
    REQUIRE(!t.exchanges.empty());
    CHECK(t.exchanges.back().verdict == Verdict::disconnect);
    // Everything after the first disconnect is also a disconnect.
    bool seen = false;
    int disconnects = 0;
    for (const Exchange& e : t.exchanges) {
        if (e.verdict == Verdict::disconnect) {
            seen = true;
            ++disconnects;
        } else {
            CHECK_FALSE(seen);
        }
    }
    CHECK(disconnects >= 2);
    CHECK(harness::classify_error(t, g, {}) == ErrorClass::TMism);
}

TEST_CASE("an unreachable endpoint raises ConnectFailure") {
    auto g = golden_grammar();
    harness::SutConfig sut;
    sut.port = 59999;  // nothing listens here
    sut.connect_timeout_ms = 500;
    CHECK_THROWS_AS(harness::run_session(g, pop3_mtps()[0], sut, 1),
                    ConnectFailure);
}

// --- error classification -----------------------------------------------------

namespace {

Trace synthetic_trace(bool with_parse_failure, bool with_violation, bool terminal) {
    Trace t;
    t.mtp_target = "STAT";
    t.commands = {"USER", "PASS", "STAT"};
    t.seed = 1;
    t.exchanges.push_back(server_x("+OK hello\r\n", Verdict::accepted, 0));
    t.exchanges.push_back(client_x("USER u\r\n", Verdict::accepted, 1));
    t.exchanges.push_back(server_x("+OK\r\n", Verdict::accepted, 2));
    t.exchanges.push_back(client_x("STAT\r\n", Verdict::accepted, 3));
    Verdict last = Verdict::accepted;
    if (with_parse_failure) {
        last = Verdict::parse_failure;
    } else if (with_violation) {
        last = Verdict::constraint_violation;
    }
    t.exchanges.push_back(server_x("+OK 8 2170\r\n", last, 4));
    if (with_parse_failure && with_violation) {
        // Both kinds present: add the second one explicitly.
        t.exchanges.push_back(server_x("+OK 8 2170\r\n", Verdict::constraint_violation, 5));
    }
    t.terminal_state_reached = terminal;
    return t;
}

}  // namespace

TEST_CASE("error classification follows the syntax > mismatch > coverage cascade") {
    auto g = golden_grammar();
    const std::vector<std::vector<std::string>> none = {};
    const std::vector<std::vector<std::string>> reachable = {
        {"USER", "PASS", "STAT", "QUIT"}, {"USER", "PASS", "DELE", "QUIT"}};
    const std::vector<std::vector<std::string>> unreachable = {
        {"USER", "PASS", "STAT", "QUIT"}, {"USER", "PASS", "TOP", "QUIT"}};

    struct Row {
        bool parse_failure;
        bool violation;
        bool terminal;
        const std::vector<std::vector<std::string>>* mandated;
        ErrorClass want;
    };
    const Row rows[] = {
        // Any unparsable reply dominates everything else.
        {true, false, false, &reachable, ErrorClass::GSyn},
        {true, true, false, &reachable, ErrorClass::GSyn},
        {true, false, true, &reachable, ErrorClass::GSyn},
        {true, true, true, &unreachable, ErrorClass::GSyn},
        // Constraint violations and unfinished sessions are trace mismatches.
        {false, true, false, &reachable, ErrorClass::TMism},
        {false, true, true, &reachable, ErrorClass::TMism},
        {false, true, false, &unreachable, ErrorClass::TMism},
        {false, false, false, &reachable, ErrorClass::TMism},
        {false, false, false, &unreachable, ErrorClass::TMism},
        // Clean trace but a mandated form the grammar cannot produce.
        {false, false, true, &unreachable, ErrorClass::GMiss},
        // Clean trace, everything generatable (or nothing mandated).
        {false, false, true, &reachable, ErrorClass::None},
        {false, false, true, &none, ErrorClass::None},
    };

    int agreements = 0;
    int case_no = 0;
    for (const Row& row : rows) {
        ++case_no;
        Trace t = synthetic_trace(row.parse_failure, row.violation, row.terminal);
        ErrorClass got = harness::classify_error(t, g, *row.mandated);
        INFO("case " << case_no << ": expected "
                     << harness::error_class_name(row.want) << ", got "
                     << harness::error_class_name(got));
        CHECK(got == row.want);
        if (got == row.want) ++agreements;
    }
    CHECK(agreements == 12);
    CHECK(std::size(rows) == 12);
}

TEST_CASE("classification names render and an accepted live trace is class None") {
    CHECK(std::string(harness::error_class_name(ErrorClass::GSyn)) == "GSyn");
    CHECK(std::string(harness::error_class_name(ErrorClass::TMism)) == "TMism");
    CHECK(std::string(harness::error_class_name(ErrorClass::GMiss)) == "GMiss");
    CHECK(std::string(harness::error_class_name(ErrorClass::None)) == "None");

    auto g = golden_grammar();
    MockPop3Server server(ephemeral_config());
    server.start();
    Trace t = harness::run_session(g, pop3_mtps()[0], sut_for(server), 11);
    server.stop();
    REQUIRE(t.accepted());
    CHECK(harness::classify_error(t, g, {{"USER", "PASS", "STAT", "QUIT"}}) ==
          ErrorClass::None);
}

// --- failure-cause labelling --------------------------------------------------

TEST_CASE("failure causes label the first rejected exchange") {
    harness::SutCapabilities caps;

    Trace ok = synthetic_trace(false, false, true);
    CHECK(harness::label_failure_cause(ok, caps) == std::nullopt);

    // STLS rejected: the TLS list wins even when the wording also matches a
    // marker further down the cascade.
    Trace tls;
    tls.exchanges.push_back(client_x("STLS\r\n", Verdict::accepted, 0));
    tls.exchanges.push_back(
        server_x("-ERR unknown command\r\n", Verdict::parse_failure, 1));
    tls.terminal_state_reached = false;
    CHECK(harness::label_failure_cause(tls, caps) == FailureCause::NeedsTls);

    Trace missing;
    missing.exchanges.push_back(client_x("XFROB\r\n", Verdict::accepted, 0));
    missing.exchanges.push_back(
        server_x("-ERR Unknown command.\r\n", Verdict::parse_failure, 1));
    missing.terminal_state_reached = false;
    CHECK(harness::label_failure_cause(missing, caps) == FailureCause::ImplMissing);

    Trace data;
    data.exchanges.push_back(client_x("RETR 9\r\n", Verdict::accepted, 0));
    data.exchanges.push_back(
        server_x("-ERR No such message.\r\n", Verdict::parse_failure, 1));
    data.terminal_state_reached = false;
    CHECK(harness::label_failure_cause(data, caps) == FailureCause::DataState);

    Trace deleted;
    deleted.exchanges.push_back(client_x("DELE 3\r\n", Verdict::accepted, 0));
    deleted.exchanges.push_back(
        server_x("-ERR Message is deleted.\r\n", Verdict::parse_failure, 1));
    deleted.terminal_state_reached = false;
    CHECK(harness::label_failure_cause(deleted, caps) == FailureCause::DataState);

    // No marker matched: the grammar itself is the best suspect.
    Trace bug;
    bug.exchanges.push_back(client_x("STAT\r\n", Verdict::accepted, 0));
    bug.exchanges.push_back(server_x("+OK 8 2170\r\n", Verdict::parse_failure, 1));
    bug.terminal_state_reached = false;
    CHECK(harness::label_failure_cause(bug, caps) == FailureCause::GrammarBug);

    // Timeouts carry no reply text, so they also land on the grammar.
    Trace quiet;
    quiet.exchanges.push_back(client_x("STAT\r\n", Verdict::accepted, 0));
    quiet.exchanges.push_back(server_x("", Verdict::timeout, 1));
    quiet.terminal_state_reached = false;
    CHECK(harness::label_failure_cause(quiet, caps) == FailureCause::GrammarBug);
}

// --- elements ----------------------------------------------------------------

TEST_CASE("element extraction keys message types on tagged rule names") {
    auto g = golden_grammar();
    auto e = harness::extract_elements(g);

    std::set<std::string> clients(e.client_message_types.begin(),
                                  e.client_message_types.end());
    CHECK(clients == std::set<std::string>{"user", "pass", "stat", "list_one",
                                           "list_all", "retr", "noop", "rset",
                                           "dele", "quit"});
    std::set<std::string> servers(e.server_message_types.begin(),
                                  e.server_message_types.end());
    CHECK(servers == std::set<std::string>{"greeting", "user", "pass", "stat",
                                           "list_one", "list_all", "retr", "noop",
                                           "rset", "dele", "quit"});
    CHECK(e.independent_constraints.size() == 4);
    CHECK(e.dependent_constraints ==
          std::vector<std::string>{"int(<reply_number>) == int(<list_msg>)"});
}

TEST_CASE("the full grammar exposes exactly the reference element sets") {
    auto mine = harness::extract_elements(full_grammar());
    auto golden = harness::golden_elements_from_json(asset_text("golden_elements.json"));

    auto as_set = [](const std::vector<std::string>& v) {
        return std::set<std::string>(v.begin(), v.end());
    };
    CHECK(as_set(mine.client_message_types) == as_set(golden.client_message_types));
    CHECK(mine.client_message_types.size() == 14);
    CHECK(as_set(mine.server_message_types) == as_set(golden.server_message_types));
    CHECK(mine.server_message_types.size() == 9);
    CHECK(as_set(mine.independent_constraints) == as_set(golden.independent_constraints));
    CHECK(mine.independent_constraints.size() == 12);
    CHECK(mine.dependent_constraints == golden.dependent_constraints);
    CHECK(mine.dependent_constraints.size() == 1);
}

// --- metrics -----------------------------------------------------------------

namespace {

// Ten traces carrying fourteen issued commands; thirteen commands and nine
// traces are accepted. One trace fails at its fifth command.
std::vector<Trace> acceptance_fixture() {
    std::vector<Trace> traces;
    for (int i = 0; i < 9; ++i) {
        Trace t;
        t.mtp_target = "STAT";
        t.commands = {"USER", "PASS", "STAT"};
        t.seed = static_cast<uint64_t>(i);
        t.exchanges.push_back(server_x("+OK hello\r\n", Verdict::accepted, 0));
        t.exchanges.push_back(client_x("STAT\r\n", Verdict::accepted, 1));
        t.exchanges.push_back(server_x("+OK 8 2170\r\n", Verdict::accepted, 2));
        t.terminal_state_reached = true;
        traces.push_back(std::move(t));
    }
    Trace bad;
    bad.mtp_target = "DELE";
    bad.commands = {"USER", "PASS", "DELE"};
    bad.seed = 99;
    int ts = 0;
    bad.exchanges.push_back(server_x("+OK hello\r\n", Verdict::accepted, ts++));
    for (int k = 0; k < 4; ++k) {
        bad.exchanges.push_back(client_x("NOOP\r\n", Verdict::accepted, ts++));
        bad.exchanges.push_back(server_x("+OK\r\n", Verdict::accepted, ts++));
    }
    bad.exchanges.push_back(client_x("DELE 3\r\n", Verdict::accepted, ts++));
    bad.exchanges.push_back(server_x("?? what\r\n", Verdict::parse_failure, ts++));
    bad.terminal_state_reached = false;
    bad.failure_cause = FailureCause::GrammarBug;
    traces.push_back(std::move(bad));
    return traces;
}

}  // namespace

TEST_CASE("acceptance ratios come out at 92.9% and 90.0% on the mixed batch") {
    auto traces = acceptance_fixture();

    // Independent recount straight off the exchange lists.
    int issued = 0;
    int accepted = 0;
    for (const Trace& t : traces) {
        for (size_t i = 0; i < t.exchanges.size(); ++i) {
            const Exchange& e = t.exchanges[i];
            if (e.direction != Direction::client_to_server || e.bytes.empty()) continue;
            ++issued;
            for (size_t j = i + 1; j < t.exchanges.size(); ++j) {
                if (t.exchanges[j].direction == Direction::server_to_client) {
                    if (t.exchanges[j].verdict == Verdict::accepted) ++accepted;
                    break;
                }
            }
        }
    }
    CHECK(issued == 14);
    CHECK(accepted == 13);

    auto golden = harness::golden_elements_from_json(asset_text("golden_elements.json"));
    std::vector<graph::Mtp> canonical = {pop3_mtps()[0]};  // USER PASS STAT
    auto report = harness::compute_metrics(traces, golden_grammar(), golden, canonical);

    CHECK(report.message_acceptance.num == 13);
    CHECK(report.message_acceptance.den == 14);
    CHECK(report.message_acceptance.percent() == doctest::Approx(92.9).epsilon(0.001));
    CHECK(report.trace_acceptance.num == 9);
    CHECK(report.trace_acceptance.den == 10);
    CHECK(report.trace_acceptance.percent() == doctest::Approx(90.0));

    // The canonical route (USER PASS STAT) covers the nine clean traces.
    CHECK(report.rtc_ta.canonical.num == 9);
    CHECK(report.rtc_ta.canonical.den == 9);
    CHECK(report.rtc_ma.canonical.num == 9);
    CHECK(report.rtc_ma.canonical.den == 9);
    // Canonical counts can never exceed the overall ones.
    CHECK(report.rtc_ma.canonical.den <= report.rtc_ma.overall.den);
    CHECK(report.rtc_ma.canonical.num <= report.rtc_ma.overall.num);
    CHECK(report.rtc_ta.canonical.den <= report.rtc_ta.overall.den);
    CHECK(report.rtc_ta.canonical.num <= report.rtc_ta.overall.num);
    CHECK(report.rtc_ta.quotient() == doctest::Approx(1.0 / 0.9));

    CHECK(report.failure_causes.at("GrammarBug") == 1);
}

TEST_CASE("metrics reject an empty batch") {
    auto golden = harness::golden_elements_from_json(asset_text("golden_elements.json"));
    CHECK_THROWS_AS(
        harness::compute_metrics({}, golden_grammar(), golden, pop3_mtps()),
        EmptyInput);
}

TEST_CASE("matching element sets score perfect precision and recall") {
    auto golden = harness::golden_elements_from_json(asset_text("golden_elements.json"));
    auto traces = acceptance_fixture();
    auto report = harness::compute_metrics(traces, full_grammar(), golden, pop3_mtps());

    for (const char* kind : {"client_message_types", "server_message_types",
                             "independent_constraints", "dependent_constraints"}) {
        INFO("kind " << kind);
        const harness::PrCount& pr = report.elements.at(kind);
        CHECK(pr.precision() == doctest::Approx(1.0));
        CHECK(pr.recall() == doctest::Approx(1.0));
        CHECK(pr.intersection == pr.ours);
        CHECK(pr.intersection == pr.golden);
    }
    CHECK(report.elements.at("client_message_types").recall_display() == "14/14");
    CHECK(report.elements.at("server_message_types").recall_display() == "9/9");
    CHECK(report.elements.at("independent_constraints").recall_display() == "12/12");
    CHECK(report.elements.at("dependent_constraints").recall_display() == "1/1");
}

TEST_CASE("precision and recall display as a dash when a side is empty") {
    harness::PrCount none;
    CHECK(none.precision_display() == "-");
    CHECK(none.recall_display() == "-");
    harness::PrCount some{3, 4, 5};
    CHECK(some.precision_display() == "3/4");
    CHECK(some.recall_display() == "3/5");
    CHECK(some.precision() == doctest::Approx(0.75));
    CHECK(some.recall() == doctest::Approx(0.6));
}

// --- artifacts ----------------------------------------------------------------

TEST_CASE("traces survive a JSON round trip byte for byte") {
    Trace t;
    t.mtp_target = "LIST";
    t.commands = {"USER", "PASS", "LIST"};
    t.seed = 123456789;
    t.exchanges.push_back(server_x("+OK hi\r\n", Verdict::accepted, 0));
    t.exchanges.push_back(client_x("LIST 3\r\n", Verdict::accepted, 1));
    t.exchanges.push_back(server_x(std::string("+OK\x01\x02\xff\r\n", 9),
                                   Verdict::constraint_violation, 2));
    t.terminal_state_reached = false;
    t.failure_cause = FailureCause::DataState;

    std::string json_text = harness::trace_to_json(t);
    Trace back = harness::trace_from_json(json_text);
    CHECK(harness::trace_to_json(back) == json_text);
    CHECK(back.exchanges[2].bytes == t.exchanges[2].bytes);  // binary-safe
    CHECK(back.failure_cause == FailureCause::DataState);

    Trace clean = synthetic_trace(false, false, true);
    Trace clean_back = harness::trace_from_json(harness::trace_to_json(clean));
    CHECK(clean_back.failure_cause == std::nullopt);
    CHECK(clean_back.terminal_state_reached);

    CHECK_THROWS_AS(harness::trace_from_json("not json"), SchemaViolation);
    CHECK_THROWS_AS(harness::trace_from_json("{\"mtp\": \"X\"}"), SchemaViolation);
}

TEST_CASE("golden element lists round trip through JSON") {
    auto golden = harness::golden_elements_from_json(asset_text("golden_elements.json"));
    auto back = harness::golden_elements_from_json(harness::golden_elements_to_json(golden));
    CHECK(back.client_message_types == golden.client_message_types);
    CHECK(back.server_message_types == golden.server_message_types);
    CHECK(back.independent_constraints == golden.independent_constraints);
    CHECK(back.dependent_constraints == golden.dependent_constraints);

    CHECK_THROWS_AS(harness::golden_elements_from_json("[]"), SchemaViolation);
    CHECK_THROWS_AS(harness::golden_elements_from_json(
                        "{\"client_message_types\": [1]}"),
                    SchemaViolation);
}

TEST_CASE("run artifacts land as one trace file per session plus metrics") {
    auto traces = acceptance_fixture();
    auto golden = harness::golden_elements_from_json(asset_text("golden_elements.json"));
    auto report =
        harness::compute_metrics(traces, golden_grammar(), golden, {pop3_mtps()[0]});

    auto dir = fresh_dir("artifacts");
    harness::write_run_artifacts(dir, traces, report);

    for (size_t i = 0; i < traces.size(); ++i) {
        auto file = dir / ("trace_" + std::to_string(i) + ".json");
        REQUIRE(std::filesystem::exists(file));
        Trace back = harness::trace_from_json(util::read_file(file));
        CHECK(back.seed == traces[i].seed);
    }
    auto parsed = nlohmann::json::parse(util::read_file(dir / "metrics.json"));
    CHECK(parsed.at("message_acceptance").at("accepted") == 13);
    CHECK(parsed.at("message_acceptance").at("total") == 14);
    CHECK(parsed.at("trace_acceptance").at("ratio").get<double>() ==
          doctest::Approx(0.9));
    CHECK(parsed.at("elements").contains("client_message_types"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("enum names map both ways and reject strangers") {
    for (Verdict v : {Verdict::accepted, Verdict::parse_failure,
                      Verdict::constraint_violation, Verdict::timeout,
                      Verdict::disconnect}) {
        CHECK(harness::verdict_from(harness::verdict_name(v)) == v);
    }
    for (Direction d : {Direction::client_to_server, Direction::server_to_client}) {
        CHECK(harness::direction_from(harness::direction_name(d)) == d);
    }
    for (FailureCause c : {FailureCause::NeedsTls, FailureCause::ImplMissing,
                           FailureCause::DataState, FailureCause::GrammarBug}) {
        CHECK(harness::failure_cause_from(harness::failure_cause_name(c)) == c);
    }
    CHECK_THROWS_AS(harness::verdict_from("maybe"), SchemaViolation);
    CHECK_THROWS_AS(harness::direction_from("sideways"), SchemaViolation);
    CHECK_THROWS_AS(harness::failure_cause_from("gremlins"), SchemaViolation);
}

// --- bundled assets -----------------------------------------------------------

TEST_CASE("bundled grammars parse, validate, and serialize to themselves") {
    for (const char* rel : {"grammars/pop3_golden.grammar", "grammars/pop3_full.grammar"}) {
        INFO("asset " << rel);
        auto g = grammar::parse_grammar(asset_text(rel));
        grammar::validate(g);
        auto again = grammar::parse_grammar(grammar::serialize_grammar(g));
        grammar::validate(again);
        CHECK(grammar::serialize_grammar(again) == grammar::serialize_grammar(g));
    }
}

TEST_CASE("bundled grammar derivations re-parse and satisfy their constraints") {
    for (const char* rel : {"grammars/pop3_golden.grammar", "grammars/pop3_full.grammar"}) {
        auto g = grammar::parse_grammar(asset_text(rel));
        grammar::validate(g);
        for (uint64_t seed = 1; seed <= 40; ++seed) {
            INFO("asset " << rel << " seed " << seed);
            auto tree = derivation::derive(g, seed);
            CHECK(derivation::first_violation(g, tree) == std::nullopt);
            std::string bytes = derivation::leaf_bytes(tree);
            auto reparsed = derivation::parse_message(g, "start", bytes,
                                                      grammar::Party::none);
            CHECK(derivation::leaf_bytes(reparsed) == bytes);
            CHECK(derivation::first_violation(g, reparsed) == std::nullopt);
        }
    }
}

TEST_CASE("every command path of the state graph is generatable by the golden grammar") {
    auto g = golden_grammar();
    for (const graph::Mtp& mtp : pop3_mtps()) {
        INFO("target " << mtp.target);
        CHECK(derivation::check_generatable(g, mtp.commands()));
    }
    CHECK_FALSE(derivation::check_generatable(g, {"USER", "PASS", "TOP"}));
}

TEST_CASE("the bundled state graph reproduces the canonical POP3 paths") {
    auto g = graph::load_graph(std::filesystem::path(SPECFORGE_SOURCE_DIR) /
                               "assets/fixtures/pop3_graph.json");
    CHECK(g.states() == std::vector<std::string>{"AUTHORIZATION", "TRANSACTION", "UPDATE"});
    CHECK(g.commands() ==
          std::vector<std::string>{"DELE", "LIST", "PASS", "QUIT", "STAT", "USER"});
    CHECK(graph::transitions(g).size() == 6);
    CHECK(graph::dependencies(g) ==
          std::vector<std::pair<std::string, std::string>>{{"USER", "PASS"}});

    auto report = graph::compute_mtps(g, {"AUTHORIZATION"},
                                      {"STAT", "LIST", "DELE", "QUIT"});
    CHECK(report.unreachable.empty());
    REQUIRE(report.mtps.size() == 4);

    using Triples = std::vector<std::array<std::string, 3>>;
    auto want = [](const std::string& cmd, const std::string& to) {
        return Triples{{"AUTHORIZATION", "USER", "AUTHORIZATION"},
                       {"AUTHORIZATION", "PASS", "TRANSACTION"},
                       {"TRANSACTION", cmd, to}};
    };
    for (const graph::Mtp& m : report.mtps) {
        INFO("target " << m.target);
        CHECK(m.initial_state == "AUTHORIZATION");
        if (m.target == "QUIT") {
            CHECK(m.triples == want("QUIT", "UPDATE"));
        } else {
            CHECK(m.triples == want(m.target, "TRANSACTION"));
        }
    }
}
