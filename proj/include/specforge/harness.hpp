#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "specforge/derivation.hpp"
#include "specforge/graph.hpp"
#include "specforge/grammar.hpp"

// Drives grammar-derived sessions against a live implementation over TCP,
// records the byte-level exchanges with verdicts, classifies what went wrong,
// and folds completed traces into the evaluation metrics.
namespace specforge::harness {

struct SutConfig {
    std::string host = "127.0.0.1";
    int port = 11000;
    int connect_timeout_ms = 3000;
    int read_timeout_ms = 5000;
    bool greeting_expected = true;
};

// Throws ConfigError unless the port is in [1, 65535] and timeouts positive.
void validate(const SutConfig& cfg);

enum class Direction { client_to_server, server_to_client };
enum class Verdict { accepted, parse_failure, constraint_violation, timeout, disconnect };
enum class FailureCause { NeedsTls, ImplMissing, DataState, GrammarBug };

const char* direction_name(Direction d);
const char* verdict_name(Verdict v);
const char* failure_cause_name(FailureCause c);
Verdict verdict_from(const std::string& name);            // throws SchemaViolation
Direction direction_from(const std::string& name);        // throws SchemaViolation
FailureCause failure_cause_from(const std::string& name); // throws SchemaViolation

struct Exchange {
    Direction direction = Direction::client_to_server;
    std::string bytes;  // exactly what crossed the wire ("" if nothing did)
    // Logical timestamp: the exchange's ordinal in the session. Wall-clock
    // stamps would break replay determinism, so time here is event order.
    int ts = 0;
    Verdict verdict = Verdict::accepted;
    // Expected Server: nonterminal for replies; issued keyword for commands.
    std::string symbol;
};

struct Trace {
    std::string mtp_target;             // which path this session exercised
    std::vector<std::string> commands;  // the driven command sequence
    uint64_t seed = 0;
    std::vector<Exchange> exchanges;
    bool terminal_state_reached = false;
    std::optional<FailureCause> failure_cause;

    bool accepted() const;  // every exchange accepted and terminal state reached
};

// Derives the client side for the path's commands, speaks it over TCP, and
// parses each reply against the Server: nonterminal the session grammar
// expects there, evaluating its constraints on the observed bytes. Stops at
// the first non-accepted exchange; after a disconnect the remaining planned
// exchanges are recorded with empty bytes and the disconnect verdict.
// Throws ConnectFailure when no connection can be established at all;
// timeouts mid-session become exchange verdicts instead.
Trace run_session(const grammar::IOGrammar& g, const graph::Mtp& mtp,
                  const SutConfig& sut, uint64_t seed);

// Three-stage cascade over a finished trace: grammar syntax trouble first
// (any reply failed to parse), then trace mismatch (constraint violations or
// a session that did not reach its terminal state), then coverage (a
// mandated command form the grammar cannot generate at all).
enum class ErrorClass { GSyn, TMism, GMiss, None };
const char* error_class_name(ErrorClass e);
ErrorClass error_class_from(const std::string& name);  // throws SchemaViolation
ErrorClass classify_error(const Trace& trace, const grammar::IOGrammar& g,
                          const std::vector<std::vector<std::string>>& mandated_forms);

// Text cues for explaining a rejection; shipped defaults match the bundled
// mock server and common POP3 implementations.
struct SutCapabilities {
    std::vector<std::string> tls_required_commands = {"STLS"};
    std::vector<std::string> unrecognized_markers = {"unknown command",
                                                     "not implemented"};
    std::vector<std::string> data_state_markers = {"no such message", "mailbox",
                                                   "is deleted", "maildrop"};
};

// Labels the first rejection in a non-accepted trace; nullopt for accepted
// traces. Precedence: NeedsTls, then ImplMissing, then DataState, then
// GrammarBug.
std::optional<FailureCause> label_failure_cause(const Trace& trace,
                                                const SutCapabilities& caps);

// --- metrics ----------------------------------------------------------------

struct Ratio {
    int num = 0;
    int den = 0;
    double value() const { return den == 0 ? 0.0 : static_cast<double>(num) / den; }
    double percent() const { return value() * 100.0; }
    bool operator==(const Ratio&) const = default;
};

// Routes-to-canonical view: the same ratio measured over everything and
// over canonical-route traces only.
struct RtcView {
    Ratio overall;
    Ratio canonical;
    double quotient() const {
        return overall.value() == 0.0 ? 0.0 : canonical.value() / overall.value();
    }
    bool operator==(const RtcView&) const = default;
};

struct PrCount {
    int intersection = 0;
    int ours = 0;
    int golden = 0;
    // "-" when the denominator is empty, else num/den.
    std::string precision_display() const;
    std::string recall_display() const;
    double precision() const { return ours == 0 ? 0.0 : static_cast<double>(intersection) / ours; }
    double recall() const { return golden == 0 ? 0.0 : static_cast<double>(intersection) / golden; }
    bool operator==(const PrCount&) const = default;
};

struct GoldenElements {
    std::vector<std::string> client_message_types;  // canonical labels (user, list_one, ...)
    std::vector<std::string> server_message_types;  // canonical labels (greeting, ok, ...)
    std::vector<std::string> independent_constraints;  // constraint texts
    std::vector<std::string> dependent_constraints;
};

GoldenElements golden_elements_from_json(const std::string& text);
std::string golden_elements_to_json(const GoldenElements& e);

// The element sets a grammar exposes, in the same label space as
// GoldenElements: message labels are the tagged nonterminal names without
// their c_/client_ or s_/server_ prefixes (lowercased), constraint labels
// the canonical rendering of each where clause, split by how many fields it
// mentions.
GoldenElements extract_elements(const grammar::IOGrammar& g);

struct MetricsReport {
    Ratio message_acceptance;  // accepted commands / issued commands
    Ratio trace_acceptance;    // accepted traces / traces
    RtcView rtc_ma;
    RtcView rtc_ta;
    std::map<std::string, PrCount> elements;  // kind → counts
    std::map<std::string, int> failure_causes;
    bool operator==(const MetricsReport&) const = default;
};

// Folds finished traces into the report. A command counts as issued when its
// bytes actually went out, and as accepted when the session went on to accept
// the reply that answers it. Canonical routes are matched by command
// sequence. Throws EmptyInput on no traces.
MetricsReport compute_metrics(const std::vector<Trace>& traces,
                              const grammar::IOGrammar& ours,
                              const GoldenElements& golden,
                              const std::vector<graph::Mtp>& canonical_routes);

// --- artifacts ---------------------------------------------------------------

std::string trace_to_json(const Trace& t);
Trace trace_from_json(const std::string& text);
std::string metrics_to_json(const MetricsReport& m);

// Writes trace_<n>.json (n = position) and metrics.json under the run dir.
void write_run_artifacts(const std::filesystem::path& run_dir,
                         const std::vector<Trace>& traces, const MetricsReport& m);

// --- plumbing ----------------------------------------------------------------

// Minimal blocking TCP client with deadline-based reads; used by the session
// runner and handy for tests that poke the mock server directly.
class TcpClient {
public:
    TcpClient() = default;
    ~TcpClient();
    TcpClient(const TcpClient&) = delete;
    TcpClient& operator=(const TcpClient&) = delete;

    void connect(const std::string& host, int port, int timeout_ms);
    bool connected() const { return fd_ >= 0; }
    // False when the peer is gone (send after close).
    bool send_all(const std::string& bytes);

    enum class ReadStatus { ok, timeout, closed };
    struct ReadResult {
        ReadStatus status = ReadStatus::ok;
        std::string bytes;  // on timeout/closed: whatever arrived before that
    };
    // Reads until the buffered data ends with `terminator`.
    ReadResult read_until(const std::string& terminator, int timeout_ms);

    void close();

private:
    int fd_ = -1;
    std::string buffer_;
};

// True when the reply for this Server: nonterminal is dot-terminated: some
// literal reachable from it contains the "\r\n.\r\n" terminator (or is the
// bare ".\r\n" terminator line).
bool expects_multiline(const grammar::IOGrammar& g, const std::string& server_nt);

}  // namespace specforge::harness
