#include "specforge/harness.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <set>

#include "json.hpp"
#include "specforge/constraint.hpp"
#include "specforge/errors.hpp"
#include "specforge/util.hpp"

namespace specforge::harness {

using nlohmann::json;

void validate(const SutConfig& cfg) {
    if (cfg.port < 1 || cfg.port > 65535) {
        throw ConfigError("sut port must be in [1, 65535], got " +
                          std::to_string(cfg.port));
    }
    if (cfg.connect_timeout_ms <= 0 || cfg.read_timeout_ms <= 0) {
        throw ConfigError("sut timeouts must be positive");
    }
}

const char* direction_name(Direction d) {
    return d == Direction::client_to_server ? "client_to_server" : "server_to_client";
}

const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::accepted: return "accepted";
        case Verdict::parse_failure: return "parse_failure";
        case Verdict::constraint_violation: return "constraint_violation";
        case Verdict::timeout: return "timeout";
        case Verdict::disconnect: return "disconnect";
    }
    return "?";
}

const char* failure_cause_name(FailureCause c) {
    switch (c) {
        case FailureCause::NeedsTls: return "NeedsTls";
        case FailureCause::ImplMissing: return "ImplMissing";
        case FailureCause::DataState: return "DataState";
        case FailureCause::GrammarBug: return "GrammarBug";
    }
    return "?";
}

const char* error_class_name(ErrorClass e) {
    switch (e) {
        case ErrorClass::GSyn: return "GSyn";
        case ErrorClass::TMism: return "TMism";
        case ErrorClass::GMiss: return "GMiss";
        case ErrorClass::None: return "None";
    }
    return "?";
}

ErrorClass error_class_from(const std::string& name) {
    if (name == "GSyn") return ErrorClass::GSyn;
    if (name == "TMism") return ErrorClass::TMism;
    if (name == "GMiss") return ErrorClass::GMiss;
    if (name == "None") return ErrorClass::None;
    throw SchemaViolation("unknown error class: " + name);
}

Direction direction_from(const std::string& name) {
    for (Direction d : {Direction::client_to_server, Direction::server_to_client}) {
        if (name == direction_name(d)) return d;
    }
    throw SchemaViolation("unknown direction: " + name);
}

Verdict verdict_from(const std::string& name) {
    for (Verdict v : {Verdict::accepted, Verdict::parse_failure,
                      Verdict::constraint_violation, Verdict::timeout,
                      Verdict::disconnect}) {
        if (name == verdict_name(v)) return v;
    }
    throw SchemaViolation("unknown verdict: " + name);
}

FailureCause failure_cause_from(const std::string& name) {
    for (FailureCause c : {FailureCause::NeedsTls, FailureCause::ImplMissing,
                           FailureCause::DataState, FailureCause::GrammarBug}) {
        if (name == failure_cause_name(c)) return c;
    }
    throw SchemaViolation("unknown failure cause: " + name);
}

bool Trace::accepted() const {
    if (!terminal_state_reached) return false;
    for (const Exchange& e : exchanges) {
        if (e.verdict != Verdict::accepted) return false;
    }
    return true;
}

// --- tcp client --------------------------------------------------------------

TcpClient::~TcpClient() { close(); }

void TcpClient::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
    buffer_.clear();
}

void TcpClient::connect(const std::string& host, int port, int timeout_ms) {
    close();
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw ConnectFailure("cannot create socket");

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    std::string ip = (host == "localhost") ? "127.0.0.1" : host;
    if (::inet_pton(AF_INET, ip.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        throw ConnectFailure("not an IPv4 address: " + host);
    }

    int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
    if (rc != 0 && errno != EINPROGRESS) {
        std::string why = std::strerror(errno);
        ::close(fd);
        throw ConnectFailure("connect to " + host + ":" + std::to_string(port) +
                             " failed: " + why);
    }
    if (rc != 0) {
        pollfd pfd{fd, POLLOUT, 0};
        int ready = ::poll(&pfd, 1, timeout_ms);
        int err = 0;
        socklen_t len = sizeof(err);
        if (ready <= 0 ||
            ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) != 0 || err != 0) {
            ::close(fd);
            throw ConnectFailure("connect to " + host + ":" + std::to_string(port) +
                                 (ready <= 0 ? " timed out"
                                             : std::string(" failed: ") +
                                                   std::strerror(err)));
        }
    }
    ::fcntl(fd, F_SETFL, flags);
    fd_ = fd;
}

bool TcpClient::send_all(const std::string& bytes) {
    if (fd_ < 0) return false;
    size_t sent = 0;
    while (sent < bytes.size()) {
        ssize_t n =
            ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n <= 0) return false;
        sent += static_cast<size_t>(n);
    }
    return true;
}

TcpClient::ReadResult TcpClient::read_until(const std::string& terminator,
                                            int timeout_ms) {
    ReadResult res;
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::milliseconds(timeout_ms);
    char chunk[1024];
    for (;;) {
        auto pos = buffer_.find(terminator);
        if (pos != std::string::npos) {
            size_t end = pos + terminator.size();
            res.bytes = buffer_.substr(0, end);
            buffer_.erase(0, end);
            res.status = ReadStatus::ok;
            return res;
        }
        auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
                             deadline - std::chrono::steady_clock::now())
                             .count();
        if (remaining <= 0) {
            res.status = ReadStatus::timeout;
            res.bytes = buffer_;
            buffer_.clear();
            return res;
        }
        pollfd pfd{fd_, POLLIN, 0};
        int ready = ::poll(&pfd, 1, static_cast<int>(remaining));
        if (ready <= 0) continue;  // loop re-checks the deadline
        ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
        if (n == 0) {
            res.status = ReadStatus::closed;
            res.bytes = buffer_;
            buffer_.clear();
            return res;
        }
        if (n < 0) {
            if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
            res.status = ReadStatus::closed;
            res.bytes = buffer_;
            buffer_.clear();
            return res;
        }
        buffer_.append(chunk, static_cast<size_t>(n));
    }
}

// --- framing ----------------------------------------------------------------

bool expects_multiline(const grammar::IOGrammar& g, const std::string& server_nt) {
    std::set<std::string> visited;
    std::vector<std::string> stack{server_nt};
    auto dotted = [](const std::string& text) {
        return text.find("\r\n.\r\n") != std::string::npos || text == ".\r\n";
    };
    while (!stack.empty()) {
        std::string name = stack.back();
        stack.pop_back();
        if (!visited.insert(name).second) continue;
        if (const grammar::TerminalDef* def = g.find_terminal(name)) {
            if (def->kind == grammar::TerminalDef::Kind::literal && dotted(def->text)) {
                return true;
            }
            continue;
        }
        const grammar::Production* p = g.find(name);
        if (!p) continue;
        for (const grammar::Alternative& alt : p->alternatives) {
            for (const grammar::Symbol& sym : alt.symbols) {
                if (sym.kind == grammar::Symbol::Kind::literal) {
                    if (dotted(sym.text)) return true;
                } else if (sym.kind == grammar::Symbol::Kind::nonterminal) {
                    stack.push_back(sym.text);
                }
            }
        }
    }
    return false;
}

// --- session runner ----------------------------------------------------------

namespace {

std::string first_word(const std::string& bytes) {
    auto tokens = util::whitespace_tokens(bytes);
    return tokens.empty() ? "" : util::to_upper(tokens[0]);
}

// Constraint check over one observed reply: every production instance inside
// the spliced subtree evaluates the clauses it owns, with field fallback to
// the whole session tree.
std::optional<derivation::Violation> reply_violation(
    const grammar::IOGrammar& g, const derivation::TreeNode& session_root,
    const derivation::TreeNode& reply) {
    if (!reply.symbol.empty() && !reply.terminal) {
        for (const grammar::AttachedConstraint* ac : g.constraints_of(reply.symbol)) {
            auto outcome = derivation::eval_constraint(reply, session_root, ac->expr);
            if (!outcome.satisfied) {
                return derivation::Violation{reply.symbol,
                                             constraint::to_string(ac->expr),
                                             outcome.used_fallback};
            }
        }
    }
    for (const derivation::TreeNode& child : reply.children) {
        if (auto v = reply_violation(g, session_root, child)) return v;
    }
    return std::nullopt;
}

}  // namespace

Trace run_session(const grammar::IOGrammar& g, const graph::Mtp& mtp,
                  const SutConfig& sut, uint64_t seed) {
    validate(sut);

    Trace trace;
    trace.mtp_target = mtp.target;
    trace.commands = mtp.commands();
    trace.seed = seed;

    derivation::TreeNode session = derivation::derive_for_commands(g, trace.commands, seed);
    auto msgs = derivation::messages(session);

    TcpClient client;
    client.connect(sut.host, sut.port, sut.connect_timeout_ms);

    int ts = 0;
    bool failed = false;
    for (size_t i = 0; i < msgs.size(); ++i) {
        const derivation::Message& msg = msgs[i];
        Exchange ex;
        ex.ts = ts++;
        if (msg.party == grammar::Party::client) {
            ex.direction = Direction::client_to_server;
            ex.bytes = msg.bytes;
            ex.symbol = first_word(msg.bytes);
            if (!client.send_all(msg.bytes)) {
                ex.bytes.clear();  // nothing reached the wire
                ex.verdict = Verdict::disconnect;
                trace.exchanges.push_back(ex);
                for (size_t j = i + 1; j < msgs.size(); ++j) {
                    Exchange rest;
                    rest.ts = ts++;
                    rest.direction = msgs[j].party == grammar::Party::client
                                         ? Direction::client_to_server
                                         : Direction::server_to_client;
                    rest.symbol = msgs[j].party == grammar::Party::client
                                      ? first_word(msgs[j].bytes)
                                      : msgs[j].symbol;
                    rest.verdict = Verdict::disconnect;
                    trace.exchanges.push_back(rest);
                }
                failed = true;
                break;
            }
            ex.verdict = Verdict::accepted;
            trace.exchanges.push_back(ex);
            continue;
        }

        // Server reply expected here.
        ex.direction = Direction::server_to_client;
        ex.symbol = msg.symbol;
        std::string terminator =
            expects_multiline(g, msg.symbol) ? "\r\n.\r\n" : "\r\n";
        auto got = client.read_until(terminator, sut.read_timeout_ms);
        ex.bytes = got.bytes;
        if (got.status == TcpClient::ReadStatus::timeout) {
            ex.verdict = Verdict::timeout;
            trace.exchanges.push_back(ex);
            failed = true;
            break;
        }
        if (got.status == TcpClient::ReadStatus::closed) {
            ex.verdict = Verdict::disconnect;
            trace.exchanges.push_back(ex);
            for (size_t j = i + 1; j < msgs.size(); ++j) {
                Exchange rest;
                rest.ts = ts++;
                rest.direction = msgs[j].party == grammar::Party::client
                                     ? Direction::client_to_server
                                     : Direction::server_to_client;
                rest.symbol = msgs[j].party == grammar::Party::client
                                  ? first_word(msgs[j].bytes)
                                  : msgs[j].symbol;
                rest.verdict = Verdict::disconnect;
                trace.exchanges.push_back(rest);
            }
            failed = true;
            break;
        }

        derivation::TreeNode observed;
        try {
            observed = derivation::parse_message(g, msg.symbol, got.bytes,
                                                 grammar::Party::server);
        } catch (const ParseFailure&) {
            ex.verdict = Verdict::parse_failure;
            trace.exchanges.push_back(ex);
            failed = true;
            break;
        }
        derivation::splice(session, msg.path, std::move(observed));
        const derivation::TreeNode* spliced = derivation::node_at(session, msg.path);
        bool violated = reply_violation(g, session, *spliced).has_value();
        // Wrapper productions above the reply get their clauses checked once
        // their whole span has been observed: a rule that covers both a
        // request and its reply (say, one demanding the reply echo the
        // requested message number) can only be judged after this reply if no
        // later message still falls inside it.
        for (size_t k = 0; k < msg.path.size() && !violated; ++k) {
            std::vector<int> prefix(msg.path.begin(), msg.path.begin() + k);
            bool complete = true;
            for (size_t j = i + 1; j < msgs.size() && complete; ++j) {
                if (msgs[j].path.size() >= prefix.size() &&
                    std::equal(prefix.begin(), prefix.end(), msgs[j].path.begin())) {
                    complete = false;
                }
            }
            if (!complete) continue;
            const derivation::TreeNode* anc = derivation::node_at(session, prefix);
            if (!anc || anc->symbol.empty() || anc->terminal) continue;
            for (const grammar::AttachedConstraint* ac : g.constraints_of(anc->symbol)) {
                auto outcome = derivation::eval_constraint(*anc, session, ac->expr);
                if (!outcome.satisfied) {
                    violated = true;
                    break;
                }
            }
        }
        if (violated) {
            ex.verdict = Verdict::constraint_violation;
            trace.exchanges.push_back(ex);
            failed = true;
            break;
        }
        ex.verdict = Verdict::accepted;
        trace.exchanges.push_back(ex);
    }

    trace.terminal_state_reached = !failed;
    return trace;
}

// --- classification ----------------------------------------------------------

ErrorClass classify_error(const Trace& trace, const grammar::IOGrammar& g,
                          const std::vector<std::vector<std::string>>& mandated_forms) {
    for (const Exchange& e : trace.exchanges) {
        if (e.verdict == Verdict::parse_failure) return ErrorClass::GSyn;
    }
    for (const Exchange& e : trace.exchanges) {
        if (e.verdict == Verdict::constraint_violation) return ErrorClass::TMism;
    }
    if (!trace.terminal_state_reached) return ErrorClass::TMism;
    for (const std::vector<std::string>& form : mandated_forms) {
        if (!derivation::check_generatable(g, form)) return ErrorClass::GMiss;
    }
    return ErrorClass::None;
}

std::optional<FailureCause> label_failure_cause(const Trace& trace,
                                                const SutCapabilities& caps) {
    size_t failed = trace.exchanges.size();
    for (size_t i = 0; i < trace.exchanges.size(); ++i) {
        if (trace.exchanges[i].verdict != Verdict::accepted) {
            failed = i;
            break;
        }
    }
    if (failed == trace.exchanges.size() && trace.terminal_state_reached) {
        return std::nullopt;
    }

    std::string command;
    for (size_t i = failed; i-- > 0;) {
        if (trace.exchanges[i].direction == Direction::client_to_server) {
            command = trace.exchanges[i].symbol;
            break;
        }
    }
    std::string reply = failed < trace.exchanges.size()
                            ? util::to_lower(trace.exchanges[failed].bytes)
                            : std::string();

    for (const std::string& tls_cmd : caps.tls_required_commands) {
        if (util::iequals(command, tls_cmd)) return FailureCause::NeedsTls;
    }
    for (const std::string& marker : caps.unrecognized_markers) {
        if (reply.find(util::to_lower(marker)) != std::string::npos) {
            return FailureCause::ImplMissing;
        }
    }
    for (const std::string& marker : caps.data_state_markers) {
        if (reply.find(util::to_lower(marker)) != std::string::npos) {
            return FailureCause::DataState;
        }
    }
    return FailureCause::GrammarBug;
}

// --- elements ----------------------------------------------------------------

namespace {

// Message types are named by the tagged nonterminal, minus the party prefix
// its author used. Keying on the rule name (not the keyword inside) keeps
// argument variants of one command — LIST with and without a message
// number, say — distinct types.
std::string message_label(const std::string& name,
                          std::initializer_list<const char*> prefixes) {
    std::string n = util::to_lower(name);
    for (const char* prefix : prefixes) {
        if (util::starts_with(n, prefix)) return n.substr(std::strlen(prefix));
    }
    return n;
}

void push_unique(std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
}

}  // namespace

GoldenElements extract_elements(const grammar::IOGrammar& g) {
    GoldenElements out;
    for (const std::string& name : grammar::tagged_names(g, grammar::Party::client)) {
        push_unique(out.client_message_types, message_label(name, {"c_", "client_"}));
    }
    for (const std::string& name : grammar::tagged_names(g, grammar::Party::server)) {
        push_unique(out.server_message_types, message_label(name, {"s_", "server_"}));
    }
    for (const grammar::AttachedConstraint& ac : g.constraints) {
        std::string text = constraint::to_string(ac.expr);
        if (constraint::kind_of(ac.expr) == constraint::ConstraintKind::independent) {
            push_unique(out.independent_constraints, text);
        } else {
            push_unique(out.dependent_constraints, text);
        }
    }
    return out;
}

std::string golden_elements_to_json(const GoldenElements& e) {
    return json{{"client_message_types", e.client_message_types},
                {"server_message_types", e.server_message_types},
                {"independent_constraints", e.independent_constraints},
                {"dependent_constraints", e.dependent_constraints}}
               .dump(2) +
           "\n";
}

GoldenElements golden_elements_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaViolation(std::string("golden elements: not valid JSON: ") + e.what());
    }
    GoldenElements out;
    auto read = [&](const char* key, std::vector<std::string>& into) {
        if (!j.contains(key) || !j.at(key).is_array()) {
            throw SchemaViolation(std::string("golden elements: missing list ") + key);
        }
        for (const json& item : j.at(key)) {
            if (!item.is_string()) {
                throw SchemaViolation(std::string("golden elements: ") + key +
                                      " entries must be strings");
            }
            into.push_back(item.get<std::string>());
        }
    };
    read("client_message_types", out.client_message_types);
    read("server_message_types", out.server_message_types);
    read("independent_constraints", out.independent_constraints);
    read("dependent_constraints", out.dependent_constraints);
    return out;
}

// --- metrics -----------------------------------------------------------------

std::string PrCount::precision_display() const {
    if (ours == 0) return "-";
    return std::to_string(intersection) + "/" + std::to_string(ours);
}

std::string PrCount::recall_display() const {
    if (golden == 0) return "-";
    return std::to_string(intersection) + "/" + std::to_string(golden);
}

namespace {

// A command is issued when bytes left the client; it is accepted when the
// next server exchange says so (or the session finished cleanly with no
// reply owed).
void fold_commands(const Trace& t, Ratio& ma) {
    for (size_t i = 0; i < t.exchanges.size(); ++i) {
        const Exchange& e = t.exchanges[i];
        if (e.direction != Direction::client_to_server || e.bytes.empty()) continue;
        ma.den += 1;
        bool accepted = t.terminal_state_reached;
        for (size_t j = i + 1; j < t.exchanges.size(); ++j) {
            if (t.exchanges[j].direction == Direction::server_to_client) {
                accepted = t.exchanges[j].verdict == Verdict::accepted;
                break;
            }
        }
        if (accepted) ma.num += 1;
    }
}

std::string normalize_constraint_text(const std::string& text) {
    try {
        return constraint::to_string(constraint::parse_constraint(text));
    } catch (const Error&) {
        return util::trim(text);
    }
}

PrCount pr_of(std::vector<std::string> ours, std::vector<std::string> golden,
              bool constraints) {
    if (constraints) {
        for (std::string& s : ours) s = normalize_constraint_text(s);
        for (std::string& s : golden) s = normalize_constraint_text(s);
    }
    std::set<std::string> ours_set(ours.begin(), ours.end());
    std::set<std::string> golden_set(golden.begin(), golden.end());
    PrCount pr;
    pr.ours = static_cast<int>(ours_set.size());
    pr.golden = static_cast<int>(golden_set.size());
    for (const std::string& s : ours_set) {
        if (golden_set.count(s)) pr.intersection += 1;
    }
    return pr;
}

}  // namespace

MetricsReport compute_metrics(const std::vector<Trace>& traces,
                              const grammar::IOGrammar& ours,
                              const GoldenElements& golden,
                              const std::vector<graph::Mtp>& canonical_routes) {
    if (traces.empty()) throw EmptyInput("no traces to score");

    std::set<std::vector<std::string>> canonical;
    for (const graph::Mtp& m : canonical_routes) canonical.insert(m.commands());

    MetricsReport report;
    for (const Trace& t : traces) {
        bool on_canonical = canonical.count(t.commands) > 0;
        fold_commands(t, report.message_acceptance);
        if (on_canonical) fold_commands(t, report.rtc_ma.canonical);
        report.trace_acceptance.den += 1;
        if (t.accepted()) report.trace_acceptance.num += 1;
        if (on_canonical) {
            report.rtc_ta.canonical.den += 1;
            if (t.accepted()) report.rtc_ta.canonical.num += 1;
        }
        if (t.failure_cause) {
            report.failure_causes[failure_cause_name(*t.failure_cause)] += 1;
        }
    }
    report.rtc_ma.overall = report.message_acceptance;
    report.rtc_ta.overall = report.trace_acceptance;

    GoldenElements mine = extract_elements(ours);
    report.elements["client_message_types"] =
        pr_of(mine.client_message_types, golden.client_message_types, false);
    report.elements["server_message_types"] =
        pr_of(mine.server_message_types, golden.server_message_types, false);
    report.elements["independent_constraints"] =
        pr_of(mine.independent_constraints, golden.independent_constraints, true);
    report.elements["dependent_constraints"] =
        pr_of(mine.dependent_constraints, golden.dependent_constraints, true);

    // The canonical view may never count anything the overall view missed.
    if (report.rtc_ma.canonical.den > report.rtc_ma.overall.den ||
        report.rtc_ma.canonical.num > report.rtc_ma.overall.num ||
        report.rtc_ta.canonical.den > report.rtc_ta.overall.den ||
        report.rtc_ta.canonical.num > report.rtc_ta.overall.num) {
        throw Error("canonical denominators exceed overall ones");
    }
    return report;
}

// --- artifacts ---------------------------------------------------------------

std::string trace_to_json(const Trace& t) {
    json exchanges = json::array();
    for (const Exchange& e : t.exchanges) {
        exchanges.push_back({{"direction", direction_name(e.direction)},
                             {"bytes_b64", util::base64_encode(e.bytes)},
                             {"ts", e.ts},
                             {"verdict", verdict_name(e.verdict)},
                             {"symbol", e.symbol}});
    }
    json j{{"mtp", t.mtp_target},
           {"commands", t.commands},
           {"seed", t.seed},
           {"terminal_state_reached", t.terminal_state_reached},
           {"failure_cause",
            t.failure_cause ? json(failure_cause_name(*t.failure_cause)) : json(nullptr)},
           {"exchanges", exchanges}};
    return j.dump(2) + "\n";
}

Trace trace_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaViolation(std::string("trace: not valid JSON: ") + e.what());
    }
    Trace t;
    try {
        t.mtp_target = j.at("mtp").get<std::string>();
        t.commands = j.at("commands").get<std::vector<std::string>>();
        t.seed = j.at("seed").get<uint64_t>();
        t.terminal_state_reached = j.at("terminal_state_reached").get<bool>();
        if (!j.at("failure_cause").is_null()) {
            t.failure_cause = failure_cause_from(j.at("failure_cause").get<std::string>());
        }
        for (const json& je : j.at("exchanges")) {
            Exchange e;
            e.direction = direction_from(je.at("direction").get<std::string>());
            e.bytes = util::base64_decode(je.at("bytes_b64").get<std::string>());
            e.ts = je.at("ts").get<int>();
            e.verdict = verdict_from(je.at("verdict").get<std::string>());
            e.symbol = je.value("symbol", std::string());
            t.exchanges.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw SchemaViolation(std::string("trace: missing or mistyped field: ") + e.what());
    }
    return t;
}

namespace {

json ratio_json(const Ratio& r) {
    return {{"accepted", r.num}, {"total", r.den}, {"ratio", r.value()}};
}

json rtc_json(const RtcView& v) {
    return {{"overall", ratio_json(v.overall)},
            {"canonical", ratio_json(v.canonical)},
            {"quotient", v.quotient()}};
}

}  // namespace

std::string metrics_to_json(const MetricsReport& m) {
    json elements = json::object();
    for (const auto& [kind, pr] : m.elements) {
        elements[kind] = {{"intersection", pr.intersection},
                          {"ours", pr.ours},
                          {"golden", pr.golden},
                          {"precision", pr.precision()},
                          {"recall", pr.recall()},
                          {"precision_display", pr.precision_display()},
                          {"recall_display", pr.recall_display()}};
    }
    json j{{"message_acceptance", ratio_json(m.message_acceptance)},
           {"trace_acceptance", ratio_json(m.trace_acceptance)},
           {"rtc_ma", rtc_json(m.rtc_ma)},
           {"rtc_ta", rtc_json(m.rtc_ta)},
           {"elements", elements},
           {"failure_causes", m.failure_causes}};
    return j.dump(2) + "\n";
}

void write_run_artifacts(const std::filesystem::path& run_dir,
                         const std::vector<Trace>& traces, const MetricsReport& m) {
    std::error_code ec;
    std::filesystem::create_directories(run_dir, ec);
    if (ec) throw IoError("cannot create " + run_dir.string() + ": " + ec.message());
    for (size_t i = 0; i < traces.size(); ++i) {
        util::write_file_atomic(run_dir / ("trace_" + std::to_string(i) + ".json"),
                                trace_to_json(traces[i]));
    }
    util::write_file_atomic(run_dir / "metrics.json", metrics_to_json(m));
}

}  // namespace specforge::harness
