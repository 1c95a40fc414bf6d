#pragma once

#include <atomic>
#include <string>
#include <thread>
#include <vector>

// A deterministic in-process POP3 server for desk-scale runs: the RFC 1939
// command subset over a fixed eight-message mailbox, one thread per
// connection, no timing or randomness in any reply.
namespace specforge::mockpop3 {

struct MockConfig {
    std::string host = "127.0.0.1";
    int port = 11000;  // 0 = pick an ephemeral port
    std::string banner = "+OK Dovecot ready.";
    // Message sizes in octets; message 8 measures 383 so the classic
    // LIST 8 → "+OK 8 383" exchange holds.
    std::vector<int> octets = {120, 250, 311, 98, 400, 275, 333, 383};
};

class MockPop3Server {
public:
    explicit MockPop3Server(MockConfig cfg = {});
    ~MockPop3Server();
    MockPop3Server(const MockPop3Server&) = delete;
    MockPop3Server& operator=(const MockPop3Server&) = delete;

    // Binds, listens, and starts accepting; throws BindFailure.
    void start();
    void stop();
    bool running() const { return running_.load(); }
    // Actual port (differs from config when an ephemeral port was asked for).
    int port() const { return port_; }
    const MockConfig& config() const { return cfg_; }

private:
    void accept_loop();
    void serve(int client_fd);

    MockConfig cfg_;
    int listen_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> running_{false};
    std::thread acceptor_;
    std::vector<std::thread> sessions_;
};

// One session's reply logic, exposed so tests can drive it without sockets:
// feed one command line (without CRLF), get the full reply bytes (with CRLF,
// including multi-line bodies and their terminator).
class SessionLogic {
public:
    explicit SessionLogic(const MockConfig& cfg);
    std::string greeting() const;
    // Returns the reply; sets `close_after` for QUIT.
    std::string handle(const std::string& line, bool& close_after);

private:
    enum class State { authorization, transaction };
    const MockConfig& cfg_;
    State state_ = State::authorization;
    bool have_user_ = false;
    std::vector<bool> deleted_;

    int message_count() const;
    int total_octets() const;
};

}  // namespace specforge::mockpop3
