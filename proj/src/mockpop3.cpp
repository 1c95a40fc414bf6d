#include "specforge/mockpop3.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

#include "specforge/errors.hpp"
#include "specforge/util.hpp"

namespace specforge::mockpop3 {

namespace {

bool parse_msg_number(const std::string& arg, int& out) {
    if (arg.empty() || arg.size() > 9) return false;
    for (char c : arg) {
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    }
    out = std::stoi(arg);
    return true;
}

}  // namespace

SessionLogic::SessionLogic(const MockConfig& cfg)
    : cfg_(cfg), deleted_(cfg.octets.size(), false) {}

std::string SessionLogic::greeting() const { return cfg_.banner + "\r\n"; }

int SessionLogic::message_count() const {
    int n = 0;
    for (bool d : deleted_) {
        if (!d) ++n;
    }
    return n;
}

int SessionLogic::total_octets() const {
    int sum = 0;
    for (size_t i = 0; i < deleted_.size(); ++i) {
        if (!deleted_[i]) sum += cfg_.octets[i];
    }
    return sum;
}

std::string SessionLogic::handle(const std::string& line, bool& close_after) {
    close_after = false;
    auto tokens = util::whitespace_tokens(line);
    std::string verb = tokens.empty() ? "" : util::to_upper(tokens[0]);
    std::string arg = tokens.size() > 1 ? tokens[1] : "";

    if (verb == "QUIT") {
        close_after = true;
        return "+OK Logging out.\r\n";
    }

    if (state_ == State::authorization) {
        if (verb == "USER") {
            if (arg.empty()) return "-ERR Missing username.\r\n";
            have_user_ = true;
            return "+OK\r\n";
        }
        if (verb == "PASS") {
            if (!have_user_) return "-ERR No username given.\r\n";
            state_ = State::transaction;
            return "+OK Logged in.\r\n";
        }
        return "-ERR Unknown command.\r\n";
    }

    // TRANSACTION state.
    const int count = static_cast<int>(deleted_.size());
    auto in_range = [&](int n) { return n >= 1 && n <= count; };

    if (verb == "STAT") {
        return "+OK " + std::to_string(message_count()) + " " +
               std::to_string(total_octets()) + "\r\n";
    }
    if (verb == "LIST") {
        if (arg.empty()) {
            std::string out = "+OK " + std::to_string(message_count()) +
                              " messages (" + std::to_string(total_octets()) +
                              " octets)\r\n";
            for (int i = 1; i <= count; ++i) {
                if (deleted_[i - 1]) continue;
                out += std::to_string(i) + " " + std::to_string(cfg_.octets[i - 1]) +
                       "\r\n";
            }
            out += ".\r\n";
            return out;
        }
        int n = 0;
        if (!parse_msg_number(arg, n)) return "-ERR Invalid message number.\r\n";
        if (!in_range(n) || deleted_[n - 1]) return "-ERR No such message.\r\n";
        return "+OK " + std::to_string(n) + " " + std::to_string(cfg_.octets[n - 1]) +
               "\r\n";
    }
    if (verb == "RETR") {
        int n = 0;
        if (!parse_msg_number(arg, n)) return "-ERR Invalid message number.\r\n";
        if (!in_range(n) || deleted_[n - 1]) return "-ERR No such message.\r\n";
        std::string out = "+OK " + std::to_string(cfg_.octets[n - 1]) + " octets\r\n";
        out += "Subject: mock message " + std::to_string(n) + "\r\n";
        out += "\r\n";
        out += "This is the body of message " + std::to_string(n) + ".\r\n";
        out += ".\r\n";
        return out;
    }
    if (verb == "DELE") {
        int n = 0;
        if (!parse_msg_number(arg, n)) return "-ERR Invalid message number.\r\n";
        if (!in_range(n)) return "-ERR No such message.\r\n";
        if (deleted_[n - 1]) return "-ERR Message is deleted.\r\n";
        deleted_[n - 1] = true;
        return "+OK Marked to be deleted.\r\n";
    }
    if (verb == "NOOP") return "+OK\r\n";
    if (verb == "RSET") {
        std::fill(deleted_.begin(), deleted_.end(), false);
        return "+OK\r\n";
    }
    return "-ERR Unknown command.\r\n";
}

MockPop3Server::MockPop3Server(MockConfig cfg) : cfg_(std::move(cfg)) {}

MockPop3Server::~MockPop3Server() { stop(); }

void MockPop3Server::start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw BindFailure("cannot create listening socket");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(cfg_.port));
    if (::inet_pton(AF_INET, cfg_.host.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw BindFailure("not an IPv4 address: " + cfg_.host);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        std::string why = std::strerror(errno);
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw BindFailure("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port) +
                          ": " + why);
    }
    if (::listen(listen_fd_, 16) != 0) {
        std::string why = std::strerror(errno);
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw BindFailure("cannot listen: " + why);
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);

    running_.store(true);
    acceptor_ = std::thread([this] { accept_loop(); });
}

void MockPop3Server::stop() {
    if (!running_.exchange(false)) {
        if (acceptor_.joinable()) acceptor_.join();
        return;
    }
    if (listen_fd_ >= 0) {
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
    if (acceptor_.joinable()) acceptor_.join();
    for (std::thread& t : sessions_) {
        if (t.joinable()) t.join();
    }
    sessions_.clear();
}

void MockPop3Server::accept_loop() {
    while (running_.load()) {
        pollfd pfd{listen_fd_, POLLIN, 0};
        int rc = ::poll(&pfd, 1, 100);
        if (!running_.load()) break;
        if (rc <= 0) continue;
        int client = ::accept(listen_fd_, nullptr, nullptr);
        if (client < 0) continue;
        sessions_.emplace_back([this, client] { serve(client); });
    }
}

void MockPop3Server::serve(int client_fd) {
    timeval tv{};
    tv.tv_usec = 200 * 1000;  // wake regularly so stop() can win
    ::setsockopt(client_fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));

    SessionLogic session(cfg_);
    auto send_all = [&](const std::string& bytes) {
        size_t sent = 0;
        while (sent < bytes.size()) {
            ssize_t n = ::send(client_fd, bytes.data() + sent, bytes.size() - sent,
                               MSG_NOSIGNAL);
            if (n <= 0) return false;
            sent += static_cast<size_t>(n);
        }
        return true;
    };

    if (!send_all(session.greeting())) {
        ::close(client_fd);
        return;
    }

    std::string buffer;
    char chunk[512];
    bool open = true;
    while (open && running_.load()) {
        auto nl = buffer.find('\n');
        if (nl == std::string::npos) {
            ssize_t n = ::recv(client_fd, chunk, sizeof(chunk), 0);
            if (n == 0) break;  // peer closed
            if (n < 0) {
                if (errno == EAGAIN || errno == EWOULDBLOCK) continue;
                break;
            }
            buffer.append(chunk, static_cast<size_t>(n));
            if (buffer.size() > 16384) break;  // nobody sane sends lines this long
            continue;
        }
        std::string line = buffer.substr(0, nl);
        buffer.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();

        bool close_after = false;
        std::string reply = session.handle(line, close_after);
        if (!send_all(reply)) break;
        if (close_after) open = false;
    }
    ::close(client_fd);
}

}  // namespace specforge::mockpop3
