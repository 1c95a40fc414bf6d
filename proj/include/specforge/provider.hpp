#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>

// Language-model access. One interface, four implementations: a live HTTP
// chat-completions client, a deterministic replay provider fed from fixture
// files, a recording wrapper that captures live traffic into those fixtures,
// and a response cache. Requests are content-addressed by a SHA-256 hash of
// their canonical JSON encoding, so fixtures, cache entries, and recordings
// all share one key space and one file format.
namespace specforge::provider {

struct PromptBlocks {
    std::string objective;
    std::string requirements;
    std::string input_format;
    std::string output_format;
    std::string payload;
    bool operator==(const PromptBlocks&) const = default;
};

struct LlmRequest {
    std::string model_id;
    PromptBlocks prompt;
    double temperature = 0.0;
    int max_tokens = 4000;
    // Bumped when a schema-invalid response forces a re-issue; part of the
    // request identity so caches and fixtures can answer each attempt
    // differently.
    int attempt = 0;
    bool operator==(const LlmRequest&) const = default;
};

struct LlmResponse {
    std::string text;
    int prompt_tokens = 0;
    int completion_tokens = 0;
    long latency_ms = 0;
};

// Stable JSON encoding (sorted keys, fixed field set) and its SHA-256 hex
// digest — the cache/fixture key.
std::string canonical_request(const LlmRequest& req);
std::string request_hash(const LlmRequest& req);

// Fixture / cache-entry file body: {"request": ..., "response": {"text": ...}}.
std::string fixture_json(const LlmRequest& req, const LlmResponse& resp);
LlmResponse response_from_fixture(const std::string& json_text,
                                  const std::string& whence);

class LlmProvider {
public:
    virtual ~LlmProvider() = default;
    // Throws ProviderError on transport or fixture failures.
    virtual LlmResponse complete(const LlmRequest& req) = 0;
    virtual std::string name() const = 0;
};

// Client-side rate limiter: a token bucket refilled at `rate_per_second`
// holding at most `burst` tokens. Clock and sleep are injectable so tests
// run on virtual time. Thread-safe.
class TokenBucket {
public:
    using Clock = std::function<std::chrono::steady_clock::time_point()>;
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit TokenBucket(double rate_per_second, int burst = 1, Clock clock = nullptr,
                         Sleeper sleeper = nullptr);
    // Blocks until a token is available, then consumes it.
    void acquire();

private:
    double rate_;
    double capacity_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
    Clock clock_;
    Sleeper sleeper_;
    std::mutex mu_;
};

// Live chat-completions client. The bearer token comes from an environment
// variable (never from configuration files).
class HttpProvider : public LlmProvider {
public:
    struct Options {
        std::string base_url;  // e.g. "http://127.0.0.1:8089"
        std::string path = "/v1/chat/completions";
        std::string api_key_env = "SPECFORGE_API_KEY";
        double requests_per_second = 1.0;
        int timeout_seconds = 120;
    };
    explicit HttpProvider(Options options);
    LlmResponse complete(const LlmRequest& req) override;
    std::string name() const override { return "http"; }

private:
    Options options_;
    TokenBucket bucket_;
};

// Serves canned responses from `dir/<request-hash>.json`; a missing fixture
// is a ProviderError naming the exact path it looked for.
class ReplayProvider : public LlmProvider {
public:
    explicit ReplayProvider(std::filesystem::path dir);
    LlmResponse complete(const LlmRequest& req) override;
    std::string name() const override { return "replay"; }

private:
    std::filesystem::path dir_;
};

// Forwards to `inner` and writes every exchange as a replay fixture.
class RecordingProvider : public LlmProvider {
public:
    RecordingProvider(LlmProvider& inner, std::filesystem::path dir);
    LlmResponse complete(const LlmRequest& req) override;
    std::string name() const override;

private:
    LlmProvider& inner_;
    std::filesystem::path dir_;
};

// Answers repeated requests from `dir` without touching `inner` again.
// Entries use the fixture format, so a warm cache can be promoted to a
// replay fixture set by copying files.
class CachingProvider : public LlmProvider {
public:
    CachingProvider(LlmProvider& inner, std::filesystem::path dir);
    LlmResponse complete(const LlmRequest& req) override;
    std::string name() const override;

private:
    LlmProvider& inner_;
    std::filesystem::path dir_;
};

// Wraps a plain function; used by tests and fixture generators.
class FunctionProvider : public LlmProvider {
public:
    using Fn = std::function<LlmResponse(const LlmRequest&)>;
    explicit FunctionProvider(Fn fn, std::string name = "function");
    LlmResponse complete(const LlmRequest& req) override;
    std::string name() const override { return name_; }
    int calls() const { return calls_; }

private:
    Fn fn_;
    std::string name_;
    int calls_ = 0;
};

// Cache directory resolution: SPECFORGE_CACHE_DIR when set, else
// `<output_root>/.cache/llm`.
std::filesystem::path default_cache_dir(const std::filesystem::path& output_root);

// --- prompt templates --------------------------------------------------------

// A prompt file is markdown with four headed blocks:
//   ## Objective / ## Requirements / ## Input / ## Output
struct PromptTemplate {
    std::string objective;
    std::string requirements;
    std::string input_format;
    std::string output_format;
};

// Throws IoError when the file is unreadable or a block is missing.
PromptTemplate load_prompt(const std::filesystem::path& file);

LlmRequest make_request(const PromptTemplate& tpl, const std::string& payload,
                        const std::string& model_id, double temperature,
                        int max_tokens = 4000);

}  // namespace specforge::provider
