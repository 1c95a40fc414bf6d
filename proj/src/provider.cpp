#include "specforge/provider.hpp"

#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "specforge/errors.hpp"
#include "specforge/util.hpp"

namespace specforge::provider {

using nlohmann::json;

namespace {

json request_json(const LlmRequest& req) {
    return json{{"attempt", req.attempt},
                {"max_tokens", req.max_tokens},
                {"model_id", req.model_id},
                {"prompt",
                 {{"objective", req.prompt.objective},
                  {"requirements", req.prompt.requirements},
                  {"input_format", req.prompt.input_format},
                  {"output_format", req.prompt.output_format},
                  {"payload", req.prompt.payload}}},
                {"temperature", req.temperature}};
}

}  // namespace

std::string canonical_request(const LlmRequest& req) {
    // nlohmann objects iterate in key order, so dump() is already canonical.
    return request_json(req).dump();
}

std::string request_hash(const LlmRequest& req) {
    return util::sha256_hex(canonical_request(req));
}

std::string fixture_json(const LlmRequest& req, const LlmResponse& resp) {
    json j{{"request", request_json(req)}, {"response", {{"text", resp.text}}}};
    return j.dump(2) + "\n";
}

LlmResponse response_from_fixture(const std::string& json_text,
                                  const std::string& whence) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ProviderError(whence + ": not valid JSON: " + e.what());
    }
    if (!j.contains("response") || !j.at("response").contains("text") ||
        !j.at("response").at("text").is_string()) {
        throw ProviderError(whence + ": missing response.text");
    }
    LlmResponse resp;
    resp.text = j.at("response").at("text").get<std::string>();
    return resp;
}

// --- token bucket ------------------------------------------------------------

TokenBucket::TokenBucket(double rate_per_second, int burst, Clock clock,
                         Sleeper sleeper)
    : rate_(rate_per_second > 0 ? rate_per_second : 1.0),
      capacity_(burst >= 1 ? burst : 1),
      tokens_(capacity_),
      clock_(clock ? std::move(clock)
                   : [] { return std::chrono::steady_clock::now(); }),
      sleeper_(sleeper ? std::move(sleeper)
                       : [](std::chrono::milliseconds d) {
                             std::this_thread::sleep_for(d);
                         }) {
    last_ = clock_();
}

void TokenBucket::acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    for (;;) {
        auto now = clock_();
        double elapsed =
            std::chrono::duration_cast<std::chrono::duration<double>>(now - last_)
                .count();
        last_ = now;
        tokens_ = std::min(capacity_, tokens_ + elapsed * rate_);
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        auto wait = std::chrono::milliseconds(
            static_cast<long>((1.0 - tokens_) / rate_ * 1000.0) + 1);
        lock.unlock();
        sleeper_(wait);
        lock.lock();
    }
}

// --- HTTP provider -----------------------------------------------------------

HttpProvider::HttpProvider(Options options)
    : options_(std::move(options)), bucket_(options_.requests_per_second, 1) {}

LlmResponse HttpProvider::complete(const LlmRequest& req) {
    const char* key = std::getenv(options_.api_key_env.c_str());
    if (!key || !*key) {
        throw ProviderError("environment variable " + options_.api_key_env +
                            " is not set; the live provider needs it for "
                            "authentication");
    }
    bucket_.acquire();

    // Chat-completions wire shape: template blocks become the system
    // message, the payload is the user message.
    std::string system = req.prompt.objective;
    for (const std::string* part :
         {&req.prompt.requirements, &req.prompt.input_format,
          &req.prompt.output_format}) {
        if (!part->empty()) {
            if (!system.empty()) system += "\n\n";
            system += *part;
        }
    }
    json body{{"model", req.model_id},
              {"messages",
               {{{"role", "system"}, {"content", system}},
                {{"role", "user"}, {"content", req.prompt.payload}}}},
              {"temperature", req.temperature},
              {"max_tokens", req.max_tokens}};

    httplib::Client client(options_.base_url);
    client.set_connection_timeout(options_.timeout_seconds, 0);
    client.set_read_timeout(options_.timeout_seconds, 0);
    httplib::Headers headers{{"Authorization", std::string("Bearer ") + key}};

    auto start = std::chrono::steady_clock::now();
    auto res = client.Post(options_.path, headers, body.dump(), "application/json");
    auto end = std::chrono::steady_clock::now();
    if (!res) {
        throw ProviderError("request to " + options_.base_url + options_.path +
                            " failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw ProviderError("provider returned HTTP " + std::to_string(res->status) +
                            ": " + res->body.substr(0, 300));
    }
    json j;
    try {
        j = json::parse(res->body);
    } catch (const json::exception& e) {
        throw ProviderError(std::string("provider response is not JSON: ") + e.what());
    }
    LlmResponse resp;
    try {
        resp.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        throw ProviderError("provider response lacks choices[0].message.content");
    }
    if (j.contains("usage")) {
        resp.prompt_tokens = j["usage"].value("prompt_tokens", 0);
        resp.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    resp.latency_ms = static_cast<long>(
        std::chrono::duration_cast<std::chrono::milliseconds>(end - start).count());
    return resp;
}

// --- replay / record / cache -------------------------------------------------

ReplayProvider::ReplayProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}

LlmResponse ReplayProvider::complete(const LlmRequest& req) {
    auto file = dir_ / (request_hash(req) + ".json");
    if (!std::filesystem::exists(file)) {
        throw ProviderError("replay fixture missing: " + file.string());
    }
    return response_from_fixture(util::read_file(file), file.string());
}

RecordingProvider::RecordingProvider(LlmProvider& inner, std::filesystem::path dir)
    : inner_(inner), dir_(std::move(dir)) {}

std::string RecordingProvider::name() const { return "record(" + inner_.name() + ")"; }

LlmResponse RecordingProvider::complete(const LlmRequest& req) {
    LlmResponse resp = inner_.complete(req);
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
    util::write_file_atomic(dir_ / (request_hash(req) + ".json"),
                            fixture_json(req, resp));
    return resp;
}

CachingProvider::CachingProvider(LlmProvider& inner, std::filesystem::path dir)
    : inner_(inner), dir_(std::move(dir)) {}

std::string CachingProvider::name() const { return "cache(" + inner_.name() + ")"; }

LlmResponse CachingProvider::complete(const LlmRequest& req) {
    auto file = dir_ / (request_hash(req) + ".json");
    if (std::filesystem::exists(file)) {
        return response_from_fixture(util::read_file(file), file.string());
    }
    LlmResponse resp = inner_.complete(req);
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
    util::write_file_atomic(file, fixture_json(req, resp));
    return resp;
}

FunctionProvider::FunctionProvider(Fn fn, std::string name)
    : fn_(std::move(fn)), name_(std::move(name)) {}

LlmResponse FunctionProvider::complete(const LlmRequest& req) {
    ++calls_;
    return fn_(req);
}

std::filesystem::path default_cache_dir(const std::filesystem::path& output_root) {
    if (const char* env = std::getenv("SPECFORGE_CACHE_DIR"); env && *env) {
        return std::filesystem::path(env);
    }
    return output_root / ".cache" / "llm";
}

// --- prompt templates --------------------------------------------------------

PromptTemplate load_prompt(const std::filesystem::path& file) {
    std::string text = util::read_file(file);
    struct Block {
        const char* heading;
        std::string* slot;
    };
    PromptTemplate tpl;
    Block blocks[] = {{"## Objective", &tpl.objective},
                      {"## Requirements", &tpl.requirements},
                      {"## Input", &tpl.input_format},
                      {"## Output", &tpl.output_format}};

    auto lines = util::split_lines(text);
    std::string* current = nullptr;
    std::vector<std::string> buf;
    auto flush = [&]() {
        if (!current) return;
        while (!buf.empty() && buf.back().empty()) buf.pop_back();
        while (!buf.empty() && buf.front().empty()) buf.erase(buf.begin());
        *current = util::join(buf, "\n");
        buf.clear();
    };
    for (const std::string& line : lines) {
        bool heading = false;
        for (Block& b : blocks) {
            if (util::trim(line) == b.heading) {
                flush();
                current = b.slot;
                heading = true;
                break;
            }
        }
        if (!heading && current) buf.push_back(line);
    }
    flush();
    for (const Block& b : blocks) {
        if (b.slot->empty()) {
            throw IoError("prompt template " + file.string() + ": missing block \"" +
                          b.heading + "\"");
        }
    }
    return tpl;
}

LlmRequest make_request(const PromptTemplate& tpl, const std::string& payload,
                        const std::string& model_id, double temperature,
                        int max_tokens) {
    LlmRequest req;
    req.model_id = model_id;
    req.prompt.objective = tpl.objective;
    req.prompt.requirements = tpl.requirements;
    req.prompt.input_format = tpl.input_format;
    req.prompt.output_format = tpl.output_format;
    req.prompt.payload = payload;
    req.temperature = temperature;
    req.max_tokens = max_tokens;
    return req;
}

}  // namespace specforge::provider
