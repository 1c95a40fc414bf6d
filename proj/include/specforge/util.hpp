#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace specforge::util {

std::string sha256_hex(std::string_view data);
std::string base64_encode(std::string_view data);
std::string base64_decode(std::string_view data);

std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view text);  // keeps empty lines, strips \r
std::vector<std::string> split(std::string_view s, char delim);  // keeps empty fields
std::vector<std::string> whitespace_tokens(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);
bool iequals(std::string_view a, std::string_view b);

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, std::string_view data);
// write-to-temp + rename, so concurrent writers never expose partial files
void write_file_atomic(const std::filesystem::path& p, std::string_view data);

// mt19937_64 output reduced by modulo: biased in theory, stable across
// platforms in practice, which is what seeded reproducibility needs.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}
    uint64_t next() { return engine_(); }
    size_t below(size_t n) { return n == 0 ? 0 : static_cast<size_t>(engine_() % n); }
    int64_t in_range(int64_t lo, int64_t hi) {  // inclusive
        if (hi <= lo) return lo;
        return lo + static_cast<int64_t>(engine_() % static_cast<uint64_t>(hi - lo + 1));
    }
    double unit() { return static_cast<double>(engine_() >> 11) / 9007199254740992.0; }

private:
    std::mt19937_64 engine_;
};

}  // namespace specforge::util
