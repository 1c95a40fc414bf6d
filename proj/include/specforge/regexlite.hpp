#pragma once

#include <bitset>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "specforge/util.hpp"

namespace specforge::rx {

// POSIX-extended subset: literals, character classes, '.', grouping,
// alternation, and the * + ? {m,n} quantifiers. Small enough to support
// both matching and random sampling, which std::regex cannot do.
class Regex {
public:
    static Regex parse(const std::string& pattern);

    const std::string& pattern() const { return pattern_; }

    // End offsets e >= pos with input[pos..e) matching, longest first.
    std::vector<size_t> match_ends(std::string_view input, size_t pos) const;
    bool full_match(std::string_view s) const;

    std::string sample(util::Rng& rng, int max_unbounded_rep = 6) const;

private:
    struct Node {
        enum class Kind { chr, cls, any, concat, alt, repeat };
        Kind kind = Kind::chr;
        char c = 0;
        std::bitset<256> allowed;         // cls
        std::vector<Node> children;       // concat/alt/repeat
        int rep_min = 0;
        int rep_max = -1;                 // -1 = unbounded
    };

    Node root_;
    std::string pattern_;

    static Node parse_alt(const std::string& p, size_t& i);
    static Node parse_concat(const std::string& p, size_t& i);
    static Node parse_repeat(const std::string& p, size_t& i);
    static Node parse_atom(const std::string& p, size_t& i);
    static Node parse_class(const std::string& p, size_t& i);

    static void ends_of(const Node& n, std::string_view input, size_t pos,
                        std::vector<size_t>& out);
    static std::string sample_node(const Node& n, util::Rng& rng, int max_rep);
};

}  // namespace specforge::rx
