#include "specforge/regexlite.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "specforge/errors.hpp"

namespace specforge::rx {

namespace {

[[noreturn]] void bad_pattern(const std::string& p, size_t i, const std::string& why) {
    throw GrammarSyntaxError("regex \"" + p + "\" at offset " + std::to_string(i) + ": " + why,
                             0, static_cast<int>(i));
}

// '.' matches any byte except CR/LF so line-oriented lexemes cannot swallow
// message framing.
std::bitset<256> any_class() {
    std::bitset<256> b;
    b.set();
    b.reset(static_cast<unsigned char>('\r'));
    b.reset(static_cast<unsigned char>('\n'));
    return b;
}

char resolve_escape(char c) {
    switch (c) {
        case 'r': return '\r';
        case 'n': return '\n';
        case 't': return '\t';
        default: return c;  // \. \\ \[ etc: the escaped byte itself
    }
}

}  // namespace

Regex Regex::parse(const std::string& pattern) {
    Regex r;
    r.pattern_ = pattern;
    size_t i = 0;
    r.root_ = parse_alt(pattern, i);
    if (i != pattern.size()) bad_pattern(pattern, i, "unexpected ')'");
    return r;
}

Regex::Node Regex::parse_alt(const std::string& p, size_t& i) {
    Node alt;
    alt.kind = Node::Kind::alt;
    alt.children.push_back(parse_concat(p, i));
    while (i < p.size() && p[i] == '|') {
        ++i;
        alt.children.push_back(parse_concat(p, i));
    }
    if (alt.children.size() == 1) return alt.children[0];
    return alt;
}

Regex::Node Regex::parse_concat(const std::string& p, size_t& i) {
    Node cat;
    cat.kind = Node::Kind::concat;
    while (i < p.size() && p[i] != '|' && p[i] != ')') {
        cat.children.push_back(parse_repeat(p, i));
    }
    if (cat.children.size() == 1) return cat.children[0];
    return cat;  // empty concat matches the empty string
}

Regex::Node Regex::parse_repeat(const std::string& p, size_t& i) {
    Node atom = parse_atom(p, i);
    while (i < p.size()) {
        if (p[i] == '*' || p[i] == '+' || p[i] == '?') {
            Node rep;
            rep.kind = Node::Kind::repeat;
            rep.rep_min = (p[i] == '+') ? 1 : 0;
            rep.rep_max = (p[i] == '?') ? 1 : -1;
            rep.children.push_back(std::move(atom));
            atom = std::move(rep);
            ++i;
        } else if (p[i] == '{') {
            size_t j = i + 1;
            auto read_int = [&]() -> int {
                size_t s = j;
                while (j < p.size() && p[j] >= '0' && p[j] <= '9') ++j;
                if (j == s) return -2;
                return std::stoi(p.substr(s, j - s));
            };
            int lo = read_int();
            if (lo < 0) bad_pattern(p, i, "malformed {m,n}");
            int hi = lo;
            if (j < p.size() && p[j] == ',') {
                ++j;
                if (j < p.size() && p[j] == '}') {
                    hi = -1;  // {m,}
                } else {
                    hi = read_int();
                    if (hi < -1) bad_pattern(p, i, "malformed {m,n}");
                }
            }
            if (j >= p.size() || p[j] != '}') bad_pattern(p, i, "unterminated {m,n}");
            if (hi != -1 && hi < lo) bad_pattern(p, i, "{m,n} with n < m");
            Node rep;
            rep.kind = Node::Kind::repeat;
            rep.rep_min = lo;
            rep.rep_max = hi;
            rep.children.push_back(std::move(atom));
            atom = std::move(rep);
            i = j + 1;
        } else {
            break;
        }
    }
    return atom;
}

Regex::Node Regex::parse_atom(const std::string& p, size_t& i) {
    if (i >= p.size()) bad_pattern(p, i, "expected atom");
    char c = p[i];
    if (c == '(') {
        ++i;
        Node inner = parse_alt(p, i);
        if (i >= p.size() || p[i] != ')') bad_pattern(p, i, "unterminated group");
        ++i;
        return inner;
    }
    if (c == '[') return parse_class(p, i);
    if (c == '.') {
        ++i;
        Node n;
        n.kind = Node::Kind::any;
        n.allowed = any_class();
        return n;
    }
    if (c == '*' || c == '+' || c == '?' || c == '{' || c == '|' || c == ')') {
        bad_pattern(p, i, std::string("unexpected '") + c + "'");
    }
    Node n;
    n.kind = Node::Kind::chr;
    if (c == '\\') {
        if (i + 1 >= p.size()) bad_pattern(p, i, "dangling backslash");
        n.c = resolve_escape(p[i + 1]);
        i += 2;
    } else {
        n.c = c;
        ++i;
    }
    return n;
}

Regex::Node Regex::parse_class(const std::string& p, size_t& i) {
    // p[i] == '['
    size_t start = i;
    ++i;
    bool negate = false;
    if (i < p.size() && p[i] == '^') {
        negate = true;
        ++i;
    }
    std::bitset<256> set;
    bool first = true;
    while (i < p.size() && (p[i] != ']' || first)) {
        first = false;
        char lo;
        if (p[i] == '\\') {
            if (i + 1 >= p.size()) bad_pattern(p, start, "dangling backslash in class");
            lo = resolve_escape(p[i + 1]);
            i += 2;
        } else {
            lo = p[i];
            ++i;
        }
        char hi = lo;
        if (i + 1 < p.size() && p[i] == '-' && p[i + 1] != ']') {
            ++i;
            if (p[i] == '\\') {
                if (i + 1 >= p.size()) bad_pattern(p, start, "dangling backslash in class");
                hi = resolve_escape(p[i + 1]);
                i += 2;
            } else {
                hi = p[i];
                ++i;
            }
        }
        if (static_cast<unsigned char>(hi) < static_cast<unsigned char>(lo)) {
            bad_pattern(p, start, "reversed range in class");
        }
        for (int b = static_cast<unsigned char>(lo); b <= static_cast<unsigned char>(hi); ++b) {
            set.set(b);
        }
    }
    if (i >= p.size()) bad_pattern(p, start, "unterminated class");
    ++i;  // ']'
    Node n;
    n.kind = Node::Kind::cls;
    n.allowed = negate ? (any_class() & ~set) : set;
    if (n.allowed.none()) bad_pattern(p, start, "class matches no byte");
    return n;
}

void Regex::ends_of(const Node& n, std::string_view input, size_t pos,
                    std::vector<size_t>& out) {
    switch (n.kind) {
        case Node::Kind::chr:
            if (pos < input.size() && input[pos] == n.c) out.push_back(pos + 1);
            return;
        case Node::Kind::cls:
        case Node::Kind::any:
            if (pos < input.size() && n.allowed.test(static_cast<unsigned char>(input[pos]))) {
                out.push_back(pos + 1);
            }
            return;
        case Node::Kind::concat: {
            std::set<size_t> frontier{pos};
            for (const Node& child : n.children) {
                std::set<size_t> next;
                for (size_t f : frontier) {
                    std::vector<size_t> ends;
                    ends_of(child, input, f, ends);
                    next.insert(ends.begin(), ends.end());
                }
                frontier = std::move(next);
                if (frontier.empty()) return;
            }
            out.insert(out.end(), frontier.begin(), frontier.end());
            return;
        }
        case Node::Kind::alt: {
            std::set<size_t> all;
            for (const Node& child : n.children) {
                std::vector<size_t> ends;
                ends_of(child, input, pos, ends);
                all.insert(ends.begin(), ends.end());
            }
            out.insert(out.end(), all.begin(), all.end());
            return;
        }
        case Node::Kind::repeat: {
            const Node& child = n.children[0];
            std::set<size_t> frontier{pos};
            int count = 0;
            // Mandatory prefix.
            for (; count < n.rep_min; ++count) {
                std::set<size_t> next;
                for (size_t f : frontier) {
                    std::vector<size_t> ends;
                    ends_of(child, input, f, ends);
                    next.insert(ends.begin(), ends.end());
                }
                frontier = std::move(next);
                if (frontier.empty()) return;
            }
            std::set<size_t> reached = frontier;
            // Optional tail, to fixpoint or to rep_max.
            while (n.rep_max == -1 || count < n.rep_max) {
                std::set<size_t> next;
                for (size_t f : frontier) {
                    std::vector<size_t> ends;
                    ends_of(child, input, f, ends);
                    for (size_t e : ends) {
                        if (!reached.count(e)) next.insert(e);
                    }
                }
                if (next.empty()) break;
                reached.insert(next.begin(), next.end());
                frontier = std::move(next);
                ++count;
            }
            out.insert(out.end(), reached.begin(), reached.end());
            return;
        }
    }
}

std::vector<size_t> Regex::match_ends(std::string_view input, size_t pos) const {
    std::vector<size_t> out;
    ends_of(root_, input, pos, out);
    std::sort(out.begin(), out.end(), std::greater<size_t>());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

bool Regex::full_match(std::string_view s) const {
    for (size_t e : match_ends(s, 0)) {
        if (e == s.size()) return true;
    }
    return false;
}

std::string Regex::sample_node(const Node& n, util::Rng& rng, int max_rep) {
    switch (n.kind) {
        case Node::Kind::chr:
            return std::string(1, n.c);
        case Node::Kind::cls:
        case Node::Kind::any: {
            // Prefer printable bytes when the class allows any; keeps sampled
            // wire data readable and protocol-safe.
            std::vector<unsigned char> printable;
            std::vector<unsigned char> all;
            for (int b = 0; b < 256; ++b) {
                if (!n.allowed.test(b)) continue;
                all.push_back(static_cast<unsigned char>(b));
                if (b >= 0x20 && b < 0x7f) printable.push_back(static_cast<unsigned char>(b));
            }
            const auto& pool = printable.empty() ? all : printable;
            return std::string(1, static_cast<char>(pool[rng.below(pool.size())]));
        }
        case Node::Kind::concat: {
            std::string out;
            for (const Node& child : n.children) out += sample_node(child, rng, max_rep);
            return out;
        }
        case Node::Kind::alt: {
            const Node& pick = n.children[rng.below(n.children.size())];
            return sample_node(pick, rng, max_rep);
        }
        case Node::Kind::repeat: {
            int hi = (n.rep_max == -1) ? n.rep_min + max_rep : n.rep_max;
            int lo = n.rep_min;
            int count = lo + static_cast<int>(rng.below(static_cast<uint64_t>(hi - lo + 1)));
            std::string out;
            for (int k = 0; k < count; ++k) out += sample_node(n.children[0], rng, max_rep);
            return out;
        }
    }
    return {};
}

std::string Regex::sample(util::Rng& rng, int max_unbounded_rep) const {
    return sample_node(root_, rng, max_unbounded_rep);
}

}  // namespace specforge::rx
