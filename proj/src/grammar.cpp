#include "specforge/grammar.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "specforge/errors.hpp"
#include "specforge/regexlite.hpp"
#include "specforge/util.hpp"

namespace specforge::grammar {

namespace {

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
    for (char c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') {
            return false;
        }
    }
    return true;
}

std::string escape_bytes(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '\r': out += "\\r"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\\': out += "\\\\"; break;
            case '"': out += "\\\""; break;
            default: out += c;
        }
    }
    return out;
}

// Strips an unquoted '#' comment; quote state respects backslash escapes.
std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (in_str) {
            if (c == '\\' && i + 1 < line.size()) {
                ++i;
            } else if (c == '"') {
                in_str = false;
            }
        } else if (c == '"') {
            in_str = true;
        } else if (c == '#') {
            return line.substr(0, i);
        }
    }
    return line;
}

struct LogicalLine {
    std::string text;
    int line_no = 0;
    std::vector<ingest::Provenance> anchors;
};

std::optional<ingest::Provenance> parse_anchor(const std::string& trimmed) {
    const std::string prefix = "# anchor:";
    if (trimmed.rfind(prefix, 0) != 0) return std::nullopt;
    std::string body = util::trim(trimmed.substr(prefix.size()));
    // rfc_id:section_id:idx[,idx...]
    size_t c1 = body.find(':');
    size_t c2 = (c1 == std::string::npos) ? std::string::npos : body.find(':', c1 + 1);
    if (c2 == std::string::npos) return std::nullopt;
    ingest::Provenance prov;
    prov.rfc_id = body.substr(0, c1);
    prov.section_id = body.substr(c1 + 1, c2 - c1 - 1);
    for (const std::string& part : util::split(body.substr(c2 + 1), ',')) {
        std::string t = util::trim(part);
        if (t.empty()) continue;
        try {
            prov.paragraph_indices.push_back(std::stoi(t));
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }
    if (prov.rfc_id.empty() || prov.section_id.empty()) return std::nullopt;
    return prov;
}

class GrammarParser {
public:
    explicit GrammarParser(const std::string& text) : text_(text) {}

    IOGrammar run(bool check_refs = true) {
        gather_logical_lines();
        for (const LogicalLine& ll : lines_) {
            if (is_where_line(ll.text)) {
                handle_where(ll);
            } else {
                handle_production(ll);
            }
        }
        if (g_.productions.empty()) {
            throw GrammarSyntaxError("grammar has no productions", 0, 0);
        }
        if (g_.productions[0].name != "start") {
            throw GrammarSyntaxError(
                "first production must be <start>, found <" + g_.productions[0].name + ">",
                g_.productions[0].loc.line, g_.productions[0].loc.column);
        }
        extract_terminals();
        if (check_refs) check_references();
        return std::move(g_);
    }

private:
    const std::string& text_;
    std::vector<LogicalLine> lines_;
    IOGrammar g_;
    std::set<std::string> defined_;

    static bool is_where_line(const std::string& t) {
        std::string s = util::trim(t);
        return s.rfind("where", 0) == 0 &&
               (s.size() == 5 || s[5] == ' ' || s[5] == '\t');
    }

    void gather_logical_lines() {
        std::vector<ingest::Provenance> pending;
        int line_no = 0;
        for (const std::string& raw : util::split_lines(text_)) {
            ++line_no;
            std::string trimmed = util::trim(raw);
            if (auto anchor = parse_anchor(trimmed)) {
                pending.push_back(std::move(*anchor));
                continue;
            }
            std::string stripped = strip_comment(raw);
            if (util::trim(stripped).empty()) continue;
            bool indented = stripped[0] == ' ' || stripped[0] == '\t';
            if (indented && !lines_.empty() && !is_where_line(stripped)) {
                lines_.back().text += ' ';
                lines_.back().text += util::trim(stripped);
            } else {
                LogicalLine ll;
                ll.text = stripped;
                ll.line_no = line_no;
                ll.anchors = std::move(pending);
                pending.clear();
                lines_.push_back(std::move(ll));
            }
        }
    }

    void handle_where(const LogicalLine& ll) {
        if (g_.productions.empty()) {
            throw GrammarSyntaxError("where clause before any production", ll.line_no, 1);
        }
        std::string body = util::trim(util::trim(ll.text).substr(5));
        if (body.empty()) {
            throw GrammarSyntaxError("empty where clause", ll.line_no, 1);
        }
        AttachedConstraint ac;
        ac.owner = g_.productions.back().name;
        try {
            ac.expr = constraint::parse_constraint(body);
        } catch (const GrammarSyntaxError& e) {
            throw GrammarSyntaxError(e.what(), ll.line_no, e.column);
        }
        ac.loc = {ll.line_no, 1};
        g_.constraints.push_back(std::move(ac));
    }

    [[noreturn]] void fail(const LogicalLine& ll, size_t col, const std::string& why) {
        throw GrammarSyntaxError(why, ll.line_no, static_cast<int>(col) + 1);
    }

    void handle_production(const LogicalLine& ll) {
        const std::string& s = ll.text;
        size_t i = 0;
        auto skip_ws = [&] {
            while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        };
        skip_ws();
        if (i >= s.size() || s[i] != '<') fail(ll, i, "expected production head '<name>'");
        size_t close = s.find('>', i);
        if (close == std::string::npos) fail(ll, i, "unterminated '<'");
        std::string head = s.substr(i + 1, close - i - 1);
        if (!valid_name(head)) fail(ll, i, "invalid production name '" + head + "'");
        i = close + 1;
        skip_ws();
        if (s.compare(i, 3, "::=") != 0) fail(ll, i, "expected '::=' after production head");
        i += 3;

        if (defined_.count(head)) {
            throw DuplicateDefinition("nonterminal <" + head + "> defined more than once");
        }
        defined_.insert(head);

        Production prod;
        prod.name = head;
        prod.loc = {ll.line_no, 1};
        Alternative current;
        bool saw_symbol_or_bar = false;

        auto push_alt = [&](size_t at) {
            if (current.symbols.empty()) {
                fail(ll, at, "empty alternative in <" + head + "> (use \"\" for epsilon)");
            }
            if (std::find(prod.alternatives.begin(), prod.alternatives.end(), current) ==
                prod.alternatives.end()) {
                prod.alternatives.push_back(current);
            }
            current.symbols.clear();
        };

        while (true) {
            skip_ws();
            if (i >= s.size()) break;
            char c = s[i];
            if (c == '|') {
                push_alt(i);
                saw_symbol_or_bar = true;
                ++i;
                continue;
            }
            if (c == '<') {
                size_t end = s.find('>', i);
                if (end == std::string::npos) fail(ll, i, "unterminated '<'");
                std::string inner = s.substr(i + 1, end - i - 1);
                Symbol sym;
                sym.kind = Symbol::Kind::nonterminal;
                sym.loc = {ll.line_no, static_cast<int>(i) + 1};
                size_t colon = inner.find(':');
                if (colon != std::string::npos) {
                    std::string tag = inner.substr(0, colon);
                    std::string name = inner.substr(colon + 1);
                    if (tag == "Client") {
                        sym.party = Party::client;
                    } else if (tag == "Server") {
                        sym.party = Party::server;
                    } else {
                        throw UnknownPartyTag("unknown party tag '" + tag +
                                              ":' (expected Client: or Server:) at line " +
                                              std::to_string(ll.line_no));
                    }
                    sym.text = name;
                } else {
                    sym.text = inner;
                }
                if (!valid_name(sym.text)) fail(ll, i, "invalid nonterminal name '" + sym.text + "'");
                current.symbols.push_back(std::move(sym));
                saw_symbol_or_bar = true;
                i = end + 1;
                continue;
            }
            if (c == '"') {
                Symbol sym = Symbol::lit(read_quoted(ll, i));
                sym.loc = {ll.line_no, static_cast<int>(i) + 1};
                current.symbols.push_back(std::move(sym));
                saw_symbol_or_bar = true;
                continue;
            }
            if (s.compare(i, 3, "re(") == 0) {
                size_t at = i;
                i += 3;
                skip_ws();
                if (i >= s.size() || s[i] != '"') fail(ll, i, "re( expects a quoted pattern");
                std::string pattern = read_quoted(ll, i);
                skip_ws();
                if (i >= s.size() || s[i] != ')') fail(ll, i, "unterminated re(...)");
                ++i;
                try {
                    rx::Regex::parse(pattern);
                } catch (const GrammarSyntaxError& e) {
                    fail(ll, at, e.what());
                }
                Symbol sym = Symbol::rex(pattern);
                sym.loc = {ll.line_no, static_cast<int>(at) + 1};
                current.symbols.push_back(std::move(sym));
                saw_symbol_or_bar = true;
                continue;
            }
            fail(ll, i, std::string("unexpected character '") + c + "' in production body");
        }
        if (!saw_symbol_or_bar || !current.symbols.empty()) {
            push_alt(i);
        } else if (current.symbols.empty() && !prod.alternatives.empty()) {
            // Trailing '|' with nothing after it.
            fail(ll, i, "trailing '|' in <" + head + ">");
        }
        if (prod.alternatives.empty()) {
            fail(ll, i, "production <" + head + "> has no alternatives");
        }
        if (!ll.anchors.empty()) {
            auto& dst = g_.provenance[head];
            dst.insert(dst.end(), ll.anchors.begin(), ll.anchors.end());
        }
        g_.productions.push_back(std::move(prod));
    }

    // Reads a double-quoted string starting at s[i]=='"'; advances i past the
    // closing quote and returns the unescaped bytes.
    std::string read_quoted(const LogicalLine& ll, size_t& i) {
        const std::string& s = ll.text;
        size_t start = i;
        ++i;  // opening quote
        std::string out;
        while (i < s.size() && s[i] != '"') {
            char c = s[i];
            if (c == '\\' && i + 1 < s.size()) {
                char e = s[i + 1];
                switch (e) {
                    case 'r': out += '\r'; break;
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case '\\': out += '\\'; break;
                    case '"': out += '"'; break;
                    default:
                        out += '\\';
                        out += e;
                        break;
                }
                i += 2;
            } else {
                out += c;
                ++i;
            }
        }
        if (i >= s.size()) fail(ll, start, "unterminated string literal");
        ++i;  // closing quote
        return out;
    }

    void extract_terminals() {
        auto listing = std::find_if(g_.productions.begin(), g_.productions.end(),
                                    [](const Production& p) { return p.name == "terminals"; });
        if (listing == g_.productions.end()) return;

        std::vector<std::string> lexeme_names;
        for (const Alternative& alt : listing->alternatives) {
            if (alt.symbols.size() != 1 || alt.symbols[0].kind != Symbol::Kind::nonterminal ||
                alt.symbols[0].party != Party::none) {
                throw GrammarSyntaxError(
                    "<terminals> must list plain nonterminal names separated by '|'",
                    listing->loc.line, 1);
            }
            lexeme_names.push_back(alt.symbols[0].text);
        }
        int listing_line = listing->loc.line;
        g_.productions.erase(listing);

        for (const std::string& name : lexeme_names) {
            auto it = std::find_if(g_.productions.begin(), g_.productions.end(),
                                   [&](const Production& p) { return p.name == name; });
            if (it == g_.productions.end()) {
                throw UndefinedNonterminal("<terminals> lists <" + name +
                                           "> but it is never defined");
            }
            if (it->alternatives.size() != 1 || it->alternatives[0].symbols.size() != 1) {
                throw GrammarSyntaxError("lexeme <" + name +
                                             "> must be a single literal or re(...) pattern",
                                         it->loc.line, 1);
            }
            const Symbol& sym = it->alternatives[0].symbols[0];
            TerminalDef def;
            def.loc = it->loc;
            if (sym.kind == Symbol::Kind::literal) {
                def.kind = TerminalDef::Kind::literal;
            } else if (sym.kind == Symbol::Kind::regex) {
                def.kind = TerminalDef::Kind::regex;
            } else {
                throw GrammarSyntaxError("lexeme <" + name +
                                             "> must be a single literal or re(...) pattern",
                                         it->loc.line, 1);
            }
            def.text = sym.text;
            g_.terminals.emplace_back(name, def);
            g_.productions.erase(it);
        }
        (void)listing_line;
    }

    void check_references() {
        for (const Production& p : g_.productions) {
            for (const Alternative& alt : p.alternatives) {
                for (const Symbol& sym : alt.symbols) {
                    if (sym.kind != Symbol::Kind::nonterminal) continue;
                    if (!g_.defined(sym.text)) {
                        throw UndefinedNonterminal(
                            "reference to undefined nonterminal <" + sym.text + "> at line " +
                            std::to_string(sym.loc.line) + ", column " +
                            std::to_string(sym.loc.column));
                    }
                }
            }
        }
        for (const AttachedConstraint& ac : g_.constraints) {
            if (!g_.defined(ac.owner)) {
                throw UndefinedNonterminal("where clause attached to undefined <" + ac.owner + ">");
            }
        }
    }
};

}  // namespace

const char* party_name(Party p) {
    switch (p) {
        case Party::client: return "client";
        case Party::server: return "server";
        default: return "none";
    }
}

const Production* IOGrammar::find(const std::string& name) const {
    for (const Production& p : productions) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

const TerminalDef* IOGrammar::find_terminal(const std::string& name) const {
    for (const auto& [n, def] : terminals) {
        if (n == name) return &def;
    }
    return nullptr;
}

bool IOGrammar::defined(const std::string& name) const {
    return find(name) != nullptr || find_terminal(name) != nullptr;
}

std::vector<const AttachedConstraint*> IOGrammar::constraints_of(const std::string& owner) const {
    std::vector<const AttachedConstraint*> out;
    for (const AttachedConstraint& ac : constraints) {
        if (ac.owner == owner) out.push_back(&ac);
    }
    return out;
}

IOGrammar parse_grammar(const std::string& text) { return GrammarParser(text).run(); }

IOGrammar parse_grammar_lenient(const std::string& text) {
    return GrammarParser(text).run(false);
}

std::string serialize_grammar(const IOGrammar& g) {
    std::string out;
    auto render_symbol = [](const Symbol& sym) -> std::string {
        switch (sym.kind) {
            case Symbol::Kind::nonterminal:
                if (sym.party == Party::client) return "<Client:" + sym.text + ">";
                if (sym.party == Party::server) return "<Server:" + sym.text + ">";
                return "<" + sym.text + ">";
            case Symbol::Kind::literal:
                return "\"" + escape_bytes(sym.text) + "\"";
            case Symbol::Kind::regex:
                return "re(\"" + escape_bytes(sym.text) + "\")";
        }
        return {};
    };
    auto render_production = [&](const std::string& name,
                                 const std::vector<Alternative>& alts) {
        out += "<" + name + "> ::= ";
        bool first_alt = true;
        for (const Alternative& alt : alts) {
            if (!first_alt) out += " | ";
            first_alt = false;
            if (alt.symbols.empty()) {
                out += "\"\"";
                continue;
            }
            bool first_sym = true;
            for (const Symbol& sym : alt.symbols) {
                if (!first_sym) out += ' ';
                first_sym = false;
                out += render_symbol(sym);
            }
        }
        out += '\n';
    };

    for (const Production& p : g.productions) {
        auto prov = g.provenance.find(p.name);
        if (prov != g.provenance.end()) {
            for (const ingest::Provenance& a : prov->second) {
                out += "# anchor: " + a.rfc_id + ":" + a.section_id + ":";
                for (size_t k = 0; k < a.paragraph_indices.size(); ++k) {
                    if (k) out += ',';
                    out += std::to_string(a.paragraph_indices[k]);
                }
                out += '\n';
            }
        }
        render_production(p.name, p.alternatives);
        for (const AttachedConstraint& ac : g.constraints) {
            if (ac.owner == p.name) {
                out += "where " + constraint::to_string(ac.expr) + '\n';
            }
        }
    }

    if (!g.terminals.empty()) {
        out += '\n';
        out += "<terminals> ::= ";
        bool first = true;
        for (const auto& [name, def] : g.terminals) {
            if (!first) out += " | ";
            first = false;
            out += "<" + name + ">";
        }
        out += '\n';
        for (const auto& [name, def] : g.terminals) {
            if (def.kind == TerminalDef::Kind::literal) {
                out += "<" + name + "> ::= \"" + escape_bytes(def.text) + "\"\n";
            } else {
                out += "<" + name + "> ::= re(\"" + escape_bytes(def.text) + "\")\n";
            }
        }
    }
    return out;
}

void validate(const IOGrammar& g) {
    if (g.productions.empty()) {
        throw GrammarSyntaxError("grammar has no productions", 0, 0);
    }
    if (g.productions[0].name != "start") {
        throw GrammarSyntaxError("first production must be <start>", 0, 0);
    }
    std::set<std::string> names;
    for (const Production& p : g.productions) {
        if (!names.insert(p.name).second) {
            throw DuplicateDefinition("nonterminal <" + p.name + "> defined more than once");
        }
    }
    for (const auto& [name, def] : g.terminals) {
        if (!names.insert(name).second) {
            throw DuplicateDefinition("nonterminal <" + name + "> defined more than once");
        }
        if (def.kind == TerminalDef::Kind::regex) {
            rx::Regex::parse(def.text);  // throws GrammarSyntaxError if malformed
        }
    }
    for (const Production& p : g.productions) {
        std::set<const Alternative*> seen;
        for (size_t a = 0; a < p.alternatives.size(); ++a) {
            for (size_t b = a + 1; b < p.alternatives.size(); ++b) {
                if (p.alternatives[a] == p.alternatives[b]) {
                    throw DuplicateDefinition("duplicate alternative in <" + p.name + ">");
                }
            }
            for (const Symbol& sym : p.alternatives[a].symbols) {
                if (sym.kind == Symbol::Kind::nonterminal && !g.defined(sym.text)) {
                    throw UndefinedNonterminal("reference to undefined nonterminal <" +
                                               sym.text + "> in <" + p.name + ">");
                }
                if (sym.kind == Symbol::Kind::regex) {
                    rx::Regex::parse(sym.text);
                }
            }
        }
    }
    for (const AttachedConstraint& ac : g.constraints) {
        if (!g.defined(ac.owner)) {
            throw UndefinedNonterminal("where clause attached to undefined <" + ac.owner + ">");
        }
    }
}

std::vector<std::string> tagged_names(const IOGrammar& g, Party party) {
    std::vector<std::string> out;
    for (const Production& p : g.productions) {
        for (const Alternative& alt : p.alternatives) {
            for (const Symbol& sym : alt.symbols) {
                if (sym.kind == Symbol::Kind::nonterminal && sym.party == party) {
                    if (std::find(out.begin(), out.end(), sym.text) == out.end()) {
                        out.push_back(sym.text);
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace specforge::grammar
