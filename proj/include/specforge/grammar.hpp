#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "specforge/constraint.hpp"
#include "specforge/ingest.hpp"

namespace specforge::grammar {

// Party tag on a nonterminal reference: which side of the connection emits
// the bytes derived under that reference.
enum class Party { none, client, server };

const char* party_name(Party p);  // "none" | "client" | "server"

struct SourceLoc {
    int line = 0;  // 1-based; 0 = synthetic
    int column = 0;
};

struct Symbol {
    enum class Kind { nonterminal, literal, regex };

    Kind kind = Kind::literal;
    Party party = Party::none;  // nonterminal references only
    std::string text;           // nonterminal name, literal bytes, or pattern
    SourceLoc loc;

    bool operator==(const Symbol& o) const {
        return kind == o.kind && party == o.party && text == o.text;
    }

    static Symbol ref(std::string name, Party p = Party::none) {
        Symbol s;
        s.kind = Kind::nonterminal;
        s.party = p;
        s.text = std::move(name);
        return s;
    }
    static Symbol lit(std::string bytes) {
        Symbol s;
        s.kind = Kind::literal;
        s.text = std::move(bytes);
        return s;
    }
    static Symbol rex(std::string pattern) {
        Symbol s;
        s.kind = Kind::regex;
        s.text = std::move(pattern);
        return s;
    }
};

struct Alternative {
    std::vector<Symbol> symbols;  // empty = epsilon

    bool operator==(const Alternative& o) const { return symbols == o.symbols; }
};

struct Production {
    std::string name;
    std::vector<Alternative> alternatives;
    SourceLoc loc;

    bool operator==(const Production& o) const {
        return name == o.name && alternatives == o.alternatives;
    }
};

// Lexeme: a named terminal defined in the <terminals> block, either an exact
// byte string or a regex over bytes.
struct TerminalDef {
    enum class Kind { literal, regex };

    Kind kind = Kind::literal;
    std::string text;  // bytes or pattern
    SourceLoc loc;

    bool operator==(const TerminalDef& o) const {
        return kind == o.kind && text == o.text;
    }
};

struct AttachedConstraint {
    std::string owner;  // production the `where` clause follows
    constraint::Expr expr;
    SourceLoc loc;

    bool operator==(const AttachedConstraint& o) const {
        return owner == o.owner && expr == o.expr;
    }
};

struct IOGrammar {
    // File order; first production is always <start>.
    std::vector<Production> productions;
    // Lexemes in <terminals> listing order.
    std::vector<std::pair<std::string, TerminalDef>> terminals;
    std::vector<AttachedConstraint> constraints;
    // Anchor comments (# anchor: rfc:section:p0,p1) keyed by production name.
    // Carried in memory and re-emitted on serialize; not part of equality.
    std::map<std::string, std::vector<ingest::Provenance>> provenance;

    const Production* find(const std::string& name) const;
    const TerminalDef* find_terminal(const std::string& name) const;
    bool defined(const std::string& name) const;
    std::vector<const AttachedConstraint*> constraints_of(const std::string& owner) const;

    // Syntax-level equality: productions, terminals, and constraints in
    // order; ignores provenance and source locations.
    bool structurally_equal(const IOGrammar& o) const {
        return productions == o.productions && terminals == o.terminals &&
               constraints == o.constraints;
    }
};

// Parses the on-disk grammar format. Diagnoses, with line/column where
// meaningful: malformed lines, an unknown party tag, a first production not
// named <start>, a nonterminal defined twice, and references to undefined
// nonterminals. Duplicate alternatives inside one production are dropped
// (first occurrence wins). Comments (unquoted '#' to end of line) are
// skipped, except `# anchor:` lines which populate provenance.
IOGrammar parse_grammar(const std::string& text);

// Same parser without the final undefined-reference check: callers that
// repair or complete a grammar afterwards (normalization fills well-known
// lexemes in) start from this and re-validate when done.
IOGrammar parse_grammar_lenient(const std::string& text);

// Canonical rendering: one production per line, ` | ` between alternatives,
// `where` clauses directly under their production, then the <terminals>
// block. parse(serialize(g)) is structurally equal to g.
std::string serialize_grammar(const IOGrammar& g);

// Checks the structural invariants shared by every grammar produced or
// accepted by this toolkit; throws on violation.
void validate(const IOGrammar& g);

// All names referenced with an explicit Client:/Server: tag, in first-use
// order — the message vocabulary of each party.
std::vector<std::string> tagged_names(const IOGrammar& g, Party p);

}  // namespace specforge::grammar
