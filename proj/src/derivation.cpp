#include "specforge/derivation.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <set>

#include "specforge/errors.hpp"
#include "specforge/regexlite.hpp"

namespace specforge::derivation {

namespace {

using grammar::Alternative;
using grammar::IOGrammar;
using grammar::Party;
using grammar::Production;
using grammar::Symbol;
using grammar::TerminalDef;

constexpr int kInfDepth = 1 << 20;

std::optional<long long> parse_ll(const std::string& s) {
    if (s.empty()) return std::nullopt;
    size_t i = (s[0] == '-') ? 1 : 0;
    if (i == s.size()) return std::nullopt;
    for (size_t k = i; k < s.size(); ++k) {
        if (s[k] < '0' || s[k] > '9') return std::nullopt;
    }
    try {
        return std::stoll(s);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

// Alphanumeric/underscore runs in literal bytes — command keywords are
// matched against these.
std::vector<std::string> word_tokens(const std::string& bytes) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : bytes) {
        bool word = std::isalnum(static_cast<unsigned char>(c)) || c == '_';
        if (word) {
            cur += c;
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// Pre-resolved grammar: name lookups, compiled regexes, minimum derivation
// depths, and per-nonterminal reachable command keywords.
struct Compiled {
    const IOGrammar& g;
    std::map<std::string, const Production*> prods;
    std::map<std::string, const TerminalDef*> lexemes;
    std::map<std::string, rx::Regex> regexes;  // keyed by pattern
    std::map<std::string, int> min_depth;

    explicit Compiled(const IOGrammar& gram) : g(gram) {
        for (const Production& p : g.productions) prods[p.name] = &p;
        for (const auto& [name, def] : g.terminals) {
            lexemes[name] = &def;
            if (def.kind == TerminalDef::Kind::regex && !regexes.count(def.text)) {
                regexes.emplace(def.text, rx::Regex::parse(def.text));
            }
        }
        for (const Production& p : g.productions) {
            for (const Alternative& alt : p.alternatives) {
                for (const Symbol& sym : alt.symbols) {
                    if (sym.kind == Symbol::Kind::regex && !regexes.count(sym.text)) {
                        regexes.emplace(sym.text, rx::Regex::parse(sym.text));
                    }
                }
            }
        }
        compute_min_depths();
    }

    const rx::Regex& regex(const std::string& pattern) const { return regexes.at(pattern); }

    int sym_depth(const Symbol& sym) const {
        if (sym.kind != Symbol::Kind::nonterminal) return 0;
        auto it = min_depth.find(sym.text);
        return it == min_depth.end() ? kInfDepth : it->second;
    }

    int alt_depth(const Alternative& alt) const {
        int d = 0;
        for (const Symbol& sym : alt.symbols) d = std::max(d, sym_depth(sym));
        if (d >= kInfDepth) return kInfDepth;
        return 1 + d;
    }

    bool productive(const std::string& name) const {
        auto it = min_depth.find(name);
        return it != min_depth.end() && it->second < kInfDepth;
    }

    void compute_min_depths() {
        for (const auto& [name, def] : lexemes) min_depth[name] = 0;
        for (const Production& p : g.productions) min_depth[p.name] = kInfDepth;
        bool changed = true;
        while (changed) {
            changed = false;
            for (const Production& p : g.productions) {
                int best = kInfDepth;
                for (const Alternative& alt : p.alternatives) {
                    best = std::min(best, alt_depth(alt));
                }
                if (best < min_depth[p.name]) {
                    min_depth[p.name] = best;
                    changed = true;
                }
            }
        }
    }

    // Command keywords k (from `universe`) that can appear as literal word
    // tokens somewhere under each nonterminal.
    std::map<std::string, std::set<std::string>> reachable_keywords(
        const std::set<std::string>& universe) const {
        std::map<std::string, std::set<std::string>> kw;
        for (const auto& [name, def] : lexemes) {
            if (def->kind == TerminalDef::Kind::literal) {
                for (const std::string& t : word_tokens(def->text)) {
                    if (universe.count(t)) kw[name].insert(t);
                }
            } else {
                kw[name];  // regex lexeme: cannot guarantee a keyword
            }
        }
        for (const Production& p : g.productions) kw[p.name];
        bool changed = true;
        while (changed) {
            changed = false;
            for (const Production& p : g.productions) {
                std::set<std::string>& mine = kw[p.name];
                size_t before = mine.size();
                for (const Alternative& alt : p.alternatives) {
                    for (const Symbol& sym : alt.symbols) {
                        if (sym.kind == Symbol::Kind::literal) {
                            for (const std::string& t : word_tokens(sym.text)) {
                                if (universe.count(t)) mine.insert(t);
                            }
                        } else if (sym.kind == Symbol::Kind::nonterminal) {
                            const auto& sub = kw[sym.text];
                            mine.insert(sub.begin(), sub.end());
                        }
                    }
                }
                if (mine.size() != before) changed = true;
            }
        }
        return kw;
    }
};

// --- progress relations -----------------------------------------------------

// Relation over progress counters 0..m: (i,j) means a derivation of the
// nonterminal can move the realized-command count from i to j.
using Rel = std::set<std::pair<int, int>>;

Rel identity_rel(int m) {
    Rel r;
    for (int i = 0; i <= m; ++i) r.insert({i, i});
    return r;
}

Rel compose(const Rel& a, const Rel& b) {
    Rel out;
    for (const auto& [i, j] : a) {
        for (const auto& [j2, k] : b) {
            if (j2 == j) out.insert({i, k});
        }
    }
    return out;
}

struct Planner {
    const Compiled& c;
    std::vector<std::string> commands;
    int m = 0;
    std::map<std::string, std::set<std::string>> kw;
    std::map<std::string, Rel> rel;  // session-context relation per production
    Rel ident;

    Planner(const Compiled& comp, std::vector<std::string> cmds)
        : c(comp), commands(std::move(cmds)), m(static_cast<int>(commands.size())) {
        std::set<std::string> universe(commands.begin(), commands.end());
        kw = c.reachable_keywords(universe);
        ident = identity_rel(m);
        for (const auto& [name, p] : c.prods) rel[name];
        bool changed = true;
        while (changed) {
            changed = false;
            for (const auto& [name, p] : c.prods) {
                Rel next;
                for (const Alternative& alt : p->alternatives) {
                    auto r = alt_rel(alt);
                    if (r) next.insert(r->begin(), r->end());
                }
                if (next.size() != rel[name].size()) {
                    rel[name] = std::move(next);
                    changed = true;
                }
            }
        }
    }

    // One client message realizes at most one keyword: stay, or step when the
    // next command's keyword is reachable under the message nonterminal.
    Rel client_step(const std::string& name) const {
        Rel r = ident;
        const auto& ks = kw.at(name);
        for (int i = 0; i < m; ++i) {
            if (ks.count(commands[i])) r.insert({i, i + 1});
        }
        return r;
    }

    // Relation of one symbol in session context; nullopt if the symbol can
    // never derive a finite subtree.
    std::optional<Rel> symbol_rel(const Symbol& sym) const {
        if (sym.kind != Symbol::Kind::nonterminal) return ident;
        if (!c.productive(sym.text)) return std::nullopt;
        if (sym.party == Party::client) return client_step(sym.text);
        if (sym.party == Party::server) return ident;
        if (c.lexemes.count(sym.text)) return ident;
        return rel.at(sym.text);
    }

    std::optional<Rel> alt_rel(const Alternative& alt) const {
        Rel cur = ident;
        for (const Symbol& sym : alt.symbols) {
            auto r = symbol_rel(sym);
            if (!r) return std::nullopt;
            cur = compose(cur, *r);
            if (cur.empty()) return cur;
        }
        return cur;
    }
};

// --- constraint evaluation --------------------------------------------------

struct Value {
    enum class K { integer, text, none };
    K k = K::none;
    long long i = 0;
    std::string s;

    static Value of_int(long long v) {
        Value x;
        x.k = K::integer;
        x.i = v;
        return x;
    }
    static Value of_text(std::string v) {
        Value x;
        x.k = K::text;
        x.s = std::move(v);
        return x;
    }
};

void collect_fields(const TreeNode& n, const std::string& name,
                    std::vector<const TreeNode*>& out) {
    if (n.symbol == name) out.push_back(&n);
    for (const TreeNode& c : n.children) collect_fields(c, name, out);
}

const TreeNode* resolve_field(const TreeNode& scope, const TreeNode* root,
                              const std::string& name, bool* used_fallback) {
    std::vector<const TreeNode*> hits;
    collect_fields(scope, name, hits);
    if (!hits.empty()) return hits[0];
    if (root && root != &scope) {
        collect_fields(*root, name, hits);
        if (!hits.empty()) {
            if (used_fallback) *used_fallback = true;
            return hits[0];
        }
    }
    throw UnresolvableFieldRef("field <" + name + "> has no instance in scope");
}

struct Evaluator {
    const TreeNode& scope;
    const TreeNode* root;
    bool used_fallback = false;

    std::string field_bytes(const constraint::Expr& ref) {
        const TreeNode* n = resolve_field(scope, root, ref.str_value, &used_fallback);
        return leaf_bytes(*n);
    }

    Value term(const constraint::Expr& e) {
        using K = constraint::Expr::Kind;
        switch (e.kind) {
            case K::int_lit:
                return Value::of_int(e.int_value);
            case K::str_lit:
                return Value::of_text(e.str_value);
            case K::field_ref:
                return Value::of_text(field_bytes(e));
            case K::fn_len:
                return Value::of_int(static_cast<long long>(field_bytes(e.children[0]).size()));
            case K::fn_int: {
                auto v = parse_ll(field_bytes(e.children[0]));
                if (!v) return Value{};  // none
                return Value::of_int(*v);
            }
            default:
                throw Error("constraint term expected");
        }
    }

    static bool compare(const std::string& op, int c) {
        if (op == "==") return c == 0;
        if (op == "!=") return c != 0;
        if (op == "<") return c < 0;
        if (op == "<=") return c <= 0;
        if (op == ">") return c > 0;
        return c >= 0;  // ">="
    }

    bool boolean(const constraint::Expr& e) {
        using K = constraint::Expr::Kind;
        switch (e.kind) {
            case K::logic_and:
                return boolean(e.children[0]) && boolean(e.children[1]);
            case K::logic_or:
                return boolean(e.children[0]) || boolean(e.children[1]);
            case K::logic_not:
                return !boolean(e.children[0]);
            case K::fn_matches: {
                std::string bytes = field_bytes(e.children[0]);
                return rx::Regex::parse(e.str_value).full_match(bytes);
            }
            case K::cmp: {
                Value a = term(e.children[0]);
                Value b = term(e.children[1]);
                if (a.k == Value::K::none || b.k == Value::K::none) return false;
                if (a.k == Value::K::integer && b.k == Value::K::integer) {
                    int c = (a.i < b.i) ? -1 : (a.i > b.i ? 1 : 0);
                    return compare(e.str_value, c);
                }
                if (a.k == Value::K::text && b.k == Value::K::text) {
                    int c = a.s.compare(b.s);
                    return compare(e.str_value, c < 0 ? -1 : (c > 0 ? 1 : 0));
                }
                // Mixed: coerce the text side to an integer; unparseable
                // text makes the comparison false.
                auto coerce = [](const Value& v) -> std::optional<long long> {
                    if (v.k == Value::K::integer) return v.i;
                    return parse_ll(v.s);
                };
                auto ca = coerce(a);
                auto cb = coerce(b);
                if (!ca || !cb) return false;
                int c = (*ca < *cb) ? -1 : (*ca > *cb ? 1 : 0);
                return compare(e.str_value, c);
            }
            default:
                throw Error("constraint does not evaluate to a boolean");
        }
    }
};

// --- deriver ----------------------------------------------------------------

struct Deriver {
    const Compiled& c;
    const Planner& plan;
    util::Rng& rng;
    DerivationLimits lim;

    TreeNode lexeme_leaf(const std::string& name, Party party, bool explicit_p) {
        const TerminalDef* def = c.lexemes.at(name);
        TreeNode n;
        n.symbol = name;
        n.party = party;
        n.explicit_party = explicit_p;
        n.terminal = true;
        n.bytes = (def->kind == TerminalDef::Kind::literal)
                      ? def->text
                      : c.regex(def->text).sample(rng);
        return n;
    }

    TreeNode inline_leaf(const Symbol& sym, Party party) {
        TreeNode n;
        n.party = party;
        n.terminal = true;
        n.bytes = (sym.kind == Symbol::Kind::literal) ? sym.text
                                                      : c.regex(sym.text).sample(rng);
        return n;
    }

    static bool literal_realizes(const Symbol& sym, const std::string& kw) {
        if (sym.kind != Symbol::Kind::literal) return false;
        for (const std::string& t : word_tokens(sym.text)) {
            if (t == kw) return true;
        }
        return false;
    }

    bool symbol_realizes(const Symbol& sym, const std::string& kw) const {
        if (literal_realizes(sym, kw)) return true;
        if (sym.kind == Symbol::Kind::nonterminal) {
            auto it = plan.kw.find(sym.text);
            return it != plan.kw.end() && it->second.count(kw);
        }
        return false;
    }

    // Retries a builder until the owner's locally-resolvable constraints hold.
    TreeNode with_local_constraints(const std::string& owner,
                                    const std::function<TreeNode()>& build) {
        auto owned = c.g.constraints_of(owner);
        for (int attempt = 0; attempt < lim.max_attempts; ++attempt) {
            TreeNode node = build();
            if (owned.empty() || local_ok(node, owned)) return node;
        }
        throw DerivationExhausted("could not satisfy constraints of <" + owner + "> within " +
                                  std::to_string(lim.max_attempts) + " attempts");
    }

    bool local_ok(TreeNode& node, const std::vector<const grammar::AttachedConstraint*>& owned) {
        for (size_t k = 0; k < owned.size(); ++k) {
            bool ok;
            try {
                Evaluator ev{node, nullptr};
                ok = ev.boolean(owned[k]->expr);
            } catch (const UnresolvableFieldRef&) {
                continue;  // cross-message reference: checked at the session root
            }
            if (ok) continue;
            if (try_interval_fix(node, nullptr, owned[k]->expr) ||
                try_equality_fix(node, nullptr, owned[k]->expr)) {
                k = static_cast<size_t>(-1);  // re-check all from the start
                continue;
            }
            return false;
        }
        return true;
    }

    // For closed ranges over a regex lexeme field, write a sampled in-range
    // value straight into the leaf instead of rejection sampling. `root`,
    // when given, provides whole-session fallback for the field lookup.
    bool try_interval_fix(TreeNode& node, TreeNode* root, const constraint::Expr& e) {
        auto iv = constraint::as_interval(e);
        if (!iv || iv->lo > iv->hi) return false;
        TreeNode* leaf = find_field_leaf(node, iv->field);
        if (!leaf && root) leaf = find_field_leaf(*root, iv->field);
        if (!leaf) return false;
        auto lex = c.lexemes.find(leaf->symbol);
        if (lex == c.lexemes.end() || lex->second->kind != TerminalDef::Kind::regex) {
            return false;
        }
        const rx::Regex& re = c.regex(lex->second->text);
        for (int t = 0; t < 16; ++t) {
            long long v = rng.in_range(iv->lo, iv->hi);
            std::string s = std::to_string(v);
            if (re.full_match(s)) {
                leaf->bytes = s;
                return true;
            }
        }
        return false;
    }

    static TreeNode* find_field_leaf(TreeNode& n, const std::string& name) {
        if (n.symbol == name && n.terminal) return &n;
        for (TreeNode& c : n.children) {
            if (TreeNode* hit = find_field_leaf(c, name)) return hit;
        }
        return nullptr;
    }

    // Document-order index of a terminal leaf inside `root`; -1 if absent.
    static int leaf_order(const TreeNode& root, const TreeNode* leaf) {
        int counter = 0;
        int found = -1;
        std::function<void(const TreeNode&)> walk = [&](const TreeNode& n) {
            if (found >= 0) return;
            if (n.terminal) {
                if (&n == leaf) found = counter;
                ++counter;
                return;
            }
            for (const TreeNode& c : n.children) walk(c);
        };
        walk(root);
        return found;
    }

    // For `int(<a>) == int(<b>)`, mirror the earlier field's value into the
    // later one (e.g. a derived server echo repeats the client's number).
    // `root`, when given, provides whole-session fallback for field lookup
    // and defines the document order.
    bool try_equality_fix(TreeNode& node, TreeNode* root, const constraint::Expr& e) {
        auto eq = constraint::as_int_equality(e);
        if (!eq) return false;
        TreeNode* la = find_field_leaf(node, eq->a);
        if (!la && root) la = find_field_leaf(*root, eq->a);
        TreeNode* lb = find_field_leaf(node, eq->b);
        if (!lb && root) lb = find_field_leaf(*root, eq->b);
        if (!la || !lb || la == lb) return false;
        TreeNode& order_root = root ? *root : node;
        int oa = leaf_order(order_root, la);
        int ob = leaf_order(order_root, lb);
        if (oa < 0 || ob < 0) return false;
        TreeNode* src = (oa <= ob) ? la : lb;
        TreeNode* dst = (oa <= ob) ? lb : la;
        auto v = parse_ll(src->bytes);
        if (!v) return false;
        auto lex = c.lexemes.find(dst->symbol);
        if (lex == c.lexemes.end() || lex->second->kind != TerminalDef::Kind::regex) {
            return false;
        }
        std::string s = std::to_string(*v);
        if (!c.regex(lex->second->text).full_match(s)) return false;
        dst->bytes = s;
        return true;
    }

    // ---- message-subtree expansion (party fixed) ----

    TreeNode expand_msg(const std::string& name, Party party, bool explicit_p, int depth,
                        const std::optional<std::string>& kw) {
        if (c.lexemes.count(name)) return lexeme_leaf(name, party, explicit_p);
        const Production* p = nullptr;
        auto it = c.prods.find(name);
        if (it == c.prods.end()) throw UndefinedNonterminal("<" + name + ">");
        p = it->second;
        return with_local_constraints(
            name, [&] { return expand_msg_once(*p, party, explicit_p, depth, kw); });
    }

    TreeNode expand_msg_once(const Production& p, Party party, bool explicit_p, int depth,
                             const std::optional<std::string>& kw) {
        std::vector<int> viable;
        for (size_t a = 0; a < p.alternatives.size(); ++a) {
            const Alternative& alt = p.alternatives[a];
            if (c.alt_depth(alt) > depth) continue;
            if (kw) {
                bool can = false;
                for (const Symbol& sym : alt.symbols) {
                    if (symbol_realizes(sym, *kw)) {
                        can = true;
                        break;
                    }
                }
                if (!can) continue;
            }
            viable.push_back(static_cast<int>(a));
        }
        if (viable.empty()) {
            throw DerivationExhausted("no viable alternative for <" + p.name + "> at depth " +
                                      std::to_string(depth));
        }
        int ai = viable[rng.below(viable.size())];
        const Alternative& alt = p.alternatives[ai];

        int realizer = -1;
        if (kw) {
            std::vector<int> cands;
            for (size_t s = 0; s < alt.symbols.size(); ++s) {
                if (symbol_realizes(alt.symbols[s], *kw)) cands.push_back(static_cast<int>(s));
            }
            realizer = cands[rng.below(cands.size())];
        }

        TreeNode node;
        node.symbol = p.name;
        node.party = party;
        node.explicit_party = explicit_p;
        node.alt_index = ai;
        for (size_t s = 0; s < alt.symbols.size(); ++s) {
            const Symbol& sym = alt.symbols[s];
            std::optional<std::string> child_kw;
            if (static_cast<int>(s) == realizer && sym.kind == Symbol::Kind::nonterminal) {
                child_kw = kw;
            }
            if (sym.kind != Symbol::Kind::nonterminal) {
                node.children.push_back(inline_leaf(sym, party));
            } else {
                Party child_party = (sym.party != Party::none) ? sym.party : party;
                node.children.push_back(expand_msg(sym.text, child_party,
                                                   sym.party != Party::none, depth - 1,
                                                   child_kw));
            }
        }
        return node;
    }

    // ---- session-structure expansion (tracks command progress) ----

    struct StructResult {
        TreeNode node;
        int progress = 0;
    };

    StructResult expand_struct(const std::string& name, int depth, int from,
                               const std::set<int>& targets) {
        if (c.lexemes.count(name)) {
            if (!targets.count(from)) {
                throw DerivationExhausted("lexeme <" + name + "> cannot advance command progress");
            }
            return {lexeme_leaf(name, Party::none, false), from};
        }
        auto it = c.prods.find(name);
        if (it == c.prods.end()) throw UndefinedNonterminal("<" + name + ">");
        const Production& p = *it->second;

        auto owned = c.g.constraints_of(name);
        for (int attempt = 0; attempt < lim.max_attempts; ++attempt) {
            StructResult r = expand_struct_once(p, depth, from, targets);
            if (owned.empty() || local_ok(r.node, owned)) return r;
        }
        throw DerivationExhausted("could not satisfy constraints of <" + name + ">");
    }

    StructResult expand_struct_once(const Production& p, int depth, int from,
                                    const std::set<int>& targets) {
        // Per alternative: symbol relations plus suffix-reachability sets.
        struct AltPlan {
            int index;
            std::vector<Rel> rels;
            std::vector<std::set<int>> goal;  // goal[k]: progress values from
                                              // which symbols k.. can reach targets
        };
        std::vector<AltPlan> viable;
        for (size_t a = 0; a < p.alternatives.size(); ++a) {
            const Alternative& alt = p.alternatives[a];
            if (c.alt_depth(alt) > depth) continue;
            AltPlan ap;
            ap.index = static_cast<int>(a);
            bool dead = false;
            for (const Symbol& sym : alt.symbols) {
                auto r = plan.symbol_rel(sym);
                if (!r) {
                    dead = true;
                    break;
                }
                ap.rels.push_back(std::move(*r));
            }
            if (dead) continue;
            size_t n = ap.rels.size();
            ap.goal.assign(n + 1, {});
            ap.goal[n] = targets;
            for (size_t k = n; k > 0; --k) {
                for (const auto& [i, j] : ap.rels[k - 1]) {
                    if (ap.goal[k].count(j)) ap.goal[k - 1].insert(i);
                }
            }
            if (!ap.goal[0].count(from)) continue;
            viable.push_back(std::move(ap));
        }
        if (viable.empty()) {
            throw DerivationExhausted("no viable alternative for <" + p.name +
                                      "> toward the requested command sequence");
        }
        const AltPlan& ap = viable[rng.below(viable.size())];
        const Alternative& alt = p.alternatives[ap.index];

        TreeNode node;
        node.symbol = p.name;
        node.party = Party::none;
        node.alt_index = ap.index;
        int cur = from;
        for (size_t s = 0; s < alt.symbols.size(); ++s) {
            const Symbol& sym = alt.symbols[s];
            std::vector<int> nexts;
            for (const auto& [i, j] : ap.rels[s]) {
                if (i == cur && ap.goal[s + 1].count(j)) nexts.push_back(j);
            }
            std::sort(nexts.begin(), nexts.end());
            nexts.erase(std::unique(nexts.begin(), nexts.end()), nexts.end());
            // Bias toward making progress so bounded depth suffices.
            int j = nexts.back();
            if (nexts.size() > 1 && rng.below(3) == 0) {
                j = nexts[rng.below(nexts.size())];
            }

            if (sym.kind != Symbol::Kind::nonterminal) {
                node.children.push_back(inline_leaf(sym, Party::none));
            } else if (sym.party == Party::client) {
                std::optional<std::string> kw;
                if (j == cur + 1) kw = plan.commands[cur];
                node.children.push_back(
                    expand_msg(sym.text, Party::client, true, depth - 1, kw));
            } else if (sym.party == Party::server) {
                node.children.push_back(
                    expand_msg(sym.text, Party::server, true, depth - 1, std::nullopt));
            } else if (c.lexemes.count(sym.text)) {
                node.children.push_back(lexeme_leaf(sym.text, Party::none, false));
            } else {
                StructResult sub = expand_struct(sym.text, depth - 1, cur, {j});
                node.children.push_back(std::move(sub.node));
                j = sub.progress;
            }
            cur = j;
        }
        return {std::move(node), cur};
    }

    // Re-checks every constraint with whole-session fallback; violations are
    // repaired in place (mirror / in-range rewrite) where possible. Returns
    // false when a violation resists repair, asking for a fresh sample.
    bool repair_session(TreeNode& root) {
        for (int guard = 0; guard < 64; ++guard) {
            TreeNode* owner = nullptr;
            const grammar::AttachedConstraint* bad = nullptr;
            std::function<bool(TreeNode&)> walk = [&](TreeNode& n) -> bool {
                if (!n.terminal && !n.symbol.empty()) {
                    for (const grammar::AttachedConstraint* ac :
                         c.g.constraints_of(n.symbol)) {
                        bool ok;
                        try {
                            ok = eval_constraint(n, root, ac->expr).satisfied;
                        } catch (const UnresolvableFieldRef&) {
                            ok = false;  // fixes below will fail; resample
                        }
                        if (!ok) {
                            owner = &n;
                            bad = ac;
                            return true;
                        }
                    }
                }
                for (TreeNode& ch : n.children) {
                    if (walk(ch)) return true;
                }
                return false;
            };
            if (!walk(root)) return true;
            if (try_equality_fix(*owner, &root, bad->expr)) continue;
            if (try_interval_fix(*owner, &root, bad->expr)) continue;
            return false;
        }
        return false;
    }

    TreeNode session() {
        for (int attempt = 0; attempt < lim.max_attempts; ++attempt) {
            TreeNode root;
            try {
                StructResult r =
                    expand_struct("start", lim.max_depth, 0, {plan.m});
                root = std::move(r.node);
            } catch (const DerivationExhausted&) {
                continue;
            }
            if (repair_session(root)) return root;
        }
        throw DerivationExhausted("no satisfying derivation within " +
                                  std::to_string(lim.max_attempts) + " attempts");
    }
};

// --- message parser ---------------------------------------------------------

struct ParseCtx {
    const Compiled& c;
    std::string_view input;
    size_t furthest = 0;
    std::set<std::string> expected;
    long budget = 2'000'000;

    void note(size_t pos, const std::string& what) {
        if (pos > furthest) {
            furthest = pos;
            expected.clear();
        }
        if (pos == furthest) expected.insert(what);
    }
};

std::string quoted_desc(const std::string& bytes) {
    std::string out = "\"";
    for (char ch : bytes) {
        switch (ch) {
            case '\r': out += "\\r"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\\': out += "\\\\"; break;
            case '"': out += "\\\""; break;
            default: out += ch;
        }
    }
    out += '"';
    return out;
}

using Cont = std::function<bool(size_t)>;

bool p_nt(ParseCtx& ctx, const std::string& name, Party party, bool explicit_p, size_t pos,
          TreeNode& out, const Cont& k);

bool p_seq(ParseCtx& ctx, const std::vector<Symbol>& syms, size_t idx, Party party,
           size_t pos, std::vector<TreeNode>& kids, const Cont& k) {
    if (--ctx.budget < 0) {
        throw ParseFailure(ctx.furthest,
                           std::vector<std::string>(ctx.expected.begin(), ctx.expected.end()));
    }
    if (idx == syms.size()) return k(pos);
    const Symbol& sym = syms[idx];
    if (sym.kind == Symbol::Kind::literal) {
        const std::string& lit = sym.text;
        if (ctx.input.compare(pos, lit.size(), lit) == 0 && pos + lit.size() <= ctx.input.size()) {
            TreeNode leaf;
            leaf.party = party;
            leaf.terminal = true;
            leaf.bytes = lit;
            kids.push_back(std::move(leaf));
            if (p_seq(ctx, syms, idx + 1, party, pos + lit.size(), kids, k)) return true;
            kids.pop_back();
        } else {
            ctx.note(pos, quoted_desc(lit));
        }
        return false;
    }
    if (sym.kind == Symbol::Kind::regex) {
        auto ends = ctx.c.regex(sym.text).match_ends(ctx.input, pos);
        if (ends.empty()) ctx.note(pos, "re(" + quoted_desc(sym.text) + ")");
        for (size_t e : ends) {
            TreeNode leaf;
            leaf.party = party;
            leaf.terminal = true;
            leaf.bytes = std::string(ctx.input.substr(pos, e - pos));
            kids.push_back(std::move(leaf));
            if (p_seq(ctx, syms, idx + 1, party, e, kids, k)) return true;
            kids.pop_back();
        }
        return false;
    }
    // Nonterminal reference.
    Party child_party = (sym.party != Party::none) ? sym.party : party;
    TreeNode node;
    bool ok = p_nt(ctx, sym.text, child_party, sym.party != Party::none, pos, node,
                   [&](size_t e) {
                       kids.push_back(std::move(node));
                       if (p_seq(ctx, syms, idx + 1, party, e, kids, k)) return true;
                       node = std::move(kids.back());
                       kids.pop_back();
                       return false;
                   });
    return ok;
}

bool p_nt(ParseCtx& ctx, const std::string& name, Party party, bool explicit_p, size_t pos,
          TreeNode& out, const Cont& k) {
    auto lex = ctx.c.lexemes.find(name);
    if (lex != ctx.c.lexemes.end()) {
        const TerminalDef& def = *lex->second;
        out = TreeNode{};
        out.symbol = name;
        out.party = party;
        out.explicit_party = explicit_p;
        out.terminal = true;
        if (def.kind == TerminalDef::Kind::literal) {
            if (ctx.input.compare(pos, def.text.size(), def.text) == 0 &&
                pos + def.text.size() <= ctx.input.size()) {
                out.bytes = def.text;
                return k(pos + def.text.size());
            }
            ctx.note(pos, "<" + name + ">");
            return false;
        }
        auto ends = ctx.c.regex(def.text).match_ends(ctx.input, pos);
        if (ends.empty()) ctx.note(pos, "<" + name + ">");
        for (size_t e : ends) {
            out.bytes = std::string(ctx.input.substr(pos, e - pos));
            if (k(e)) return true;
        }
        return false;
    }
    auto it = ctx.c.prods.find(name);
    if (it == ctx.c.prods.end()) throw UndefinedNonterminal("<" + name + ">");
    const Production& p = *it->second;
    for (size_t a = 0; a < p.alternatives.size(); ++a) {
        out = TreeNode{};
        out.symbol = name;
        out.party = party;
        out.explicit_party = explicit_p;
        out.alt_index = static_cast<int>(a);
        if (p_seq(ctx, p.alternatives[a].symbols, 0, party, pos, out.children, k)) {
            return true;
        }
    }
    return false;
}

void walk_messages(const TreeNode& n, std::vector<int>& path, std::vector<Message>& out) {
    if (n.explicit_party) {
        Message m;
        m.party = n.party;
        m.bytes = leaf_bytes(n);
        m.symbol = n.symbol;
        m.path = path;
        out.push_back(std::move(m));
        return;
    }
    if (n.terminal) {
        if (!n.bytes.empty()) {
            throw Error("derived bytes fall outside any party-tagged subtree");
        }
        return;
    }
    for (size_t i = 0; i < n.children.size(); ++i) {
        path.push_back(static_cast<int>(i));
        walk_messages(n.children[i], path, out);
        path.pop_back();
    }
}

}  // namespace

std::string leaf_bytes(const TreeNode& n) {
    if (n.terminal) return n.bytes;
    std::string out;
    for (const TreeNode& c : n.children) out += leaf_bytes(c);
    return out;
}

TreeNode derive(const grammar::IOGrammar& g, uint64_t seed, const DerivationLimits& lim) {
    return derive_for_commands(g, {}, seed, lim);
}

TreeNode derive_for_commands(const grammar::IOGrammar& g,
                             const std::vector<std::string>& commands, uint64_t seed,
                             const DerivationLimits& lim) {
    Compiled c(g);
    if (!c.productive("start")) {
        throw DerivationExhausted("<start> has no finite derivation");
    }
    Planner plan(c, commands);
    if (!plan.rel.at("start").count({0, plan.m})) {
        throw DerivationExhausted("grammar cannot realize the requested command sequence");
    }
    util::Rng rng(seed);
    Deriver d{c, plan, rng, lim};
    return d.session();
}

bool check_generatable(const grammar::IOGrammar& g, const std::vector<std::string>& commands) {
    Compiled c(g);
    if (!c.productive("start")) return false;
    Planner plan(c, commands);
    return plan.rel.at("start").count({0, static_cast<int>(commands.size())}) > 0;
}

TreeNode parse_message(const grammar::IOGrammar& g, const std::string& nt,
                       const std::string& bytes, grammar::Party party) {
    Compiled c(g);
    ParseCtx ctx{c, bytes};
    TreeNode root;
    bool ok = p_nt(ctx, nt, party, party != grammar::Party::none, 0, root, [&](size_t e) {
        if (e == bytes.size()) return true;
        ctx.note(e, "<end of message>");
        return false;
    });
    if (!ok) {
        throw ParseFailure(ctx.furthest,
                           std::vector<std::string>(ctx.expected.begin(), ctx.expected.end()));
    }
    return root;
}

EvalOutcome eval_constraint(const TreeNode& scope, const TreeNode& root,
                            const constraint::Expr& e) {
    Evaluator ev{scope, &root};
    EvalOutcome out;
    out.satisfied = ev.boolean(e);
    out.used_fallback = ev.used_fallback;
    return out;
}

bool eval_constraint(const TreeNode& root, const constraint::Expr& e) {
    return eval_constraint(root, root, e).satisfied;
}

std::optional<Violation> first_violation(const grammar::IOGrammar& g, const TreeNode& root) {
    std::optional<Violation> result;
    std::function<bool(const TreeNode&)> walk = [&](const TreeNode& n) {
        if (!n.terminal && !n.symbol.empty()) {
            for (const grammar::AttachedConstraint* ac : g.constraints_of(n.symbol)) {
                EvalOutcome out = eval_constraint(n, root, ac->expr);
                if (!out.satisfied) {
                    result = Violation{ac->owner, constraint::to_string(ac->expr),
                                       out.used_fallback};
                    return true;
                }
            }
        }
        for (const TreeNode& c : n.children) {
            if (walk(c)) return true;
        }
        return false;
    };
    walk(root);
    return result;
}

std::vector<Message> messages(const TreeNode& root) {
    std::vector<Message> out;
    std::vector<int> path;
    walk_messages(root, path, out);
    return out;
}

TreeNode* node_at(TreeNode& root, const std::vector<int>& path) {
    TreeNode* cur = &root;
    for (int i : path) {
        if (i < 0 || static_cast<size_t>(i) >= cur->children.size()) return nullptr;
        cur = &cur->children[static_cast<size_t>(i)];
    }
    return cur;
}

const TreeNode* node_at(const TreeNode& root, const std::vector<int>& path) {
    return node_at(const_cast<TreeNode&>(root), path);
}

void splice(TreeNode& root, const std::vector<int>& path, TreeNode replacement) {
    TreeNode* slot = node_at(root, path);
    if (!slot) throw Error("splice path does not name a node");
    replacement.explicit_party = true;
    *slot = std::move(replacement);
}

}  // namespace specforge::derivation
