#include "specforge/synth.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <utility>

#include "json.hpp"
#include "specforge/constraint.hpp"
#include "specforge/derivation.hpp"
#include "specforge/errors.hpp"
#include "specforge/provider.hpp"
#include "specforge/util.hpp"

namespace specforge::synth {

using grammar::Alternative;
using grammar::IOGrammar;
using grammar::Production;
using grammar::Symbol;
using grammar::TerminalDef;
using nlohmann::json;

namespace {

std::string sanitize_name(const std::string& label) {
    std::string out;
    for (char c : util::to_lower(label)) {
        out += (std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    }
    if (out.empty()) out = "x";
    return out;
}

json provenance_json(const std::vector<ingest::Provenance>& anchors) {
    json arr = json::array();
    for (const auto& a : anchors) {
        arr.push_back({{"rfc_id", a.rfc_id},
                       {"section_id", a.section_id},
                       {"paragraphs", a.paragraph_indices}});
    }
    return arr;
}

std::vector<ingest::Provenance> provenance_from(const json& arr,
                                                const std::string& where) {
    if (!arr.is_array()) throw SchemaViolation(where + ": provenance must be an array");
    std::vector<ingest::Provenance> out;
    for (const json& a : arr) {
        if (!a.is_object() || !a.contains("rfc_id") || !a.at("rfc_id").is_string() ||
            !a.contains("section_id") || !a.at("section_id").is_string() ||
            !a.contains("paragraphs") || !a.at("paragraphs").is_array()) {
            throw SchemaViolation(where + ": malformed provenance entry");
        }
        ingest::Provenance p;
        p.rfc_id = a.at("rfc_id").get<std::string>();
        p.section_id = a.at("section_id").get<std::string>();
        for (const json& idx : a.at("paragraphs")) {
            if (!idx.is_number_integer() || idx.get<long long>() < 0) {
                throw SchemaViolation(where + ": paragraph indices must be non-negative integers");
            }
            p.paragraph_indices.push_back(idx.get<int>());
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace

FsmSkeleton build_skeleton(const std::vector<graph::Mtp>& mtps) {
    if (mtps.empty()) throw EmptyInput("no transition paths to build a skeleton from");

    // A skeleton is a deterministic outline: the same command from the same
    // state must always land in the same successor.
    std::map<std::pair<std::string, std::string>, std::string> dest;
    for (const graph::Mtp& m : mtps) {
        for (const auto& t : m.triples) {
            auto key = std::make_pair(t[0], t[1]);
            auto [it, inserted] = dest.emplace(key, t[2]);
            if (!inserted && it->second != t[2]) {
                throw InconsistentMtps("command " + t[1] + " from state " + t[0] +
                                       " goes to both " + it->second + " and " + t[2]);
            }
        }
    }

    FsmSkeleton sk;
    std::set<std::array<std::string, 3>> seen;
    std::set<std::string> taken_names;
    for (const graph::Mtp& m : mtps) {
        for (const auto& t : m.triples) {
            if (!seen.insert(t).second) continue;
            Exchange ex;
            ex.state = t[0];
            ex.command = t[1];
            ex.next_state = t[2];
            std::string base = sanitize_name(t[1]);
            std::string suffix;
            for (int n = 2; taken_names.count("c_" + base + suffix); ++n) {
                suffix = "_" + std::to_string(n);
            }
            ex.client_nt = "c_" + base + suffix;
            ex.server_nt = "s_" + base + suffix;
            taken_names.insert(ex.client_nt);
            sk.exchanges.push_back(std::move(ex));
        }
    }
    return sk;
}

std::string synthesis_payload(const FsmSkeleton& skeleton,
                              const std::vector<ingest::SectionRecord>& retrieved) {
    json exchanges = json::array();
    for (const Exchange& ex : skeleton.exchanges) {
        exchanges.push_back({{"state", ex.state},
                             {"command", ex.command},
                             {"next_state", ex.next_state},
                             {"client_nt", ex.client_nt},
                             {"server_nt", ex.server_nt}});
    }
    json sections = json::array();
    for (const ingest::SectionRecord& rec : retrieved) {
        json paras = json::array();
        for (const auto& p : rec.paragraphs) {
            paras.push_back({{"index", p.index}, {"text", p.text}});
        }
        sections.push_back({{"rfc_id", rec.rfc_id},
                            {"section_id", rec.section_id},
                            {"title", rec.title},
                            {"paragraphs", paras}});
    }
    return json{{"skeleton", {{"exchanges", exchanges}}}, {"sections", sections}}.dump(2);
}

grammar::IOGrammar synthesize(const extract::Context& ctx, const FsmSkeleton& skeleton,
                              const std::vector<ingest::SectionRecord>& retrieved) {
    if (retrieved.empty()) {
        throw EmptyInput("grammar synthesis needs at least one retrieved section");
    }
    auto tpl = provider::load_prompt(ctx.prompts_dir / "synthesize.md");
    auto req = provider::make_request(tpl, synthesis_payload(skeleton, retrieved),
                                      ctx.model_id, extract::kExtractTemperature);

    for (int attempt = 0;; ++attempt) {
        req.attempt = attempt;
        std::string text = ctx.llm.complete(req).text;
        try {
            IOGrammar g = grammar::parse_grammar_lenient(text);
            g = normalize_grammar(g);
            grammar::validate(g);
            return g;
        } catch (const GrammarSyntaxError& e) {
            if (attempt >= 1) {
                throw GrammarSyntaxError(std::string(e.what()) +
                                             "\n--- provider output ---\n" + text,
                                         e.line, e.column);
            }
        } catch (const Error& e) {
            if (attempt >= 1) {
                throw SchemaViolation(std::string("synthesized grammar is invalid: ") +
                                      e.what());
            }
        }
    }
}

const std::vector<std::pair<std::string, TerminalDef>>& builtin_lexemes() {
    auto lit = [](const char* bytes) {
        TerminalDef d;
        d.kind = TerminalDef::Kind::literal;
        d.text = bytes;
        return d;
    };
    auto rex = [](const char* pattern) {
        TerminalDef d;
        d.kind = TerminalDef::Kind::regex;
        d.text = pattern;
        return d;
    };
    static const std::vector<std::pair<std::string, TerminalDef>> table = {
        {"crlf", lit("\r\n")},    {"lf", lit("\n")},
        {"sp", lit(" ")},         {"space", lit(" ")},
        {"tab", lit("\t")},       {"digit", rex("[0-9]")},
        {"digits", rex("[0-9]+")}, {"number", rex("[0-9]+")},
        {"alpha", rex("[A-Za-z]+")}, {"alnum", rex("[A-Za-z0-9]+")},
        {"token", rex("[A-Za-z0-9._-]+")}, {"word", rex("[A-Za-z0-9._-]+")},
        {"char", rex("[ -~]")},   {"text", rex("[ -~]*")},
    };
    return table;
}

grammar::IOGrammar normalize_grammar(const grammar::IOGrammar& g) {
    IOGrammar out;

    // Group split definitions under one production, first-definition order,
    // and drop duplicate alternatives.
    std::vector<std::string> order;
    std::map<std::string, Production> merged;
    for (const Production& p : g.productions) {
        auto it = merged.find(p.name);
        if (it == merged.end()) {
            order.push_back(p.name);
            merged.emplace(p.name, p);
        } else {
            for (const Alternative& alt : p.alternatives) {
                it->second.alternatives.push_back(alt);
            }
        }
    }
    auto start_pos = std::find(order.begin(), order.end(), "start");
    if (start_pos != order.end() && start_pos != order.begin()) {
        std::rotate(order.begin(), start_pos, start_pos + 1);
    }
    for (const std::string& name : order) {
        Production p = merged.at(name);
        std::vector<Alternative> unique;
        for (Alternative& alt : p.alternatives) {
            if (std::find(unique.begin(), unique.end(), alt) == unique.end()) {
                unique.push_back(std::move(alt));
            }
        }
        p.alternatives = std::move(unique);
        out.productions.push_back(std::move(p));
    }

    // Terminals: first definition of a name wins.
    std::set<std::string> have_terminal;
    for (const auto& [name, def] : g.terminals) {
        if (have_terminal.insert(name).second) out.terminals.emplace_back(name, def);
    }

    // Constraints: exact duplicates collapse.
    for (const grammar::AttachedConstraint& ac : g.constraints) {
        if (std::find(out.constraints.begin(), out.constraints.end(), ac) ==
            out.constraints.end()) {
            out.constraints.push_back(ac);
        }
    }
    out.provenance = g.provenance;

    // Complete the terminals block: a referenced-but-undefined name either
    // has a well-known meaning or the grammar is broken.
    std::vector<std::string> missing;
    auto note_ref = [&](const std::string& name) {
        if (out.defined(name)) return;
        if (std::find(missing.begin(), missing.end(), name) == missing.end()) {
            missing.push_back(name);
        }
    };
    for (const Production& p : out.productions) {
        for (const Alternative& alt : p.alternatives) {
            for (const Symbol& sym : alt.symbols) {
                if (sym.kind == Symbol::Kind::nonterminal) note_ref(sym.text);
            }
        }
    }
    for (const grammar::AttachedConstraint& ac : out.constraints) {
        if (!out.defined(ac.owner)) {
            throw UndefinedNonterminal("where clause attached to undefined <" + ac.owner + ">");
        }
        for (const std::string& field : constraint::field_refs(ac.expr)) note_ref(field);
    }
    const auto& table = builtin_lexemes();
    for (const std::string& name : missing) {
        auto it = std::find_if(table.begin(), table.end(),
                               [&](const auto& row) { return row.first == name; });
        if (it == table.end()) {
            throw UndefinedNonterminal("reference to undefined nonterminal <" + name +
                                       "> and no well-known definition for it");
        }
        out.terminals.emplace_back(it->first, it->second);
    }
    return out;
}

const char* patch_kind_name(PatchKind k) {
    switch (k) {
        case PatchKind::rewrite_production: return "rewrite_production";
        case PatchKind::add_alternative: return "add_alternative";
        case PatchKind::add_constraint: return "add_constraint";
        case PatchKind::modify_constraint: return "modify_constraint";
    }
    return "?";
}

PatchKind patch_kind_from(const std::string& name) {
    for (PatchKind k : {PatchKind::rewrite_production, PatchKind::add_alternative,
                        PatchKind::add_constraint, PatchKind::modify_constraint}) {
        if (name == patch_kind_name(k)) return k;
    }
    throw SchemaViolation("unknown patch kind: " + name);
}

std::string patch_to_json(const Patch& p) {
    json entries = json::array();
    for (const PatchEntry& e : p.entries) {
        entries.push_back({{"target_rule", e.target_rule},
                           {"kind", patch_kind_name(e.kind)},
                           {"new_text", e.new_text},
                           {"provenance", provenance_json(e.provenance)},
                           {"rationale", e.rationale}});
    }
    return json{{"entries", entries}}.dump(2) + "\n";
}

Patch patch_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaViolation(std::string("patch is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("entries") || !j.at("entries").is_array()) {
        throw SchemaViolation("patch must be an object with an entries array");
    }
    Patch p;
    for (const json& e : j.at("entries")) {
        if (!e.is_object()) throw SchemaViolation("patch entry must be an object");
        for (const char* key : {"target_rule", "kind", "new_text", "rationale"}) {
            if (!e.contains(key) || !e.at(key).is_string()) {
                throw SchemaViolation(std::string("patch entry needs string field ") + key);
            }
        }
        if (!e.contains("provenance")) {
            throw SchemaViolation("patch entry needs a provenance array");
        }
        PatchEntry entry;
        entry.target_rule = e.at("target_rule").get<std::string>();
        entry.kind = patch_kind_from(e.at("kind").get<std::string>());
        entry.new_text = e.at("new_text").get<std::string>();
        entry.rationale = e.at("rationale").get<std::string>();
        entry.provenance = provenance_from(e.at("provenance"), "patch entry");
        p.entries.push_back(std::move(entry));
    }
    return p;
}

bool check_mtp_generatable(const grammar::IOGrammar& g, const graph::Mtp& mtp) {
    return derivation::check_generatable(g, mtp.commands());
}

namespace {

// Parses patch text as grammar syntax. Text for a non-start target gets a
// synthetic <start> wrapper so the parser's entry rule is satisfied.
IOGrammar parse_patch_fragment(const std::string& target, const std::string& body,
                               bool wrap) {
    std::string text = body;
    if (wrap) text = "<start> ::= <" + target + ">\n" + body;
    try {
        return grammar::parse_grammar_lenient(text);
    } catch (const Error& e) {
        throw PatchRejected(PatchRejected::Reason::parse_failure,
                            "patch text for <" + target + "> does not parse: " + e.what());
    }
}

void apply_entry(IOGrammar& g, const PatchEntry& e) {
    Production* target = nullptr;
    for (Production& p : g.productions) {
        if (p.name == e.target_rule) target = &p;
    }
    if (!target) {
        throw PatchRejected(PatchRejected::Reason::unknown_target,
                            "no production named <" + e.target_rule + ">");
    }

    switch (e.kind) {
        case PatchKind::rewrite_production: {
            bool wrap = e.target_rule != "start";
            IOGrammar frag = parse_patch_fragment(e.target_rule, e.new_text, wrap);
            const Production* replacement = frag.find(e.target_rule);
            if (!replacement) {
                throw PatchRejected(PatchRejected::Reason::parse_failure,
                                    "patch text does not define <" + e.target_rule + ">");
            }
            for (const Production& p : frag.productions) {
                if (p.name == "start" && wrap) continue;  // synthetic wrapper
                if (p.name == e.target_rule) continue;
                if (g.find(p.name) || g.find_terminal(p.name)) {
                    throw PatchRejected(
                        PatchRejected::Reason::parse_failure,
                        "patch text redefines <" + p.name + "> which is not its target");
                }
            }
            target->alternatives = replacement->alternatives;
            // Helper rules that are genuinely new ride along as additions.
            for (const Production& p : frag.productions) {
                if ((p.name == "start" && wrap) || p.name == e.target_rule) continue;
                g.productions.push_back(p);
            }
            for (const auto& [name, def] : frag.terminals) {
                if (!g.find_terminal(name) && !g.find(name)) {
                    g.terminals.emplace_back(name, def);
                }
            }
            if (!frag.constraints.empty()) {
                // Fresh where clauses replace the rule's old ones.
                std::erase_if(g.constraints, [&](const grammar::AttachedConstraint& ac) {
                    return ac.owner == e.target_rule;
                });
                for (grammar::AttachedConstraint ac : frag.constraints) {
                    g.constraints.push_back(std::move(ac));
                }
            }
            break;
        }
        case PatchKind::add_alternative: {
            IOGrammar frag = parse_patch_fragment(e.target_rule,
                                                  "<start> ::= " + e.new_text, false);
            for (const Alternative& alt : frag.productions[0].alternatives) {
                target->alternatives.push_back(alt);
            }
            break;
        }
        case PatchKind::add_constraint:
        case PatchKind::modify_constraint: {
            constraint::Expr expr;
            try {
                expr = constraint::parse_constraint(e.new_text);
            } catch (const Error& err) {
                throw PatchRejected(PatchRejected::Reason::parse_failure,
                                    "constraint for <" + e.target_rule +
                                        "> does not parse: " + err.what());
            }
            if (e.kind == PatchKind::modify_constraint) {
                std::erase_if(g.constraints, [&](const grammar::AttachedConstraint& ac) {
                    return ac.owner == e.target_rule;
                });
            }
            grammar::AttachedConstraint ac;
            ac.owner = e.target_rule;
            ac.expr = std::move(expr);
            g.constraints.push_back(std::move(ac));
            break;
        }
    }
    if (!e.provenance.empty()) {
        auto& anchors = g.provenance[e.target_rule];
        anchors.insert(anchors.end(), e.provenance.begin(), e.provenance.end());
    }
}

}  // namespace

grammar::IOGrammar apply_patch(const grammar::IOGrammar& g, const Patch& p,
                               const std::vector<std::vector<std::string>>& protected_mtps) {
    IOGrammar patched = g;
    for (const PatchEntry& e : p.entries) apply_entry(patched, e);

    try {
        patched = normalize_grammar(patched);
        grammar::validate(patched);
    } catch (const Error& e) {
        throw PatchRejected(PatchRejected::Reason::schema_failure, e.what());
    }

    for (const std::vector<std::string>& commands : protected_mtps) {
        if (derivation::check_generatable(g, commands) &&
            !derivation::check_generatable(patched, commands)) {
            throw PatchRejected(PatchRejected::Reason::mtp_regression,
                                "path " + util::join(commands, ",") +
                                    " was generatable before the patch but not after");
        }
    }
    return patched;
}

}  // namespace specforge::synth
