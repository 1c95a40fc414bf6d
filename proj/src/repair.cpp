#include "specforge/repair.hpp"

#include <algorithm>
#include <functional>
#include <set>

#include "json.hpp"
#include "specforge/constraint.hpp"
#include "specforge/derivation.hpp"
#include "specforge/errors.hpp"
#include "specforge/regexlite.hpp"
#include "specforge/retrieve.hpp"
#include "specforge/util.hpp"

namespace specforge::repair {

using nlohmann::json;

namespace {

// --- snippets ---------------------------------------------------------------

struct Snippet {
    std::string text;
    int line = 0;  // 1-based in the serialized grammar
};

// The rule as serialized — definition line plus its where clauses — with the
// definitions of the lexemes it references appended for context.
Snippet rule_snippet(const grammar::IOGrammar& g, const std::string& name) {
    const std::string serialized = grammar::serialize_grammar(g);
    const auto lines = util::split_lines(serialized);
    const std::string prefix = "<" + name + "> ::=";

    Snippet out;
    size_t at = lines.size();
    for (size_t i = 0; i < lines.size(); ++i) {
        if (util::starts_with(lines[i], prefix)) {
            at = i;
            out.line = static_cast<int>(i) + 1;
            break;
        }
    }
    if (at == lines.size()) {
        throw LocalizationFailure("rule <" + name + "> is not defined in the grammar");
    }
    out.text = lines[at];
    for (size_t j = at + 1; j < lines.size() && util::starts_with(lines[j], "where ");
         ++j) {
        out.text += "\n" + lines[j];
    }

    if (const grammar::Production* p = g.find(name)) {
        std::vector<std::string> lexemes;
        for (const grammar::Alternative& alt : p->alternatives) {
            for (const grammar::Symbol& sym : alt.symbols) {
                if (sym.kind != grammar::Symbol::Kind::nonterminal) continue;
                if (!g.find_terminal(sym.text)) continue;
                if (std::find(lexemes.begin(), lexemes.end(), sym.text) != lexemes.end())
                    continue;
                lexemes.push_back(sym.text);
            }
        }
        for (const std::string& t : lexemes) {
            const std::string tp = "<" + t + "> ::=";
            for (const std::string& ln : lines) {
                if (util::starts_with(ln, tp)) {
                    out.text += "\n" + ln;
                    break;
                }
            }
        }
    }
    return out;
}

// Whitespace-separated tokens with every CRLF kept as a token of its own —
// the line structure is usually what a repair is about.
std::vector<std::string> raw_tokens(const std::string& bytes) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (size_t i = 0; i < bytes.size();) {
        if (bytes.compare(i, 2, "\r\n") == 0) {
            flush();
            out.push_back("\r\n");
            i += 2;
        } else if (bytes[i] == ' ' || bytes[i] == '\t') {
            flush();
            ++i;
        } else {
            cur += bytes[i];
            ++i;
        }
    }
    flush();
    return out;
}

void collect_leaf_tokens(const derivation::TreeNode& n, std::vector<std::string>& out) {
    if (n.terminal) {
        for (std::string& t : raw_tokens(n.bytes)) out.push_back(std::move(t));
        return;
    }
    for (const derivation::TreeNode& c : n.children) collect_leaf_tokens(c, out);
}

std::string escape_control(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '\r')
            out += "\\r";
        else if (c == '\n')
            out += "\\n";
        else
            out += c;
    }
    return out;
}

// --- failure site reconstruction --------------------------------------------

// Index of the first exchange the harness did not accept.
size_t failing_index(const harness::Trace& trace) {
    for (size_t i = 0; i < trace.exchanges.size(); ++i) {
        if (trace.exchanges[i].verdict != harness::Verdict::accepted) return i;
    }
    return trace.exchanges.size();
}

// Re-derives the planned session for the trace's commands and seed — the
// same plan run_session executed, before observed replies were spliced in.
derivation::TreeNode planned_session(const grammar::IOGrammar& g,
                                     const harness::Trace& trace) {
    return derivation::derive_for_commands(g, trace.commands, trace.seed);
}

// Replays the splices run_session performed up to and including exchange
// `idx`, then finds the clause the harness tripped over: first the clauses
// inside the observed reply subtree, then the clauses of every wrapper
// production whose span is complete at that point — the order the harness
// checks them in.
std::optional<derivation::Violation> violated_clause(const grammar::IOGrammar& g,
                                                     const harness::Trace& trace,
                                                     size_t idx) {
    derivation::TreeNode session;
    std::vector<derivation::Message> msgs;
    try {
        session = planned_session(g, trace);
        msgs = derivation::messages(session);
    } catch (const Error&) {
        return std::nullopt;
    }
    if (idx >= msgs.size() || idx >= trace.exchanges.size()) return std::nullopt;

    for (size_t i = 0; i <= idx; ++i) {
        if (msgs[i].party != grammar::Party::server) continue;
        derivation::TreeNode observed;
        try {
            observed = derivation::parse_message(g, msgs[i].symbol,
                                                 trace.exchanges[i].bytes,
                                                 grammar::Party::server);
        } catch (const Error&) {
            return std::nullopt;
        }
        derivation::splice(session, msgs[i].path, std::move(observed));
    }

    const derivation::TreeNode* reply = derivation::node_at(session, msgs[idx].path);
    if (!reply) return std::nullopt;

    std::function<std::optional<derivation::Violation>(const derivation::TreeNode&)>
        walk = [&](const derivation::TreeNode& n) -> std::optional<derivation::Violation> {
        if (!n.symbol.empty() && !n.terminal) {
            for (const grammar::AttachedConstraint* ac : g.constraints_of(n.symbol)) {
                auto outcome = derivation::eval_constraint(n, session, ac->expr);
                if (!outcome.satisfied) {
                    return derivation::Violation{n.symbol, constraint::to_string(ac->expr),
                                                 outcome.used_fallback};
                }
            }
        }
        for (const derivation::TreeNode& c : n.children) {
            if (auto v = walk(c)) return v;
        }
        return std::nullopt;
    };
    if (auto v = walk(*reply)) return v;

    const std::vector<int>& path = msgs[idx].path;
    for (size_t k = 0; k < path.size(); ++k) {
        std::vector<int> prefix(path.begin(), path.begin() + k);
        bool complete = true;
        for (size_t j = idx + 1; j < msgs.size() && complete; ++j) {
            if (msgs[j].path.size() >= prefix.size() &&
                std::equal(prefix.begin(), prefix.end(), msgs[j].path.begin())) {
                complete = false;
            }
        }
        if (!complete) continue;
        const derivation::TreeNode* anc = derivation::node_at(session, prefix);
        if (!anc || anc->symbol.empty() || anc->terminal) continue;
        for (const grammar::AttachedConstraint* ac : g.constraints_of(anc->symbol)) {
            auto outcome = derivation::eval_constraint(*anc, session, ac->expr);
            if (!outcome.satisfied) {
                return derivation::Violation{anc->symbol, constraint::to_string(ac->expr),
                                             outcome.used_fallback};
            }
        }
    }
    return std::nullopt;
}

// The choice production owning the client command alternatives: the one
// with the most alternatives that (transitively) reach a client-tagged
// reference. Ties go to the earliest definition.
std::string client_choice_rule(const grammar::IOGrammar& g) {
    auto alt_reaches_client = [&](const grammar::Alternative& alt) {
        std::set<std::string> seen;
        std::vector<const grammar::Alternative*> stack{&alt};
        while (!stack.empty()) {
            const grammar::Alternative* a = stack.back();
            stack.pop_back();
            for (const grammar::Symbol& sym : a->symbols) {
                if (sym.kind != grammar::Symbol::Kind::nonterminal) continue;
                if (sym.party == grammar::Party::client) return true;
                if (!seen.insert(sym.text).second) continue;
                if (const grammar::Production* p = g.find(sym.text)) {
                    for (const grammar::Alternative& sub : p->alternatives)
                        stack.push_back(&sub);
                }
            }
        }
        return false;
    };

    std::string best;
    size_t best_count = 0;
    for (const grammar::Production& p : g.productions) {
        size_t count = 0;
        for (const grammar::Alternative& alt : p.alternatives) {
            if (alt_reaches_client(alt)) ++count;
        }
        if (count > best_count) {
            best_count = count;
            best = p.name;
        }
    }
    if (best.empty()) {
        throw LocalizationFailure("no production reaches a client-tagged message");
    }
    return best;
}

// Retrieval evidence: top sections for the missing command's words.
std::string coverage_evidence(const std::vector<ingest::SectionRecord>& corpus,
                              const std::string& query_text) {
    if (corpus.empty()) return {};
    auto index = retrieve::build_index(corpus);
    auto hits = retrieve::query_terms(index, retrieve::tokenize(query_text), 2);
    std::string out;
    for (const retrieve::Scored& h : hits) {
        for (const ingest::SectionRecord& rec : corpus) {
            if (rec.rfc_id != h.ref.rfc_id || rec.section_id != h.ref.section_id)
                continue;
            std::string text;
            for (const auto& p : rec.paragraphs) {
                if (!text.empty()) text += ' ';
                text += p.text;
            }
            if (text.size() > 400) text = text.substr(0, 400) + "...";
            if (!out.empty()) out += '\n';
            out += "RFC " + rec.rfc_id + " section " + rec.section_id + " (" + rec.title +
                   "): " + text;
            break;
        }
    }
    return out;
}

const char* patch_kind_guide(harness::ErrorClass cls) {
    switch (cls) {
        case harness::ErrorClass::GSyn: return "rewrite_production";
        case harness::ErrorClass::TMism: return "add_constraint or modify_constraint";
        case harness::ErrorClass::GMiss: return "add_alternative";
        case harness::ErrorClass::None: break;
    }
    return "";
}

bool kind_allowed(harness::ErrorClass cls, synth::PatchKind kind) {
    switch (cls) {
        case harness::ErrorClass::GSyn:
            return kind == synth::PatchKind::rewrite_production;
        case harness::ErrorClass::TMism:
            return kind == synth::PatchKind::add_constraint ||
                   kind == synth::PatchKind::modify_constraint;
        case harness::ErrorClass::GMiss:
            return kind == synth::PatchKind::add_alternative;
        case harness::ErrorClass::None:
            return false;
    }
    return false;
}

}  // namespace

// --- tokenization ------------------------------------------------------------

std::vector<std::string> tokenize_wire(const grammar::IOGrammar& g,
                                       const std::string& server_nt,
                                       const std::string& bytes) {
    if (!server_nt.empty() && g.defined(server_nt)) {
        try {
            auto tree = derivation::parse_message(g, server_nt, bytes,
                                                  grammar::Party::server);
            std::vector<std::string> out;
            collect_leaf_tokens(tree, out);
            return out;
        } catch (const Error&) {
            // fall through to the raw split
        }
    }
    return raw_tokens(bytes);
}

std::string abstract_tokens(const grammar::IOGrammar& g,
                            const std::vector<std::string>& tokens) {
    // Compile each regex lexeme once; lexemes that accept the empty string
    // are catch-alls and never abstract anything.
    std::vector<std::pair<std::string, rx::Regex>> regexes;
    for (const auto& [name, def] : g.terminals) {
        if (def.kind != grammar::TerminalDef::Kind::regex) continue;
        try {
            rx::Regex re = rx::Regex::parse(def.text);
            if (re.full_match("")) continue;
            regexes.emplace_back(name, std::move(re));
        } catch (const Error&) {
            continue;
        }
    }

    std::string out;
    for (const std::string& tok : tokens) {
        if (!out.empty()) out += ' ';
        const std::string* literal_name = nullptr;
        for (const auto& [name, def] : g.terminals) {
            if (def.kind == grammar::TerminalDef::Kind::literal && def.text == tok) {
                literal_name = &name;
                break;
            }
        }
        if (literal_name) {
            out += "<" + *literal_name + ">";
            continue;
        }
        const std::string* regex_name = nullptr;
        for (const auto& [name, re] : regexes) {
            if (re.full_match(tok)) {
                regex_name = &name;
                break;
            }
        }
        if (regex_name) {
            out += "<" + *regex_name + ">:\"" + escape_control(tok) + "\"";
        } else {
            out += escape_control(tok);
        }
    }
    return out;
}

// --- localization ------------------------------------------------------------

Localization localize(const harness::Trace& trace, const grammar::IOGrammar& g,
                      harness::ErrorClass err,
                      const std::vector<std::string>& missing_form,
                      const std::vector<ingest::SectionRecord>& corpus) {
    if (err == harness::ErrorClass::None) {
        throw LocalizationFailure("nothing to localize: the trace passed");
    }

    Localization loc;
    if (err == harness::ErrorClass::GMiss) {
        if (missing_form.empty()) {
            throw LocalizationFailure("coverage gap reported without a missing form");
        }
        std::string culprit;
        for (const std::string& cmd : missing_form) {
            if (!derivation::check_generatable(g, {cmd})) {
                culprit = cmd;
                break;
            }
        }
        loc.target_rule = client_choice_rule(g);
        Snippet sn = rule_snippet(g, loc.target_rule);
        loc.grammar_line = sn.line;
        loc.current_snippet = sn.text;
        loc.exchange_index = -1;
        loc.expected_snippet = culprit.empty() ? util::join(missing_form, " ") : culprit;
        loc.evidence = coverage_evidence(
            corpus, culprit.empty() ? util::join(missing_form, " ") : culprit);
        return loc;
    }

    const size_t idx = failing_index(trace);
    if (idx == trace.exchanges.size()) {
        throw LocalizationFailure("no failing exchange in the trace");
    }
    const harness::Exchange& ex = trace.exchanges[idx];
    if (ex.direction != harness::Direction::server_to_client || ex.symbol.empty() ||
        !g.defined(ex.symbol)) {
        throw LocalizationFailure("failing exchange has no expected nonterminal");
    }

    loc.target_rule = ex.symbol;
    if (ex.verdict == harness::Verdict::constraint_violation) {
        // The tripped clause may live on a wrapper production above the
        // reply; repair must target the clause's owner, not the reply rule.
        if (auto v = violated_clause(g, trace, idx)) loc.target_rule = v->owner;
    }
    Snippet sn = rule_snippet(g, loc.target_rule);
    loc.grammar_line = sn.line;
    loc.current_snippet = sn.text;
    loc.exchange_index = static_cast<int>(idx);
    loc.expected_snippet = abstract_tokens(g, tokenize_wire(g, ex.symbol, ex.bytes));
    return loc;
}

// --- fix reports -------------------------------------------------------------

std::string fix_report_to_json(const FixReport& r) {
    json j{{"error_class", harness::error_class_name(r.error_class)},
           {"target_rule", r.target_rule},
           {"location",
            {{"grammar_line", r.grammar_line}, {"exchange_index", r.exchange_index}}},
           {"current_snippet", r.current_snippet},
           {"expected_snippet", r.expected_snippet},
           {"reason", r.reason},
           {"patch", json::parse(synth::patch_to_json(r.patch))}};
    return j.dump(2);
}

FixReport fix_report_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw SchemaViolation("fix report: not a JSON object");
    }
    for (const char* key :
         {"error_class", "target_rule", "current_snippet", "expected_snippet", "reason"}) {
        if (!j.contains(key) || !j[key].is_string()) {
            throw SchemaViolation(std::string("fix report: missing string field \"") +
                                  key + "\"");
        }
    }
    if (!j.contains("location") || !j["location"].is_object() ||
        !j["location"].contains("grammar_line") ||
        !j["location"]["grammar_line"].is_number_integer() ||
        !j["location"].contains("exchange_index") ||
        !j["location"]["exchange_index"].is_number_integer()) {
        throw SchemaViolation("fix report: missing or malformed \"location\"");
    }
    if (!j.contains("patch") || !j["patch"].is_object()) {
        throw SchemaViolation("fix report: missing \"patch\" object");
    }

    FixReport r;
    r.error_class = harness::error_class_from(j["error_class"].get<std::string>());
    r.target_rule = j["target_rule"].get<std::string>();
    r.grammar_line = j["location"]["grammar_line"].get<int>();
    r.exchange_index = j["location"]["exchange_index"].get<int>();
    r.current_snippet = j["current_snippet"].get<std::string>();
    r.expected_snippet = j["expected_snippet"].get<std::string>();
    r.reason = j["reason"].get<std::string>();
    r.patch = synth::patch_from_json(j["patch"].dump());
    if (r.patch.entries.empty()) {
        throw SchemaViolation("fix report: patch has no entries");
    }
    return r;
}

// --- fix generation ----------------------------------------------------------

FixReport generate_fix(const extract::Context& ctx, harness::ErrorClass error_class,
                       const Localization& loc, const editscript::EditScript& script) {
    if (error_class == harness::ErrorClass::None) {
        throw Error("generate_fix: no failure class to fix");
    }

    json ops = json::array();
    for (const editscript::EditOp& op : script.ops) {
        ops.push_back({{"op", editscript::op_kind_name(op.kind)},
                       {"pos", op.pos},
                       {"value", op.value}});
    }
    json payload{{"error_class", harness::error_class_name(error_class)},
                 {"target_rule", loc.target_rule},
                 {"grammar_line", loc.grammar_line},
                 {"exchange_index", loc.exchange_index},
                 {"current_snippet", loc.current_snippet},
                 {"expected_snippet", loc.expected_snippet},
                 {"edit_script", ops},
                 {"required_patch_kind", patch_kind_guide(error_class)},
                 {"evidence", loc.evidence}};

    auto tpl = provider::load_prompt(ctx.prompts_dir / "repair.md");
    auto req = provider::make_request(tpl, payload.dump(2), ctx.model_id,
                                      extract::kExtractTemperature);

    return extract::call_with_retry<FixReport>(
        ctx.llm, req, [&](const std::string& text) {
            json j = json::parse(text, nullptr, false);
            if (j.is_discarded() || !j.is_object()) {
                throw SchemaViolation("repair reply: not a JSON object");
            }
            if (!j.contains("target_rule") || !j["target_rule"].is_string() ||
                !j.contains("reason") || !j["reason"].is_string() ||
                !j.contains("patch") || !j["patch"].is_object()) {
                throw SchemaViolation(
                    "repair reply: expected string \"target_rule\", string \"reason\" "
                    "and object \"patch\"");
            }
            if (j["target_rule"].get<std::string>() != loc.target_rule) {
                throw SchemaViolation("repair reply: target_rule \"" +
                                      j["target_rule"].get<std::string>() +
                                      "\" is not the localized rule \"" +
                                      loc.target_rule + "\"");
            }
            synth::Patch patch = synth::patch_from_json(j["patch"].dump());
            if (patch.entries.empty()) {
                throw SchemaViolation("repair reply: patch has no entries");
            }
            for (const synth::PatchEntry& e : patch.entries) {
                if (e.target_rule != loc.target_rule) {
                    throw SchemaViolation(
                        "repair reply: entry touches \"" + e.target_rule +
                        "\" outside the localized rule \"" + loc.target_rule + "\"");
                }
                if (!kind_allowed(error_class, e.kind)) {
                    throw SchemaViolation(
                        std::string("repair reply: patch kind \"") +
                        synth::patch_kind_name(e.kind) + "\" does not address a " +
                        harness::error_class_name(error_class) + " failure (expected " +
                        patch_kind_guide(error_class) + ")");
                }
            }

            FixReport r;
            r.error_class = error_class;
            r.target_rule = loc.target_rule;
            r.grammar_line = loc.grammar_line;
            r.exchange_index = loc.exchange_index;
            r.current_snippet = loc.current_snippet;
            r.expected_snippet = loc.expected_snippet;
            r.reason = j["reason"].get<std::string>();
            r.patch = std::move(patch);
            return r;
        });
}

// --- round records ------------------------------------------------------------

std::string rounds_csv(const std::vector<RoundLog>& rounds) {
    std::string out = "round,at_risk,fixed,gsyn,tmism,gmiss\n";
    for (const RoundLog& r : rounds) {
        out += std::to_string(r.round) + "," + std::to_string(r.at_risk) + "," +
               std::to_string(r.fixed) + "," + std::to_string(r.gsyn) + "," +
               std::to_string(r.tmism) + "," + std::to_string(r.gmiss) + "\n";
    }
    return out;
}

std::vector<RoundLog> aggregate_rounds(const std::vector<std::vector<RoundLog>>& runs) {
    size_t depth = 0;
    for (const auto& run : runs) depth = std::max(depth, run.size());
    std::vector<RoundLog> out(depth);
    for (size_t r = 0; r < depth; ++r) out[r].round = static_cast<int>(r) + 1;
    for (const auto& run : runs) {
        for (size_t r = 0; r < run.size(); ++r) {
            out[r].at_risk += run[r].at_risk;
            out[r].fixed += run[r].fixed;
            out[r].gsyn += run[r].gsyn;
            out[r].tmism += run[r].tmism;
            out[r].gmiss += run[r].gmiss;
        }
    }
    return out;
}

std::vector<RoundLog> RepairResult::rounds() const {
    std::vector<RoundLog> out;
    out.reserve(attempts.size());
    for (const Attempt& a : attempts) out.push_back(a.log);
    return out;
}

// --- the loop -----------------------------------------------------------------

namespace {

// One full evaluation of the grammar against the paths: which class fails
// first in cascade order, the trace showing it, and the command forms the
// grammar cannot produce at all.
struct Evaluation {
    harness::ErrorClass cls = harness::ErrorClass::None;
    std::optional<harness::Trace> failing;
    std::vector<std::string> missing_form;
};

Evaluation evaluate(const grammar::IOGrammar& g, const std::vector<graph::Mtp>& mtps,
                    const harness::SutConfig& sut, uint64_t base_seed) {
    Evaluation ev;
    std::vector<harness::Trace> traces;
    std::vector<std::vector<std::string>> missing;
    for (size_t i = 0; i < mtps.size(); ++i) {
        std::vector<std::string> cmds = mtps[i].commands();
        if (!derivation::check_generatable(g, cmds)) {
            missing.push_back(std::move(cmds));
            continue;
        }
        traces.push_back(harness::run_session(g, mtps[i], sut, base_seed + i));
    }

    auto has_verdict = [](const harness::Trace& t, harness::Verdict v) {
        for (const harness::Exchange& ex : t.exchanges) {
            if (ex.verdict == v) return true;
        }
        return false;
    };
    for (const harness::Trace& t : traces) {
        if (has_verdict(t, harness::Verdict::parse_failure)) {
            ev.cls = harness::ErrorClass::GSyn;
            ev.failing = t;
            return ev;
        }
    }
    for (const harness::Trace& t : traces) {
        if (has_verdict(t, harness::Verdict::constraint_violation)) {
            ev.cls = harness::ErrorClass::TMism;
            ev.failing = t;
            return ev;
        }
    }
    for (const harness::Trace& t : traces) {
        if (!t.terminal_state_reached) {
            ev.cls = harness::ErrorClass::TMism;
            ev.failing = t;
            return ev;
        }
    }
    if (!missing.empty()) {
        ev.cls = harness::ErrorClass::GMiss;
        ev.missing_form = std::move(missing.front());
    }
    return ev;
}

// Token diff between the reply the grammar planned at the failure point and
// what the wire actually carried.
editscript::EditScript failure_edit_script(const grammar::IOGrammar& g,
                                           const harness::Trace& trace) {
    const size_t idx = failing_index(trace);
    if (idx >= trace.exchanges.size()) return {};
    const harness::Exchange& ex = trace.exchanges[idx];
    if (ex.direction != harness::Direction::server_to_client) return {};

    std::string predicted;
    try {
        derivation::TreeNode session = planned_session(g, trace);
        auto msgs = derivation::messages(session);
        if (idx < msgs.size()) predicted = msgs[idx].bytes;
    } catch (const Error&) {
        // no plan to diff against; the observed tokens alone still inform
    }
    std::vector<std::string> source = tokenize_wire(g, ex.symbol, predicted);
    std::vector<std::string> target = tokenize_wire(g, ex.symbol, ex.bytes);
    return editscript::min_edit_script(source, target);
}

void set_outcome(RoundLog& log, harness::ErrorClass cls) {
    switch (cls) {
        case harness::ErrorClass::None: log.fixed = 1; break;
        case harness::ErrorClass::GSyn: log.gsyn = 1; break;
        case harness::ErrorClass::TMism: log.tmism = 1; break;
        case harness::ErrorClass::GMiss: log.gmiss = 1; break;
    }
}

}  // namespace

RepairResult repair_loop(const grammar::IOGrammar& g0, const std::vector<graph::Mtp>& mtps,
                         const harness::SutConfig& sut, const extract::Context& ctx,
                         const RepairOptions& opts) {
    RepairResult res;
    res.grammar = g0;

    std::vector<std::vector<std::string>> protected_mtps;
    protected_mtps.reserve(mtps.size());
    for (const graph::Mtp& m : mtps) protected_mtps.push_back(m.commands());

    Evaluation ev = evaluate(res.grammar, mtps, sut, opts.seed);
    if (ev.cls == harness::ErrorClass::None) {
        res.converged = true;
        return res;
    }

    for (int round = 1; round <= opts.budget; ++round) {
        Attempt at;
        at.log.round = round;
        at.log.at_risk = 1;

        try {
            const harness::Trace dummy;
            const harness::Trace& failing = ev.failing ? *ev.failing : dummy;
            Localization loc =
                localize(failing, res.grammar, ev.cls, ev.missing_form, opts.corpus);
            editscript::EditScript script;
            if (ev.cls != harness::ErrorClass::GMiss && ev.failing) {
                script = failure_edit_script(res.grammar, *ev.failing);
            }
            FixReport fix = generate_fix(ctx, ev.cls, loc, script);
            at.fix = std::move(fix);
            res.grammar = synth::apply_patch(res.grammar, at.fix->patch, protected_mtps);
            at.applied = true;
        } catch (const LocalizationFailure& e) {
            at.note = std::string("localization failed: ") + e.what();
        } catch (const PatchRejected& e) {
            at.note = std::string("patch rejected: ") + e.what();
        } catch (const SchemaViolation& e) {
            at.note = std::string("no usable fix: ") + e.what();
        } catch (const DerivationExhausted& e) {
            at.note = std::string("could not re-derive the failing session: ") + e.what();
        }

        // An untouched grammar re-tests identically; skip the re-run and
        // carry the class forward.
        if (at.applied) ev = evaluate(res.grammar, mtps, sut, opts.seed);
        set_outcome(at.log, ev.cls);
        res.attempts.push_back(std::move(at));
        if (ev.cls == harness::ErrorClass::None) {
            res.converged = true;
            break;
        }
    }
    return res;
}

void write_repair_artifacts(const std::filesystem::path& run_dir, const RepairResult& r) {
    std::filesystem::create_directories(run_dir);
    for (const Attempt& a : r.attempts) {
        if (!a.fix) continue;
        util::write_file_atomic(
            run_dir / ("fix_round_" + std::to_string(a.log.round) + ".json"),
            fix_report_to_json(*a.fix));
    }
    util::write_file_atomic(run_dir / "rounds.csv", rounds_csv(r.rounds()));
}

}  // namespace specforge::repair
