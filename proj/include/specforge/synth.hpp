#pragma once

#include <string>
#include <vector>

#include "specforge/extract.hpp"
#include "specforge/graph.hpp"
#include "specforge/grammar.hpp"
#include "specforge/ingest.hpp"

// The generator side of the pipeline: fold minimal transition paths into an
// FSM skeleton, ask the model to dress it as an I/O grammar grounded in the
// retrieved RFC text, normalize the result, and integrate repair patches
// behind a regression gate.
namespace specforge::synth {

// One client→server exchange in the session outline, with the nonterminal
// names the grammar is expected to use for each side of it.
struct Exchange {
    std::string state;
    std::string command;
    std::string next_state;
    std::string client_nt;
    std::string server_nt;
    bool operator==(const Exchange&) const = default;
};

struct FsmSkeleton {
    // First-use order over the MTP list; shared prefixes appear once.
    std::vector<Exchange> exchanges;
    bool operator==(const FsmSkeleton&) const = default;
};

// Folds the paths into a deterministic session outline. Throws EmptyInput on
// an empty list and InconsistentMtps when two paths drive the same command
// from the same state into different successor states.
FsmSkeleton build_skeleton(const std::vector<graph::Mtp>& mtps);

// JSON payload sent to the model: the skeleton plus the retrieved sections.
std::string synthesis_payload(const FsmSkeleton& skeleton,
                              const std::vector<ingest::SectionRecord>& retrieved);

// Asks the model for a complete grammar and returns it parsed, normalized
// and validated. An invalid reply is re-issued once; if the retry still does
// not parse, the GrammarSyntaxError carries the provider output, and any
// other defect surfaces as SchemaViolation. Throws EmptyInput when no
// sections were retrieved.
grammar::IOGrammar synthesize(const extract::Context& ctx, const FsmSkeleton& skeleton,
                              const std::vector<ingest::SectionRecord>& retrieved);

// Canonical form: productions grouped by name in first-definition order with
// <start> first, duplicate alternatives and duplicate constraints dropped,
// and every referenced-but-undefined name resolved — well-known lexemes
// (crlf, sp, number, ...) get their standard definition appended to the
// terminals block, anything else raises UndefinedNonterminal. Idempotent.
grammar::IOGrammar normalize_grammar(const grammar::IOGrammar& g);

// The well-known lexeme table used by normalize_grammar; exposed so prompts
// and tests agree on what "inferable" means.
const std::vector<std::pair<std::string, grammar::TerminalDef>>& builtin_lexemes();

enum class PatchKind { rewrite_production, add_alternative, add_constraint, modify_constraint };

const char* patch_kind_name(PatchKind k);
PatchKind patch_kind_from(const std::string& name);  // throws SchemaViolation

struct PatchEntry {
    std::string target_rule;  // nonterminal name, no angle brackets
    PatchKind kind = PatchKind::rewrite_production;
    // Grammar-format text: a full production for rewrite_production, an
    // alternative (symbols, '|' allowed) for add_alternative, a constraint
    // expression for the two constraint kinds.
    std::string new_text;
    std::vector<ingest::Provenance> provenance;
    std::string rationale;
    bool operator==(const PatchEntry&) const = default;
};

struct Patch {
    std::vector<PatchEntry> entries;
    bool operator==(const Patch&) const = default;
};

std::string patch_to_json(const Patch& p);
Patch patch_from_json(const std::string& text);

// True iff the grammar can realize the path's command keywords in order.
bool check_mtp_generatable(const grammar::IOGrammar& g, const graph::Mtp& mtp);

// Applies the patch and re-normalizes. Rejects instead of degrading: unknown
// targets, text that does not parse, a result failing validation, and any
// command sequence in `protected_mtps` that was generatable before but not
// after all raise PatchRejected with the matching reason. Untouched
// productions serialize byte-identically when `g` is already normalized.
grammar::IOGrammar apply_patch(const grammar::IOGrammar& g, const Patch& p,
                               const std::vector<std::vector<std::string>>& protected_mtps);

}  // namespace specforge::synth
