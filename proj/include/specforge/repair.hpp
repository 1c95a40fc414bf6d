#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "specforge/editscript.hpp"
#include "specforge/extract.hpp"
#include "specforge/graph.hpp"
#include "specforge/grammar.hpp"
#include "specforge/harness.hpp"
#include "specforge/ingest.hpp"
#include "specforge/synth.hpp"

// Closes the loop after a failed conformance run: pin the failure to one
// grammar rule, phrase the gap as a token-level diff, ask the model for a
// minimal patch of the matching kind, and re-test — at most `budget` rounds,
// never accepting a patch that breaks a previously generatable path.
namespace specforge::repair {

// Where a failure lives in the grammar and what the wire said instead.
struct Localization {
    std::string target_rule;       // nonterminal name, no angle brackets
    int grammar_line = 0;          // 1-based line of the rule's definition
    int exchange_index = -1;       // failing exchange ordinal; -1 for coverage gaps
    std::string current_snippet;   // the rule as written, lexeme defs inlined
    std::string expected_snippet;  // observed bytes abstracted to lexemes, or
                                   // the command sequence a coverage gap needs
    std::string evidence;          // retrieved RFC text backing a coverage gap
    bool operator==(const Localization&) const = default;
};

// Pins the failure: for syntax and transition mismatches the target is the
// expected server nonterminal at the first non-accepted exchange; for
// coverage gaps it is the choice production owning the client command
// alternatives, `missing_form` names the command sequence the grammar cannot
// produce, and `corpus` (when given) supplies retrieval evidence. Throws
// LocalizationFailure when the failing exchange carries no expected
// nonterminal, or when a coverage gap comes without a missing form.
Localization localize(const harness::Trace& trace, const grammar::IOGrammar& g,
                      harness::ErrorClass err,
                      const std::vector<std::string>& missing_form = {},
                      const std::vector<ingest::SectionRecord>& corpus = {});

// Wire bytes reduced to terminal-level tokens: when the bytes parse as
// `server_nt`, the parse tree's leaf texts; otherwise raw tokens split on
// whitespace with each CRLF kept as its own token. Pure-space tokens are
// dropped either way.
std::vector<std::string> tokenize_wire(const grammar::IOGrammar& g,
                                       const std::string& server_nt,
                                       const std::string& bytes);

// Observed bytes rendered against the grammar's lexeme vocabulary: tokens
// equal to a literal lexeme become <name>, tokens fully matched by a regex
// lexeme become <name>:"value" (the concrete value is kept — it is the
// evidence), anything else stays as-is. Lexemes that match the empty string
// never abstract (they would swallow everything).
std::string abstract_tokens(const grammar::IOGrammar& g,
                            const std::vector<std::string>& tokens);

// One proposed repair, self-contained enough to be replayed or audited.
struct FixReport {
    harness::ErrorClass error_class = harness::ErrorClass::None;
    std::string target_rule;
    int grammar_line = 0;
    int exchange_index = -1;
    std::string current_snippet;
    std::string expected_snippet;
    std::string reason;  // model's explanation of the fix
    synth::Patch patch;  // never empty
    bool operator==(const FixReport&) const = default;
};

std::string fix_report_to_json(const FixReport& r);
FixReport fix_report_from_json(const std::string& text);

// Asks the model for a patch addressing the localized failure. The reply
// must target exactly the localized rule and use the kind implied by the
// class — rewrite_production for syntax, add_constraint/modify_constraint
// for transition mismatches, add_alternative for coverage gaps; anything
// else (including an empty patch or a second rule dragged in) is a schema
// violation, re-issued once and then thrown.
FixReport generate_fix(const extract::Context& ctx, harness::ErrorClass error_class,
                       const Localization& loc, const editscript::EditScript& script);

// One row of the convergence record. `round` is 1-based; `at_risk` counts
// grammars still failing when the round began; of those, exactly one of
// fixed / gsyn / tmism / gmiss accounts for each grammar's state after the
// round's patch, so the four columns sum to at_risk.
struct RoundLog {
    int round = 0;
    int at_risk = 0;
    int fixed = 0;
    int gsyn = 0;
    int tmism = 0;
    int gmiss = 0;
    bool operator==(const RoundLog&) const = default;
};

// CSV with header round,at_risk,fixed,gsyn,tmism,gmiss.
std::string rounds_csv(const std::vector<RoundLog>& rounds);

// Column-wise sum of several runs' logs, aligned by round number — the
// multi-grammar view of per-grammar histories.
std::vector<RoundLog> aggregate_rounds(const std::vector<std::vector<RoundLog>>& runs);

// One spent round: the convergence row, the fix proposed that round (absent
// when localization or generation failed), and whether it survived the
// patch gate.
struct Attempt {
    RoundLog log;
    std::optional<FixReport> fix;
    bool applied = false;
    std::string note;  // why no patch landed, when one didn't
};

struct RepairOptions {
    int budget = 7;     // maximum repair rounds
    uint64_t seed = 1;  // base seed; session i runs with seed + i
    std::vector<ingest::SectionRecord> corpus;  // evidence for coverage gaps
};

struct RepairResult {
    grammar::IOGrammar grammar;  // best grammar seen (never worse than input)
    bool converged = false;      // all paths generatable, all traces accepted
    std::vector<Attempt> attempts;

    std::vector<RoundLog> rounds() const;
};

// Runs sessions for every path, classifies the first failure in cascade
// order (syntax, then mismatch, then coverage), repairs it, and re-tests —
// one failure per round, stopping early once clean. A rejected or
// ungeneratable patch leaves the grammar untouched and the round logged
// with its prior class. Every input path that was generatable stays
// generatable in the result.
RepairResult repair_loop(const grammar::IOGrammar& g0, const std::vector<graph::Mtp>& mtps,
                         const harness::SutConfig& sut, const extract::Context& ctx,
                         const RepairOptions& opts = {});

// fix_round_<n>.json per proposed fix plus rounds.csv, under run_dir.
void write_repair_artifacts(const std::filesystem::path& run_dir, const RepairResult& r);

}  // namespace specforge::repair
