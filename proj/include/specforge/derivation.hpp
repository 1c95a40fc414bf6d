#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "specforge/grammar.hpp"
#include "specforge/util.hpp"

namespace specforge::derivation {

// Concrete derivation tree. Inner nodes are production instances; leaves
// carry wire bytes. `party` is the party in effect (inherited through
// untagged references); `explicit_party` marks the node whose reference
// carried the Client:/Server: tag — those nodes delimit messages.
struct TreeNode {
    std::string symbol;  // production or lexeme name; "" for an inline literal/regex
    grammar::Party party = grammar::Party::none;
    bool explicit_party = false;
    bool terminal = false;
    std::string bytes;   // leaves only
    int alt_index = -1;  // which alternative was expanded (inner nodes)
    std::vector<TreeNode> children;
};

// Concatenated leaf bytes of the subtree, in order.
std::string leaf_bytes(const TreeNode& n);

struct DerivationLimits {
    int max_depth = 48;
    int max_attempts = 200;  // resamples before giving up on a constraint
};

// Seeded random derivation from <start>; constraint clauses are enforced
// (closed integer ranges are sampled directly, everything else filtered by
// resampling). Throws DerivationExhausted when limits run out.
TreeNode derive(const grammar::IOGrammar& g, uint64_t seed,
                const DerivationLimits& lim = {});

// Like derive, but the session is steered so its client messages contain the
// given command keywords as a subsequence, in order — one keyword per
// message. Throws DerivationExhausted when the grammar cannot realize the
// sequence within limits.
TreeNode derive_for_commands(const grammar::IOGrammar& g,
                             const std::vector<std::string>& commands, uint64_t seed,
                             const DerivationLimits& lim = {});

// True iff some finite derivation of <start> realizes the command keywords in
// order (per the message-subsequence semantics above). Decided exactly, via a
// fixpoint over per-nonterminal progress relations — no enumeration.
bool check_generatable(const grammar::IOGrammar& g,
                       const std::vector<std::string>& commands);

// Parses exact bytes as one <nt>; ordered-choice backtracking descent.
// On failure throws ParseFailure carrying the furthest offset reached and
// the terminals expected there.
TreeNode parse_message(const grammar::IOGrammar& g, const std::string& nt,
                       const std::string& bytes,
                       grammar::Party party = grammar::Party::none);

// --- constraint evaluation over trees -------------------------------------

struct EvalOutcome {
    bool satisfied = false;
    // A field reference had no instance inside the owner's subtree and was
    // resolved against the whole session tree instead.
    bool used_fallback = false;
};

// Field references resolve to the first in-order instance inside `scope`,
// falling back to `root`. Throws UnresolvableFieldRef if a field resolves
// nowhere at all.
EvalOutcome eval_constraint(const TreeNode& scope, const TreeNode& root,
                            const constraint::Expr& e);
bool eval_constraint(const TreeNode& root, const constraint::Expr& e);

struct Violation {
    std::string owner;
    std::string text;  // canonical constraint text
    bool used_fallback = false;
};

// Walks every production instance in the tree and evaluates the constraints
// its production owns; returns the first unsatisfied one in document order.
std::optional<Violation> first_violation(const grammar::IOGrammar& g,
                                         const TreeNode& root);

// --- messages --------------------------------------------------------------

struct Message {
    grammar::Party party = grammar::Party::none;
    std::string bytes;
    std::string symbol;     // the explicitly tagged nonterminal covering it
    std::vector<int> path;  // child-index path from the root to that node
};

// One message per explicitly party-tagged subtree, in session order. Throws
// if a non-empty leaf sits outside every tagged subtree (a session grammar
// must attribute all bytes to a party).
std::vector<Message> messages(const TreeNode& root);

TreeNode* node_at(TreeNode& root, const std::vector<int>& path);
const TreeNode* node_at(const TreeNode& root, const std::vector<int>& path);

// Replaces the subtree at `path` (keeps the slot's party tag), e.g. to graft
// the parse of an observed server reply into the predicted session tree.
void splice(TreeNode& root, const std::vector<int>& path, TreeNode replacement);

}  // namespace specforge::derivation
