#pragma once

#include <string>
#include <vector>

// Minimal token-level edit scripts (unit-cost substitute/delete/insert)
// between terminal sequences, used to phrase grammar repairs as small,
// reproducible diffs.
namespace specforge::editscript {

enum class OpKind { substitute, erase, insert };

std::string op_kind_name(OpKind k);  // "substitute" | "delete" | "insert"

// One edit against the ORIGINAL source sequence. `pos` is a source index;
// substitute replaces source[pos], erase removes source[pos], insert places
// `value` immediately before source[pos] (pos == source length appends).
struct EditOp {
    OpKind kind = OpKind::substitute;
    int pos = 0;
    std::string value;  // replacement or inserted token; empty for erase
    bool operator==(const EditOp&) const = default;
};

struct EditScript {
    std::vector<EditOp> ops;
    int cost() const { return static_cast<int>(ops.size()); }
    bool operator==(const EditScript&) const = default;
};

// Minimal-cost script converting source to target. Among equal-cost
// scripts, ops are chosen left to right preferring substitute, then delete,
// then insert, so the result is deterministic.
EditScript min_edit_script(const std::vector<std::string>& source,
                           const std::vector<std::string>& target);

// Replays a script produced by min_edit_script (ops in nondecreasing source
// position) against its source.
std::vector<std::string> apply(const EditScript& script,
                               const std::vector<std::string>& source);

}  // namespace specforge::editscript
