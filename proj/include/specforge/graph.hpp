#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "specforge/ingest.hpp"
#include "specforge/schema.hpp"

// Protocol model: section-local micrographs filtered by a deterministic
// acceptance pass, merged into the protocol-level multigraph
// G = <states, commands, edges, constraint store>, from which minimal
// transition paths (MTPs) are computed.
namespace specforge::graph {

enum class NodeType { state, command, response };
enum class EdgeType { invokes, yields, requires_before, enables, dependency };

std::string node_type_name(NodeType t);
std::string edge_type_name(EdgeType t);
std::optional<NodeType> node_type_of(const std::string& name);
std::optional<EdgeType> edge_type_of(const std::string& name);

// Where an element came from, plus whether that section is normative
// (classified as state-machine text) — the input to precedence decisions.
struct Anchor {
    ingest::Provenance where;
    bool normative = false;
    bool operator==(const Anchor&) const = default;
    auto operator<=>(const Anchor&) const = default;
};

// --- section-local micrograph ----------------------------------------------

struct MicroNode {
    std::string id;
    std::string label;
    NodeType type = NodeType::state;
    std::vector<Anchor> anchors;
    bool operator==(const MicroNode&) const = default;
};

struct MicroEdge {
    std::string source;  // node ids within the same micrograph
    std::string target;
    EdgeType type = EdgeType::invokes;
    std::vector<Anchor> anchors;
    bool operator==(const MicroEdge&) const = default;
};

// Constraint candidate carried along from the section's fragment; attachment
// to a node happens during merge, once labels are canonical.
struct MicroConstraint {
    std::string text;
    std::string kind;  // "independent", "dependent", or "" when unstated
    std::vector<Anchor> anchors;
    bool operator==(const MicroConstraint&) const = default;
};

struct Micrograph {
    std::string rfc_id;
    std::string section_id;
    bool normative = false;
    std::vector<MicroNode> nodes;
    std::vector<MicroEdge> edges;
    std::vector<MicroConstraint> constraints;
    bool operator==(const Micrograph&) const = default;
    const MicroNode* find(const std::string& id) const;
};

// Plain structural conversion of a model-proposed graph: stamps provenance
// (section coordinates + proposal anchors) but filters nothing. Elements
// whose anchors were null arrive with an empty anchor list.
Micrograph to_micrograph(const schema::MicrographProposal& proposal,
                         const std::string& rfc_id, const std::string& section_id,
                         bool normative);

// Deterministic acceptance filter: keeps nodes that carry anchors and whose
// labels appear in the fragment's symbol tables (responses are exempt from
// the table check), then keeps edges whose endpoints survived, whose typing
// is legal (invokes: state->command; yields: command->state/response;
// requires/enables/dependency: command->command), and which either agree
// with the fragment's transition table or win the normative-over-example
// precedence comparison. Idempotent; total (never throws).
Micrograph accept_micrograph(const schema::ExtractionFragment& fragment,
                             const Micrograph& proposal);
Micrograph accept_micrograph(const schema::ExtractionFragment& fragment,
                             const schema::MicrographProposal& proposal,
                             bool normative = false);

// --- label normalization ----------------------------------------------------

// Canonical state names for common aliases; commands and responses are
// upper-cased. The table ships as an editable JSON file; the built-in copy
// covers the bundled protocol family.
struct AliasTable {
    // lower-cased alias -> canonical (already-normal) state label
    std::map<std::string, std::string> states;
    static const AliasTable& builtin();
    static AliasTable load(const std::filesystem::path& file);
};

std::string normalize_label(const std::string& raw, NodeType kind,
                            const AliasTable& aliases = AliasTable::builtin());

// --- protocol-level multigraph ---------------------------------------------

struct GNode {
    std::string id;  // "state:AUTHORIZATION", "cmd:USER", "resp:+OK"
    std::string label;
    NodeType type = NodeType::state;
    std::vector<Anchor> anchors;
    bool operator==(const GNode&) const = default;
};

struct GEdge {
    std::string id;  // "<type>:<source-id>><target-id>", e.g. "yields:cmd:QUIT>state:UPDATE"
    std::string source;
    std::string target;
    EdgeType type = EdgeType::invokes;
    std::vector<Anchor> anchors;
    bool operator==(const GEdge&) const = default;
};

// Entry of the global constraint store.
struct PhiEntry {
    std::string id;  // "phi:<n>" in sorted order
    std::string text;
    std::string kind;         // "independent", "dependent", or ""
    std::string attached_to;  // node or edge id; "" when protocol-global
    std::vector<Anchor> anchors;
    bool conflict = false;
    bool operator==(const PhiEntry&) const = default;
};

struct Multigraph {
    std::vector<GNode> nodes;  // sorted by (type, label)
    std::vector<GEdge> edges;  // sorted by (type, source, target)
    std::vector<PhiEntry> phi;
    bool operator==(const Multigraph&) const = default;

    const GNode* find_node(const std::string& id) const;
    std::vector<std::string> states() const;
    std::vector<std::string> commands() const;
    std::vector<std::string> responses() const;
};

// Union with canonical labels; `dependency` edges rewritten to requires;
// yields-to-state conflicts resolved normative-over-example; single-field
// integer constraints on the same attachment point intersected, with
// contradictions kept and flagged. Output independent of input order.
Multigraph merge(const std::vector<Micrograph>& micrographs,
                 const AliasTable& aliases = AliasTable::builtin());

// Concrete transition view: every (state, command, next_state) such that
// state -invokes-> command and command -yields-> next_state.
struct Transition {
    std::string state;
    std::string command;
    std::string next_state;
    bool operator==(const Transition&) const = default;
    auto operator<=>(const Transition&) const = default;
};
std::vector<Transition> transitions(const Multigraph& g);

// Ordering obligations from requires/enables edges: first must be issued
// before second can be.
std::vector<std::pair<std::string, std::string>> dependencies(const Multigraph& g);

// --- minimal transition paths ----------------------------------------------

struct Mtp {
    std::string target;  // command label, or "from/COMMAND/to" for an edge
    std::string initial_state;
    std::string postcondition;  // issued command, or reached state for edges
    std::vector<std::array<std::string, 3>> triples;  // (state, command, next)
    std::vector<std::string> preconditions;  // Φ ids attached along the path
    bool operator==(const Mtp&) const = default;

    std::vector<std::string> commands() const;
};

struct MtpReport {
    std::vector<Mtp> mtps;                // in target order
    std::vector<std::string> unreachable; // targets with no valid path
    bool operator==(const MtpReport&) const = default;
};

// Shortest dependency-respecting path per target, searched over
// (state, issued-command-set) product states; ties broken lexicographically
// by command-label sequence, then state sequence. A target is either a
// command label or a specific transition written "from/COMMAND/to".
MtpReport compute_mtps(const Multigraph& g, const std::vector<std::string>& initial,
                       const std::vector<std::string>& targets);

// --- artifacts ---------------------------------------------------------------

struct ArtifactPaths {
    std::filesystem::path graph_json;
    std::filesystem::path mtps_json;
};

// Writes output/flows/<rfc_id>/{graph.json, mtps.json} under root.
ArtifactPaths export_artifacts(const Multigraph& g, const MtpReport& report,
                               const std::filesystem::path& root,
                               const std::string& rfc_id);
Multigraph load_graph(const std::filesystem::path& file);
MtpReport load_mtps(const std::filesystem::path& file);

}  // namespace specforge::graph
