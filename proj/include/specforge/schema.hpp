#pragma once

#include <optional>
#include <string>
#include <vector>

#include "specforge/ingest.hpp"

// Schemas for the structured payloads exchanged with the language model:
// section classification records, extraction fragments, and micrograph
// proposals. Parsers are strict — any missing field, wrong type, unknown
// enum value, or broken cross-reference throws SchemaViolation — because
// model output is untrusted until validated.
namespace specforge::schema {

// Verdict for one RFC section: what it is and what to do with it.
struct ClassificationRecord {
    std::string section_id;
    std::string label;    // state_machine | overview | example | other
    std::string action;   // extract | copy | summarize
    std::string summary;  // at most 30 whitespace-separated tokens
    ingest::Provenance evidence;

    bool normative() const { return label == "state_machine"; }
    bool operator==(const ClassificationRecord&) const = default;
};

// --- extraction fragment ----------------------------------------------------

struct FragmentState {
    std::string name;
    std::optional<std::string> description;
    ingest::Provenance provenance;
    bool operator==(const FragmentState&) const = default;
};

struct FragmentCommand {
    std::string name;
    std::optional<std::vector<std::string>> valid_in_states;
    std::optional<std::string> description;
    ingest::Provenance provenance;
    bool operator==(const FragmentCommand&) const = default;
};

struct FragmentTransition {
    std::string from_state;
    std::string command;
    std::string to_state;
    ingest::Provenance provenance;
    bool operator==(const FragmentTransition&) const = default;
};

struct FragmentConstraint {
    std::string text;
    std::optional<std::string> kind;  // independent | dependent
    ingest::Provenance provenance;
    bool operator==(const FragmentConstraint&) const = default;
};

struct FragmentSyntaxRule {
    std::string nonterminal;
    std::string definition_text;
    ingest::Provenance provenance;
    bool operator==(const FragmentSyntaxRule&) const = default;
};

// Everything one section contributes, lifted to structured form. All five
// lists are always present; unknown values inside elements are explicit
// nulls, never missing keys.
struct ExtractionFragment {
    std::string rfc_id;
    std::string section_id;
    std::vector<FragmentState> states;
    std::vector<FragmentCommand> commands;
    std::vector<FragmentTransition> transitions;
    std::vector<FragmentConstraint> constraints;
    std::vector<FragmentSyntaxRule> syntax_rules;
    bool operator==(const ExtractionFragment&) const = default;
};

// --- micrograph proposal ----------------------------------------------------

// Section-local graph proposed from a fragment, before the deterministic
// acceptance filter. `anchors` are paragraph indices within the section;
// null/absent anchors are representable so the filter can reject them.
struct ProposalNode {
    std::string id;
    std::string label;
    std::string type;  // state | command | response
    std::optional<std::vector<int>> anchors;
    bool operator==(const ProposalNode&) const = default;
};

struct ProposalEdge {
    std::string source;
    std::string target;
    std::string type;  // invokes | yields | requires | enables | dependency
    std::optional<std::vector<int>> anchors;
    bool operator==(const ProposalEdge&) const = default;
};

struct MicrographProposal {
    std::vector<ProposalNode> nodes;
    std::vector<ProposalEdge> edges;
    bool operator==(const MicrographProposal&) const = default;
};

// --- parsing / serialization ------------------------------------------------

// Each parser takes the raw model text (which must be a single JSON object,
// optionally wrapped in Markdown code fences) plus the source coordinates
// used to stamp provenance. Throws SchemaViolation with a reason.
ClassificationRecord parse_classification(const std::string& text,
                                          const std::string& rfc_id);
ExtractionFragment parse_fragment(const std::string& text, const std::string& rfc_id,
                                  const std::string& section_id);
MicrographProposal parse_proposal(const std::string& text);

std::string to_json(const ClassificationRecord& r);
std::string to_json(const ExtractionFragment& f);
std::string to_json(const MicrographProposal& p);

// Whitespace-token count used for the summary cap.
int token_count(const std::string& s);

}  // namespace specforge::schema
