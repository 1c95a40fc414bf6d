#pragma once

#include <map>
#include <string>
#include <vector>

#include "specforge/graph.hpp"
#include "specforge/ingest.hpp"

// Ranks RFC sections against path-derived queries so synthesis and repair
// read only the most relevant context. Scoring is Okapi BM25 (k1 = 1.2,
// b = 0.75) over lowercased alphanumeric tokens; the index is immutable
// after construction and safe for concurrent queries.
namespace specforge::retrieve {

struct Posting {
    int doc = 0;  // ordinal into SectionIndex::docs
    int tf = 0;   // occurrences of the term in that section
    bool operator==(const Posting&) const = default;
};

struct DocRef {
    std::string rfc_id;
    std::string section_id;
    bool operator==(const DocRef&) const = default;
};

struct SectionIndex {
    std::vector<DocRef> docs;
    std::map<std::string, std::vector<Posting>> postings;  // term -> docs containing it
    std::vector<int> doc_lengths;  // token count per doc, parallel to docs
    double avg_doc_length = 0.0;
    int N = 0;  // indexed section count
};

// Lowercased tokens: maximal runs of ASCII alphanumerics; everything else
// separates. Numeric tokens are kept.
std::vector<std::string> tokenize(const std::string& text);

// Indexes title + paragraph text of every record. Throws EmptyCorpus when
// `records` is empty.
SectionIndex build_index(const std::vector<ingest::SectionRecord>& records);

struct Scored {
    DocRef ref;
    double score = 0.0;
    bool operator==(const Scored&) const = default;
};

// Top-k sections for an explicit term list, descending score, ties broken
// by section_id then rfc_id. Sections containing no query term are omitted,
// so fewer than k results (or none) is normal.
std::vector<Scored> query_terms(const SectionIndex& index,
                                const std::vector<std::string>& terms, int k);

// Query derived from a minimal transition path: the command and state
// labels along it, deduplicated.
std::vector<Scored> query(const SectionIndex& index, const graph::Mtp& mtp, int k);

}  // namespace specforge::retrieve
