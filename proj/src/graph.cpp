#include "specforge/graph.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <deque>
#include <map>
#include <set>

#include "json.hpp"
#include "specforge/constraint.hpp"
#include "specforge/errors.hpp"
#include "specforge/util.hpp"

namespace specforge::graph {

using nlohmann::json;

std::string node_type_name(NodeType t) {
    switch (t) {
        case NodeType::state: return "state";
        case NodeType::command: return "command";
        case NodeType::response: return "response";
    }
    return "?";
}

std::string edge_type_name(EdgeType t) {
    switch (t) {
        case EdgeType::invokes: return "invokes";
        case EdgeType::yields: return "yields";
        case EdgeType::requires_before: return "requires";
        case EdgeType::enables: return "enables";
        case EdgeType::dependency: return "dependency";
    }
    return "?";
}

std::optional<NodeType> node_type_of(const std::string& name) {
    if (name == "state") return NodeType::state;
    if (name == "command") return NodeType::command;
    if (name == "response") return NodeType::response;
    return std::nullopt;
}

std::optional<EdgeType> edge_type_of(const std::string& name) {
    if (name == "invokes") return EdgeType::invokes;
    if (name == "yields") return EdgeType::yields;
    if (name == "requires") return EdgeType::requires_before;
    if (name == "enables") return EdgeType::enables;
    if (name == "dependency") return EdgeType::dependency;
    return std::nullopt;
}

const MicroNode* Micrograph::find(const std::string& id) const {
    for (const MicroNode& n : nodes) {
        if (n.id == id) return &n;
    }
    return nullptr;
}

// --- proposal conversion and acceptance -------------------------------------

namespace {

std::vector<Anchor> anchors_of(const std::optional<std::vector<int>>& paragraphs,
                               const std::string& rfc_id, const std::string& section_id,
                               bool normative) {
    if (!paragraphs || paragraphs->empty()) return {};
    Anchor a;
    a.where.rfc_id = rfc_id;
    a.where.section_id = section_id;
    a.where.paragraph_indices = *paragraphs;
    a.normative = normative;
    return {a};
}

bool same_label(const std::string& a, const std::string& b) {
    return util::iequals(a, b);
}

bool any_normative(const std::vector<Anchor>& anchors) {
    for (const Anchor& a : anchors) {
        if (a.normative) return true;
    }
    return false;
}

}  // namespace

Micrograph to_micrograph(const schema::MicrographProposal& proposal,
                         const std::string& rfc_id, const std::string& section_id,
                         bool normative) {
    Micrograph m;
    m.rfc_id = rfc_id;
    m.section_id = section_id;
    m.normative = normative;
    for (const auto& n : proposal.nodes) {
        MicroNode node;
        node.id = n.id;
        node.label = n.label;
        node.type = node_type_of(n.type).value_or(NodeType::state);
        node.anchors = anchors_of(n.anchors, rfc_id, section_id, normative);
        m.nodes.push_back(std::move(node));
    }
    for (const auto& e : proposal.edges) {
        MicroEdge edge;
        edge.source = e.source;
        edge.target = e.target;
        edge.type = edge_type_of(e.type).value_or(EdgeType::dependency);
        edge.anchors = anchors_of(e.anchors, rfc_id, section_id, normative);
        m.edges.push_back(std::move(edge));
    }
    return m;
}

Micrograph accept_micrograph(const schema::ExtractionFragment& fragment,
                             const Micrograph& proposal) {
    Micrograph out;
    out.rfc_id = proposal.rfc_id;
    out.section_id = proposal.section_id;
    out.normative = proposal.normative;

    auto in_table = [&](const std::string& label, NodeType type) {
        if (type == NodeType::state) {
            for (const auto& s : fragment.states) {
                if (same_label(s.name, label)) return true;
            }
            return false;
        }
        if (type == NodeType::command) {
            for (const auto& c : fragment.commands) {
                if (same_label(c.name, label)) return true;
            }
            return false;
        }
        return true;  // responses carry no fragment symbol table
    };

    // Node acceptance: anchors plus symbol-table membership.
    std::map<std::string, const MicroNode*> kept;
    for (const MicroNode& n : proposal.nodes) {
        if (n.anchors.empty()) continue;
        if (!in_table(n.label, n.type)) continue;
        out.nodes.push_back(n);
        kept[n.id] = &n;
    }

    auto type_ok = [&](const MicroEdge& e) {
        const MicroNode* s = kept.count(e.source) ? kept.at(e.source) : nullptr;
        const MicroNode* t = kept.count(e.target) ? kept.at(e.target) : nullptr;
        if (!s || !t) return false;
        switch (e.type) {
            case EdgeType::invokes:
                return s->type == NodeType::state && t->type == NodeType::command;
            case EdgeType::yields:
                return s->type == NodeType::command &&
                       (t->type == NodeType::state || t->type == NodeType::response);
            case EdgeType::requires_before:
            case EdgeType::enables:
            case EdgeType::dependency:
                return s->type == NodeType::command && t->type == NodeType::command;
        }
        return false;
    };

    // A yields edge onto a state conflicts with the fragment's transition
    // table when the table sends that command elsewhere and never here.
    auto conflicting = [&](const MicroEdge& e, const MicroNode& src,
                           const MicroNode& tgt) -> const schema::FragmentTransition* {
        if (e.type != EdgeType::yields || tgt.type != NodeType::state) return nullptr;
        const schema::FragmentTransition* other = nullptr;
        for (const auto& tr : fragment.transitions) {
            if (!same_label(tr.command, src.label)) continue;
            if (same_label(tr.to_state, tgt.label)) return nullptr;  // agrees
            other = &tr;
        }
        return other;
    };

    for (const MicroEdge& e : proposal.edges) {
        if (e.anchors.empty()) continue;
        if (!type_ok(e)) continue;
        const MicroNode& src = *kept.at(e.source);
        const MicroNode& tgt = *kept.at(e.target);
        if (const auto* tr = conflicting(e, src, tgt)) {
            (void)tr;
            // The fragment and the proposal come from the same section, so
            // their precedence classes are equal; a strictly-normative edge
            // could override a non-normative table but never its own.
            bool edge_normative = any_normative(e.anchors);
            bool table_normative = proposal.normative;
            if (!(edge_normative && !table_normative)) continue;
        }
        out.edges.push_back(e);
    }

    // Constraint candidates ride along from the fragment itself.
    for (const auto& c : fragment.constraints) {
        MicroConstraint mc;
        mc.text = c.text;
        mc.kind = c.kind.value_or("");
        Anchor a;
        a.where = c.provenance;
        a.normative = proposal.normative;
        mc.anchors = {a};
        out.constraints.push_back(std::move(mc));
    }
    return out;
}

Micrograph accept_micrograph(const schema::ExtractionFragment& fragment,
                             const schema::MicrographProposal& proposal,
                             bool normative) {
    return accept_micrograph(
        fragment, to_micrograph(proposal, fragment.rfc_id, fragment.section_id,
                                normative));
}

// --- label normalization ----------------------------------------------------

const AliasTable& AliasTable::builtin() {
    static const AliasTable table = [] {
        AliasTable t;
        t.states = {
            {"auth", "AUTHORIZATION"},          {"authorization", "AUTHORIZATION"},
            {"authorisation", "AUTHORIZATION"}, {"authorization state", "AUTHORIZATION"},
            {"transaction", "TRANSACTION"},     {"transaction state", "TRANSACTION"},
            {"txn", "TRANSACTION"},             {"update", "UPDATE"},
            {"update state", "UPDATE"},
        };
        return t;
    }();
    return table;
}

AliasTable AliasTable::load(const std::filesystem::path& file) {
    json j;
    try {
        j = json::parse(util::read_file(file));
    } catch (const json::exception& e) {
        throw IoError("alias table " + file.string() + ": " + e.what());
    }
    AliasTable t;
    for (const auto& [alias, canon] : j.items()) {
        if (!canon.is_string()) {
            throw IoError("alias table " + file.string() + ": values must be strings");
        }
        t.states[util::to_lower(alias)] = canon.get<std::string>();
    }
    return t;
}

std::string normalize_label(const std::string& raw, NodeType kind,
                            const AliasTable& aliases) {
    std::string trimmed{util::trim(raw)};
    if (kind == NodeType::state) {
        auto it = aliases.states.find(util::to_lower(trimmed));
        if (it != aliases.states.end()) return it->second;
    }
    return util::to_upper(trimmed);
}

// --- multigraph -------------------------------------------------------------

const GNode* Multigraph::find_node(const std::string& id) const {
    for (const GNode& n : nodes) {
        if (n.id == id) return &n;
    }
    return nullptr;
}

namespace {

std::vector<std::string> labels_of(const Multigraph& g, NodeType t) {
    std::vector<std::string> out;
    for (const GNode& n : g.nodes) {
        if (n.type == t) out.push_back(n.label);
    }
    return out;
}

std::string node_prefix(NodeType t) {
    switch (t) {
        case NodeType::state: return "state:";
        case NodeType::command: return "cmd:";
        case NodeType::response: return "resp:";
    }
    return "?:";
}

void add_anchors(std::vector<Anchor>& into, const std::vector<Anchor>& more) {
    for (const Anchor& a : more) {
        if (std::find(into.begin(), into.end(), a) == into.end()) into.push_back(a);
    }
}

// Word tokens (alphanumeric + underscore runs) of a constraint text, for
// attaching it to the node it talks about.
std::vector<std::string> words_of(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_') {
            cur += ch;
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

Multigraph merge(const std::vector<Micrograph>& micrographs, const AliasTable& aliases) {
    // Canonical node id -> node under construction.
    std::map<std::string, GNode> nodes;
    struct EdgeKey {
        EdgeType type;
        std::string source, target;
        auto operator<=>(const EdgeKey&) const = default;
    };
    std::map<EdgeKey, std::vector<Anchor>> edges;

    struct Candidate {
        std::string text;
        std::string kind;
        std::vector<Anchor> anchors;
    };
    std::vector<Candidate> candidates;

    for (const Micrograph& m : micrographs) {
        // Local proposal id -> canonical multigraph id.
        std::map<std::string, std::string> canon_id;
        for (const MicroNode& n : m.nodes) {
            std::string label = normalize_label(n.label, n.type, aliases);
            std::string id = node_prefix(n.type) + label;
            canon_id[n.id] = id;
            GNode& g = nodes[id];
            g.id = id;
            g.label = label;
            g.type = n.type;
            add_anchors(g.anchors, n.anchors);
        }
        for (const MicroEdge& e : m.edges) {
            EdgeKey key;
            key.type = e.type == EdgeType::dependency ? EdgeType::requires_before : e.type;
            key.source = canon_id.at(e.source);
            key.target = canon_id.at(e.target);
            add_anchors(edges[key], e.anchors);
        }
        for (const MicroConstraint& c : m.constraints) {
            candidates.push_back({c.text, c.kind, c.anchors});
        }
    }

    Multigraph g;
    for (auto& [id, node] : nodes) {
        std::sort(node.anchors.begin(), node.anchors.end());
        g.nodes.push_back(std::move(node));
    }
    std::sort(g.nodes.begin(), g.nodes.end(), [](const GNode& a, const GNode& b) {
        return std::tie(a.type, a.label) < std::tie(b.type, b.label);
    });

    for (auto& [key, anchors] : edges) {
        std::sort(anchors.begin(), anchors.end());
        GEdge e;
        e.type = key.type;
        e.source = key.source;
        e.target = key.target;
        e.anchors = anchors;
        e.id = edge_type_name(e.type) + ":" + e.source + ">" + e.target;
        g.edges.push_back(std::move(e));
    }
    std::sort(g.edges.begin(), g.edges.end(), [](const GEdge& a, const GEdge& b) {
        return std::tie(a.type, a.source, a.target) <
               std::tie(b.type, b.source, b.target);
    });

    // Drop non-normative yields-to-state edges that disagree with a
    // normative sibling (same command, different state).
    auto dominated = [&](const GEdge& e) {
        if (e.type != EdgeType::yields) return false;
        if (e.target.rfind("state:", 0) != 0) return false;
        if (any_normative(e.anchors)) return false;
        for (const GEdge& other : g.edges) {
            if (other.type == EdgeType::yields && other.source == e.source &&
                other.target != e.target && other.target.rfind("state:", 0) == 0 &&
                any_normative(other.anchors)) {
                return true;
            }
        }
        return false;
    };
    g.edges.erase(std::remove_if(g.edges.begin(), g.edges.end(), dominated),
                  g.edges.end());

    // --- constraint store ---------------------------------------------------
    // Attach each candidate to the first command (else state) it mentions.
    auto attach_of = [&](const std::string& text) -> std::string {
        auto words = words_of(text);
        for (const GNode& n : g.nodes) {
            if (n.type != NodeType::command) continue;
            for (const auto& w : words) {
                if (util::iequals(w, n.label)) return n.id;
            }
        }
        for (const GNode& n : g.nodes) {
            if (n.type != NodeType::state) continue;
            for (const auto& w : words) {
                if (util::iequals(w, n.label)) return n.id;
            }
        }
        return "";
    };

    struct Entry {
        std::string text, kind, attached_to;
        std::vector<Anchor> anchors;
        bool conflict = false;
        std::optional<constraint::FieldBounds> bounds;
    };
    std::vector<Entry> entries;
    for (const Candidate& c : candidates) {
        Entry e;
        e.text = c.text;
        e.kind = c.kind;
        e.attached_to = attach_of(c.text);
        e.anchors = c.anchors;
        try {
            auto expr = constraint::parse_constraint(c.text);
            e.text = constraint::to_string(expr);
            e.bounds = constraint::as_bounds(expr);
            if (e.kind.empty()) {
                e.kind = constraint::kind_of(expr) == constraint::ConstraintKind::dependent
                             ? "dependent"
                             : "independent";
            }
        } catch (const Error&) {
            // Prose constraint: kept verbatim, no intersection.
        }
        entries.push_back(std::move(e));
    }

    // Identical texts on the same attachment merge into one entry.
    {
        std::vector<Entry> unique_entries;
        for (Entry& e : entries) {
            bool merged = false;
            for (Entry& u : unique_entries) {
                if (u.text == e.text && u.attached_to == e.attached_to) {
                    add_anchors(u.anchors, e.anchors);
                    merged = true;
                    break;
                }
            }
            if (!merged) unique_entries.push_back(std::move(e));
        }
        entries = std::move(unique_entries);
    }

    // Intersect single-field bounds per (attachment, field); a contradictory
    // intersection keeps the originals and flags them instead.
    std::vector<Entry> phi;
    std::map<std::pair<std::string, std::string>, std::vector<size_t>> groups;
    for (size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].bounds) {
            groups[{entries[i].attached_to, entries[i].bounds->field}].push_back(i);
        } else {
            phi.push_back(entries[i]);
        }
    }
    for (auto& [group_key, idxs] : groups) {
        if (idxs.size() == 1) {
            phi.push_back(entries[idxs[0]]);
            continue;
        }
        constraint::FieldBounds acc = *entries[idxs[0]].bounds;
        for (size_t k = 1; k < idxs.size(); ++k) {
            const auto& b = *entries[idxs[k]].bounds;
            if (b.lo && (!acc.lo || *b.lo > *acc.lo)) acc.lo = b.lo;
            if (b.hi && (!acc.hi || *b.hi < *acc.hi)) acc.hi = b.hi;
        }
        bool contradictory = acc.lo && acc.hi && *acc.lo > *acc.hi;
        if (contradictory) {
            for (size_t i : idxs) {
                Entry flagged = entries[i];
                flagged.conflict = true;
                phi.push_back(std::move(flagged));
            }
            continue;
        }
        Entry merged;
        merged.attached_to = group_key.first;
        merged.kind = "independent";
        const std::string f = "int(<" + acc.field + ">)";
        if (acc.lo && acc.hi && *acc.lo == *acc.hi) {
            merged.text = f + " == " + std::to_string(*acc.lo);
        } else if (acc.lo && acc.hi) {
            merged.text = f + " >= " + std::to_string(*acc.lo) + " and " + f +
                          " <= " + std::to_string(*acc.hi);
        } else if (acc.lo) {
            merged.text = f + " >= " + std::to_string(*acc.lo);
        } else {
            merged.text = f + " <= " + std::to_string(*acc.hi);
        }
        for (size_t i : idxs) add_anchors(merged.anchors, entries[i].anchors);
        phi.push_back(std::move(merged));
    }

    std::sort(phi.begin(), phi.end(), [](const Entry& a, const Entry& b) {
        return std::tie(a.attached_to, a.text) < std::tie(b.attached_to, b.text);
    });
    for (size_t i = 0; i < phi.size(); ++i) {
        PhiEntry p;
        p.id = "phi:" + std::to_string(i);
        p.text = phi[i].text;
        p.kind = phi[i].kind;
        p.attached_to = phi[i].attached_to;
        p.anchors = phi[i].anchors;
        std::sort(p.anchors.begin(), p.anchors.end());
        p.conflict = phi[i].conflict;
        g.phi.push_back(std::move(p));
    }
    return g;
}

std::vector<std::string> Multigraph::states() const {
    return labels_of(*this, NodeType::state);
}
std::vector<std::string> Multigraph::commands() const {
    return labels_of(*this, NodeType::command);
}
std::vector<std::string> Multigraph::responses() const {
    return labels_of(*this, NodeType::response);
}

std::vector<Transition> transitions(const Multigraph& g) {
    std::map<std::string, std::vector<std::string>> invoked_from;  // cmd -> states
    std::map<std::string, std::vector<std::string>> yields_to;     // cmd -> states
    for (const GEdge& e : g.edges) {
        if (e.type == EdgeType::invokes) {
            invoked_from[e.target].push_back(e.source);
        } else if (e.type == EdgeType::yields && e.target.rfind("state:", 0) == 0) {
            yields_to[e.source].push_back(e.target);
        }
    }
    std::vector<Transition> out;
    for (const auto& [cmd, froms] : invoked_from) {
        auto it = yields_to.find(cmd);
        if (it == yields_to.end()) continue;
        const GNode* cnode = g.find_node(cmd);
        if (!cnode) continue;
        for (const std::string& s : froms) {
            for (const std::string& t : it->second) {
                const GNode* sn = g.find_node(s);
                const GNode* tn = g.find_node(t);
                if (!sn || !tn) continue;
                out.push_back({sn->label, cnode->label, tn->label});
            }
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::pair<std::string, std::string>> dependencies(const Multigraph& g) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const GEdge& e : g.edges) {
        if (e.type != EdgeType::requires_before && e.type != EdgeType::enables) continue;
        const GNode* s = g.find_node(e.source);
        const GNode* t = g.find_node(e.target);
        if (!s || !t) continue;
        out.emplace_back(s->label, t->label);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// --- minimal transition paths ----------------------------------------------

std::vector<std::string> Mtp::commands() const {
    std::vector<std::string> out;
    for (const auto& t : triples) out.push_back(t[1]);
    return out;
}

namespace {

struct SearchSpace {
    std::vector<Transition> trans;
    // Commands that gate something; only these need tracking in the
    // issued-set component of the product state.
    std::vector<std::string> tracked;
    // command -> indices into `tracked` that must all be issued first
    std::map<std::string, std::vector<int>> gates;

    explicit SearchSpace(const Multigraph& g) {
        trans = transitions(g);
        auto deps = dependencies(g);
        std::set<std::string> sources;
        for (const auto& [before, after] : deps) sources.insert(before);
        tracked.assign(sources.begin(), sources.end());
        for (const auto& [before, after] : deps) {
            int idx = static_cast<int>(std::find(tracked.begin(), tracked.end(), before) -
                                       tracked.begin());
            gates[after].push_back(idx);
        }
    }

    int tracked_index(const std::string& cmd) const {
        auto it = std::find(tracked.begin(), tracked.end(), cmd);
        return it == tracked.end() ? -1 : static_cast<int>(it - tracked.begin());
    }

    bool allowed(const std::string& cmd, uint64_t issued) const {
        auto it = gates.find(cmd);
        if (it == gates.end()) return true;
        for (int idx : it->second) {
            if (!(issued & (1ull << idx))) return false;
        }
        return true;
    }

    uint64_t after(const std::string& cmd, uint64_t issued) const {
        int idx = tracked_index(cmd);
        return idx < 0 ? issued : issued | (1ull << idx);
    }
};

struct ProductState {
    std::string state;
    uint64_t issued = 0;
    auto operator<=>(const ProductState&) const = default;
};

struct PathInfo {
    int dist = 0;
    std::vector<std::array<std::string, 3>> triples;
    std::vector<std::string> seq;     // command labels, for tie-breaks
    std::vector<std::string> states;  // visited states, secondary tie-break
};

bool better(const PathInfo& a, const PathInfo& b) {
    return std::tie(a.dist, a.seq, a.states) < std::tie(b.dist, b.seq, b.states);
}

}  // namespace

MtpReport compute_mtps(const Multigraph& g, const std::vector<std::string>& initial,
                       const std::vector<std::string>& targets) {
    SearchSpace space(g);

    // Level-by-level search keeping, per product state, the
    // lexicographically least shortest path that reaches it.
    std::map<ProductState, PathInfo> best;
    for (const std::string& s : initial) {
        PathInfo p;
        p.states = {s};
        ProductState ps{s, 0};
        auto it = best.find(ps);
        if (it == best.end() || better(p, it->second)) best[ps] = std::move(p);
    }
    for (int level = 0;; ++level) {
        bool expanded = false;
        // Collect this level first: updates must not affect the frontier.
        std::vector<std::pair<ProductState, PathInfo>> frontier;
        for (const auto& [ps, info] : best) {
            if (info.dist == level) frontier.emplace_back(ps, info);
        }
        for (const auto& [ps, info] : frontier) {
            for (const Transition& t : space.trans) {
                if (t.state != ps.state) continue;
                if (!space.allowed(t.command, ps.issued)) continue;
                ProductState next{t.next_state, space.after(t.command, ps.issued)};
                PathInfo cand = info;
                cand.dist = level + 1;
                cand.triples.push_back({t.state, t.command, t.next_state});
                cand.seq.push_back(t.command);
                cand.states.push_back(t.next_state);
                auto it = best.find(next);
                if (it == best.end() || better(cand, it->second)) {
                    best[next] = std::move(cand);
                    expanded = true;
                }
            }
        }
        if (!expanded) break;
    }

    // Φ entries indexed by the node/edge element they hang on.
    auto preconditions_for = [&](const std::vector<std::array<std::string, 3>>& triples) {
        std::vector<std::string> out;
        std::set<std::string> involved;
        for (const auto& t : triples) {
            involved.insert("state:" + t[0]);
            involved.insert("cmd:" + t[1]);
            involved.insert("state:" + t[2]);
            involved.insert("invokes:state:" + t[0] + ">cmd:" + t[1]);
            involved.insert("yields:cmd:" + t[1] + ">state:" + t[2]);
        }
        for (const PhiEntry& p : g.phi) {
            if (!p.attached_to.empty() && involved.count(p.attached_to)) {
                out.push_back(p.id);
            }
        }
        return out;
    };

    MtpReport report;
    for (const std::string& target : targets) {
        // "from/COMMAND/to" names one transition; anything else is a command.
        auto parts = util::split(target, '/');
        bool edge_target = parts.size() == 3;

        std::optional<PathInfo> found;
        for (const auto& [ps, info] : best) {
            for (const Transition& t : space.trans) {
                if (t.state != ps.state) continue;
                if (!space.allowed(t.command, ps.issued)) continue;
                bool hits = edge_target ? (t.state == parts[0] && t.command == parts[1] &&
                                           t.next_state == parts[2])
                                        : t.command == target;
                if (!hits) continue;
                PathInfo cand = info;
                cand.dist += 1;
                cand.triples.push_back({t.state, t.command, t.next_state});
                cand.seq.push_back(t.command);
                cand.states.push_back(t.next_state);
                if (!found || better(cand, *found)) found = std::move(cand);
            }
        }
        if (!found) {
            report.unreachable.push_back(target);
            continue;
        }
        Mtp mtp;
        mtp.target = target;
        mtp.initial_state = found->triples.front()[0];
        mtp.postcondition = edge_target ? found->triples.back()[2] : target;
        mtp.triples = found->triples;
        mtp.preconditions = preconditions_for(found->triples);
        report.mtps.push_back(std::move(mtp));
    }
    return report;
}

// --- artifacts ---------------------------------------------------------------

namespace {

json anchor_json(const Anchor& a) {
    return json{{"rfc_id", a.where.rfc_id},
                {"section_id", a.where.section_id},
                {"paragraphs", a.where.paragraph_indices},
                {"normative", a.normative}};
}

Anchor anchor_from(const json& j) {
    Anchor a;
    a.where.rfc_id = j.at("rfc_id").get<std::string>();
    a.where.section_id = j.at("section_id").get<std::string>();
    for (const auto& p : j.at("paragraphs")) a.where.paragraph_indices.push_back(p.get<int>());
    a.normative = j.at("normative").get<bool>();
    return a;
}

json anchors_json(const std::vector<Anchor>& anchors) {
    json arr = json::array();
    for (const Anchor& a : anchors) arr.push_back(anchor_json(a));
    return arr;
}

std::vector<Anchor> anchors_from(const json& j) {
    std::vector<Anchor> out;
    for (const auto& a : j) out.push_back(anchor_from(a));
    return out;
}

}  // namespace

ArtifactPaths export_artifacts(const Multigraph& g, const MtpReport& report,
                               const std::filesystem::path& root,
                               const std::string& rfc_id) {
    namespace fs = std::filesystem;
    fs::path dir = root / "output" / "flows" / rfc_id;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    json jg;
    jg["nodes"] = json::array();
    for (const GNode& n : g.nodes) {
        jg["nodes"].push_back({{"id", n.id},
                               {"label", n.label},
                               {"type", node_type_name(n.type)},
                               {"anchors", anchors_json(n.anchors)}});
    }
    jg["edges"] = json::array();
    for (const GEdge& e : g.edges) {
        jg["edges"].push_back({{"id", e.id},
                               {"source", e.source},
                               {"target", e.target},
                               {"type", edge_type_name(e.type)},
                               {"anchors", anchors_json(e.anchors)}});
    }
    jg["phi"] = json::array();
    for (const PhiEntry& p : g.phi) {
        jg["phi"].push_back({{"id", p.id},
                             {"text", p.text},
                             {"kind", p.kind},
                             {"attached_to", p.attached_to},
                             {"anchors", anchors_json(p.anchors)},
                             {"conflict", p.conflict}});
    }

    json jm;
    jm["mtps"] = json::array();
    for (const Mtp& m : report.mtps) {
        json triples = json::array();
        for (const auto& t : m.triples) triples.push_back({t[0], t[1], t[2]});
        jm["mtps"].push_back({{"target", m.target},
                              {"initial_state", m.initial_state},
                              {"postcondition", m.postcondition},
                              {"triples", triples},
                              {"preconditions", m.preconditions}});
    }
    jm["unreachable"] = report.unreachable;

    ArtifactPaths paths{dir / "graph.json", dir / "mtps.json"};
    util::write_file_atomic(paths.graph_json, jg.dump(2) + "\n");
    util::write_file_atomic(paths.mtps_json, jm.dump(2) + "\n");
    return paths;
}

Multigraph load_graph(const std::filesystem::path& file) {
    json j;
    try {
        j = json::parse(util::read_file(file));
    } catch (const json::exception& e) {
        throw IoError("graph artifact " + file.string() + ": " + e.what());
    }
    Multigraph g;
    for (const auto& n : j.at("nodes")) {
        GNode node;
        node.id = n.at("id").get<std::string>();
        node.label = n.at("label").get<std::string>();
        auto t = node_type_of(n.at("type").get<std::string>());
        if (!t) throw IoError("graph artifact: bad node type");
        node.type = *t;
        node.anchors = anchors_from(n.at("anchors"));
        g.nodes.push_back(std::move(node));
    }
    for (const auto& e : j.at("edges")) {
        GEdge edge;
        edge.id = e.at("id").get<std::string>();
        edge.source = e.at("source").get<std::string>();
        edge.target = e.at("target").get<std::string>();
        auto t = edge_type_of(e.at("type").get<std::string>());
        if (!t) throw IoError("graph artifact: bad edge type");
        edge.type = *t;
        edge.anchors = anchors_from(e.at("anchors"));
        g.edges.push_back(std::move(edge));
    }
    for (const auto& p : j.at("phi")) {
        PhiEntry entry;
        entry.id = p.at("id").get<std::string>();
        entry.text = p.at("text").get<std::string>();
        entry.kind = p.at("kind").get<std::string>();
        entry.attached_to = p.at("attached_to").get<std::string>();
        entry.anchors = anchors_from(p.at("anchors"));
        entry.conflict = p.at("conflict").get<bool>();
        g.phi.push_back(std::move(entry));
    }
    return g;
}

MtpReport load_mtps(const std::filesystem::path& file) {
    json j;
    try {
        j = json::parse(util::read_file(file));
    } catch (const json::exception& e) {
        throw IoError("mtps artifact " + file.string() + ": " + e.what());
    }
    MtpReport report;
    for (const auto& m : j.at("mtps")) {
        Mtp mtp;
        mtp.target = m.at("target").get<std::string>();
        mtp.initial_state = m.at("initial_state").get<std::string>();
        mtp.postcondition = m.at("postcondition").get<std::string>();
        for (const auto& t : m.at("triples")) {
            mtp.triples.push_back({t.at(0).get<std::string>(), t.at(1).get<std::string>(),
                                   t.at(2).get<std::string>()});
        }
        for (const auto& p : m.at("preconditions")) {
            mtp.preconditions.push_back(p.get<std::string>());
        }
        report.mtps.push_back(std::move(mtp));
    }
    for (const auto& u : j.at("unreachable")) {
        report.unreachable.push_back(u.get<std::string>());
    }
    return report;
}

}  // namespace specforge::graph
