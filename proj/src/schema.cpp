#include "specforge/schema.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "json.hpp"
#include "specforge/errors.hpp"
#include "specforge/util.hpp"

namespace specforge::schema {

using nlohmann::json;

namespace {

// Model replies sometimes arrive wrapped in ```json fences; strip them
// before parsing. Anything else must be exactly one JSON object.
std::string strip_fences(const std::string& text) {
    std::string t(util::trim(text));
    if (t.rfind("```", 0) == 0) {
        size_t nl = t.find('\n');
        size_t end = t.rfind("```");
        if (nl != std::string::npos && end != std::string::npos && end > nl) {
            t = std::string(util::trim(t.substr(nl + 1, end - nl - 1)));
        }
    }
    return t;
}

json parse_object(const std::string& text, const char* what) {
    json j;
    try {
        j = json::parse(strip_fences(text));
    } catch (const json::exception& e) {
        throw SchemaViolation(std::string(what) + ": not valid JSON: " + e.what());
    }
    if (!j.is_object()) {
        throw SchemaViolation(std::string(what) + ": top-level value must be an object");
    }
    return j;
}

[[noreturn]] void fail(const std::string& msg) { throw SchemaViolation(msg); }

std::string need_string(const json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key)) fail(ctx + ": missing key \"" + key + "\"");
    if (!j.at(key).is_string()) fail(ctx + ": \"" + key + "\" must be a string");
    return j.at(key).get<std::string>();
}

const json& need_array(const json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key)) fail(ctx + ": missing key \"" + key + "\"");
    if (!j.at(key).is_array()) fail(ctx + ": \"" + key + "\" must be an array");
    return j.at(key);
}

// A key that must be present but may be null.
std::optional<std::string> nullable_string(const json& j, const char* key,
                                           const std::string& ctx) {
    if (!j.contains(key)) fail(ctx + ": missing key \"" + key + "\" (use null)");
    const json& v = j.at(key);
    if (v.is_null()) return std::nullopt;
    if (!v.is_string()) fail(ctx + ": \"" + key + "\" must be a string or null");
    return v.get<std::string>();
}

std::vector<int> need_paragraphs(const json& j, const char* key, const std::string& ctx) {
    const json& arr = need_array(j, key, ctx);
    if (arr.empty()) fail(ctx + ": \"" + std::string(key) + "\" must not be empty");
    std::vector<int> out;
    for (const json& v : arr) {
        if (!v.is_number_integer() || v.get<int>() < 0) {
            fail(ctx + ": \"" + std::string(key) + "\" entries must be indices >= 0");
        }
        out.push_back(v.get<int>());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::optional<std::vector<int>> nullable_paragraphs(const json& j, const char* key,
                                                    const std::string& ctx) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return need_paragraphs(j, key, ctx);
}

ingest::Provenance prov_of(const json& j, const std::string& rfc_id,
                           const std::string& section_id, const std::string& ctx) {
    ingest::Provenance p;
    p.rfc_id = rfc_id;
    p.section_id = section_id;
    p.paragraph_indices = need_paragraphs(j, "paragraphs", ctx);
    return p;
}

}  // namespace

int token_count(const std::string& s) {
    std::istringstream in(s);
    std::string tok;
    int n = 0;
    while (in >> tok) ++n;
    return n;
}

ClassificationRecord parse_classification(const std::string& text,
                                          const std::string& rfc_id) {
    json j = parse_object(text, "classification");
    static const std::set<std::string> allowed = {"section_id", "label", "action",
                                                  "summary", "paragraphs"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key)) {
            fail("classification: unexpected key \"" + key + "\"");
        }
    }
    ClassificationRecord r;
    r.section_id = need_string(j, "section_id", "classification");
    r.label = need_string(j, "label", "classification");
    r.action = need_string(j, "action", "classification");
    r.summary = need_string(j, "summary", "classification");
    static const std::set<std::string> labels = {"state_machine", "overview", "example",
                                                 "other"};
    static const std::set<std::string> actions = {"extract", "copy", "summarize"};
    if (!labels.count(r.label)) fail("classification: unknown label \"" + r.label + "\"");
    if (!actions.count(r.action)) {
        fail("classification: unknown action \"" + r.action + "\"");
    }
    if (token_count(r.summary) > 30) {
        fail("classification: summary exceeds 30 tokens (" +
             std::to_string(token_count(r.summary)) + ")");
    }
    r.evidence = prov_of(j, rfc_id, r.section_id, "classification");
    return r;
}

ExtractionFragment parse_fragment(const std::string& text, const std::string& rfc_id,
                                  const std::string& section_id) {
    json j = parse_object(text, "fragment");
    ExtractionFragment f;
    f.rfc_id = rfc_id;
    f.section_id = section_id;

    std::set<std::string> state_names;
    for (const json& s : need_array(j, "states", "fragment")) {
        FragmentState st;
        st.name = need_string(s, "name", "fragment state");
        if (st.name.empty()) fail("fragment state: empty name");
        st.description = nullable_string(s, "description", "fragment state");
        st.provenance = prov_of(s, rfc_id, section_id, "fragment state");
        state_names.insert(st.name);
        f.states.push_back(std::move(st));
    }

    std::set<std::string> command_names;
    for (const json& c : need_array(j, "commands", "fragment")) {
        FragmentCommand cmd;
        cmd.name = need_string(c, "name", "fragment command");
        if (cmd.name.empty()) fail("fragment command: empty name");
        if (!c.contains("valid_in_states")) {
            fail("fragment command: missing key \"valid_in_states\" (use null)");
        }
        if (!c.at("valid_in_states").is_null()) {
            std::vector<std::string> vs;
            if (!c.at("valid_in_states").is_array()) {
                fail("fragment command: \"valid_in_states\" must be an array or null");
            }
            for (const json& v : c.at("valid_in_states")) {
                if (!v.is_string()) {
                    fail("fragment command: \"valid_in_states\" entries must be strings");
                }
                if (!state_names.count(v.get<std::string>())) {
                    fail("fragment command \"" + cmd.name +
                         "\": valid_in_states names undeclared state \"" +
                         v.get<std::string>() + "\"");
                }
                vs.push_back(v.get<std::string>());
            }
            cmd.valid_in_states = std::move(vs);
        }
        cmd.description = nullable_string(c, "description", "fragment command");
        cmd.provenance = prov_of(c, rfc_id, section_id, "fragment command");
        command_names.insert(cmd.name);
        f.commands.push_back(std::move(cmd));
    }

    for (const json& t : need_array(j, "transitions", "fragment")) {
        FragmentTransition tr;
        tr.from_state = need_string(t, "from_state", "fragment transition");
        tr.command = need_string(t, "command", "fragment transition");
        tr.to_state = need_string(t, "to_state", "fragment transition");
        if (!state_names.count(tr.from_state)) {
            fail("fragment transition names undeclared state \"" + tr.from_state + "\"");
        }
        if (!state_names.count(tr.to_state)) {
            fail("fragment transition names undeclared state \"" + tr.to_state + "\"");
        }
        if (!command_names.count(tr.command)) {
            fail("fragment transition names undeclared command \"" + tr.command + "\"");
        }
        tr.provenance = prov_of(t, rfc_id, section_id, "fragment transition");
        f.transitions.push_back(std::move(tr));
    }

    for (const json& c : need_array(j, "constraints", "fragment")) {
        FragmentConstraint fc;
        fc.text = need_string(c, "text", "fragment constraint");
        if (fc.text.empty()) fail("fragment constraint: empty text");
        fc.kind = nullable_string(c, "kind", "fragment constraint");
        if (fc.kind && *fc.kind != "independent" && *fc.kind != "dependent") {
            fail("fragment constraint: unknown kind \"" + *fc.kind + "\"");
        }
        fc.provenance = prov_of(c, rfc_id, section_id, "fragment constraint");
        f.constraints.push_back(std::move(fc));
    }

    for (const json& srj : need_array(j, "syntax_rules", "fragment")) {
        FragmentSyntaxRule sr;
        sr.nonterminal = need_string(srj, "nonterminal", "fragment syntax rule");
        sr.definition_text = need_string(srj, "definition_text", "fragment syntax rule");
        sr.provenance = prov_of(srj, rfc_id, section_id, "fragment syntax rule");
        f.syntax_rules.push_back(std::move(sr));
    }
    return f;
}

MicrographProposal parse_proposal(const std::string& text) {
    json j = parse_object(text, "proposal");
    MicrographProposal p;
    static const std::set<std::string> node_types = {"state", "command", "response"};
    static const std::set<std::string> edge_types = {"invokes", "yields", "requires",
                                                     "enables", "dependency"};
    std::set<std::string> ids;
    for (const json& n : need_array(j, "nodes", "proposal")) {
        ProposalNode node;
        node.id = need_string(n, "id", "proposal node");
        node.label = need_string(n, "label", "proposal node");
        node.type = need_string(n, "type", "proposal node");
        if (node.id.empty()) fail("proposal node: empty id");
        if (node.label.empty()) fail("proposal node: empty label");
        if (!node_types.count(node.type)) {
            fail("proposal node: unknown type \"" + node.type + "\"");
        }
        if (!ids.insert(node.id).second) {
            fail("proposal node: duplicate id \"" + node.id + "\"");
        }
        node.anchors = nullable_paragraphs(n, "anchors", "proposal node");
        p.nodes.push_back(std::move(node));
    }
    for (const json& e : need_array(j, "edges", "proposal")) {
        ProposalEdge edge;
        edge.source = need_string(e, "source", "proposal edge");
        edge.target = need_string(e, "target", "proposal edge");
        edge.type = need_string(e, "type", "proposal edge");
        if (!edge_types.count(edge.type)) {
            fail("proposal edge: unknown type \"" + edge.type + "\"");
        }
        if (!ids.count(edge.source)) {
            fail("proposal edge: source \"" + edge.source + "\" is not a node id");
        }
        if (!ids.count(edge.target)) {
            fail("proposal edge: target \"" + edge.target + "\" is not a node id");
        }
        edge.anchors = nullable_paragraphs(e, "anchors", "proposal edge");
        p.edges.push_back(std::move(edge));
    }
    return p;
}

std::string to_json(const ClassificationRecord& r) {
    json j{{"section_id", r.section_id},
           {"label", r.label},
           {"action", r.action},
           {"summary", r.summary},
           {"paragraphs", r.evidence.paragraph_indices}};
    return j.dump(2);
}

std::string to_json(const ExtractionFragment& f) {
    json j;
    j["states"] = json::array();
    for (const auto& s : f.states) {
        j["states"].push_back({{"name", s.name},
                               {"description", s.description ? json(*s.description) : json()},
                               {"paragraphs", s.provenance.paragraph_indices}});
    }
    j["commands"] = json::array();
    for (const auto& c : f.commands) {
        json vc = c.valid_in_states ? json(*c.valid_in_states) : json();
        j["commands"].push_back(
            {{"name", c.name},
             {"valid_in_states", vc},
             {"description", c.description ? json(*c.description) : json()},
             {"paragraphs", c.provenance.paragraph_indices}});
    }
    j["transitions"] = json::array();
    for (const auto& t : f.transitions) {
        j["transitions"].push_back({{"from_state", t.from_state},
                                    {"command", t.command},
                                    {"to_state", t.to_state},
                                    {"paragraphs", t.provenance.paragraph_indices}});
    }
    j["constraints"] = json::array();
    for (const auto& c : f.constraints) {
        j["constraints"].push_back({{"text", c.text},
                                    {"kind", c.kind ? json(*c.kind) : json()},
                                    {"paragraphs", c.provenance.paragraph_indices}});
    }
    j["syntax_rules"] = json::array();
    for (const auto& s : f.syntax_rules) {
        j["syntax_rules"].push_back({{"nonterminal", s.nonterminal},
                                     {"definition_text", s.definition_text},
                                     {"paragraphs", s.provenance.paragraph_indices}});
    }
    return j.dump(2);
}

std::string to_json(const MicrographProposal& p) {
    json j;
    j["nodes"] = json::array();
    for (const auto& n : p.nodes) {
        j["nodes"].push_back({{"id", n.id},
                              {"label", n.label},
                              {"type", n.type},
                              {"anchors", n.anchors ? json(*n.anchors) : json()}});
    }
    j["edges"] = json::array();
    for (const auto& e : p.edges) {
        j["edges"].push_back({{"source", e.source},
                              {"target", e.target},
                              {"type", e.type},
                              {"anchors", e.anchors ? json(*e.anchors) : json()}});
    }
    return j.dump(2);
}

}  // namespace specforge::schema
