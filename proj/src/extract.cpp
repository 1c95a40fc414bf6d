#include "specforge/extract.hpp"

#include "json.hpp"
#include "specforge/errors.hpp"

namespace specforge::extract {

using nlohmann::json;

namespace {

// The schema layer cannot know how long the section is; range-check every
// provenance reference against the actual paragraph count here.
void check_paragraphs(const std::vector<int>& idxs, size_t paragraph_count,
                      const std::string& what) {
    for (int i : idxs) {
        if (i < 0 || static_cast<size_t>(i) >= paragraph_count) {
            throw SchemaViolation(what + ": paragraph index " + std::to_string(i) +
                                  " out of range (section has " +
                                  std::to_string(paragraph_count) + " paragraphs)");
        }
    }
}

provider::LlmRequest request_for(const Context& ctx, const char* prompt_file,
                                 const std::string& payload, double temperature) {
    auto tpl = provider::load_prompt(ctx.prompts_dir / prompt_file);
    return provider::make_request(tpl, payload, ctx.model_id, temperature);
}

}  // namespace

std::string section_payload(const ingest::SectionRecord& record) {
    json paragraphs = json::array();
    for (const auto& p : record.paragraphs) {
        paragraphs.push_back({{"index", p.index}, {"text", p.text}});
    }
    json j{{"rfc_id", record.rfc_id},
           {"section_id", record.section_id},
           {"title", record.title},
           {"paragraphs", paragraphs}};
    return j.dump(2);
}

schema::ClassificationRecord classify_section(const Context& ctx,
                                              const ingest::SectionRecord& record) {
    auto req = request_for(ctx, "classify.md", section_payload(record),
                           kClassifyTemperature);
    return call_with_retry<schema::ClassificationRecord>(
        ctx.llm, req, [&](const std::string& text) {
            auto rec = schema::parse_classification(text, record.rfc_id);
            if (rec.section_id != record.section_id) {
                throw SchemaViolation("classification: section_id \"" + rec.section_id +
                                      "\" does not match the classified section \"" +
                                      record.section_id + "\"");
            }
            check_paragraphs(rec.evidence.paragraph_indices, record.paragraphs.size(),
                             "classification evidence");
            return rec;
        });
}

schema::ExtractionFragment extract_fragment(const Context& ctx,
                                            const ingest::SectionRecord& record) {
    auto req =
        request_for(ctx, "extract.md", section_payload(record), kExtractTemperature);
    return call_with_retry<schema::ExtractionFragment>(
        ctx.llm, req, [&](const std::string& text) {
            auto frag =
                schema::parse_fragment(text, record.rfc_id, record.section_id);
            size_t n = record.paragraphs.size();
            for (const auto& s : frag.states) {
                check_paragraphs(s.provenance.paragraph_indices, n, "fragment state");
            }
            for (const auto& c : frag.commands) {
                check_paragraphs(c.provenance.paragraph_indices, n, "fragment command");
            }
            for (const auto& t : frag.transitions) {
                check_paragraphs(t.provenance.paragraph_indices, n,
                                 "fragment transition");
            }
            for (const auto& c : frag.constraints) {
                check_paragraphs(c.provenance.paragraph_indices, n,
                                 "fragment constraint");
            }
            for (const auto& r : frag.syntax_rules) {
                check_paragraphs(r.provenance.paragraph_indices, n,
                                 "fragment syntax rule");
            }
            return frag;
        });
}

schema::MicrographProposal propose_micrograph(
    const Context& ctx, const ingest::SectionRecord& record,
    const schema::ExtractionFragment& fragment) {
    json payload{{"section", json::parse(section_payload(record))},
                 {"fragment", json::parse(schema::to_json(fragment))}};
    auto req =
        request_for(ctx, "propose.md", payload.dump(2), kExtractTemperature);
    return call_with_retry<schema::MicrographProposal>(
        ctx.llm, req, [&](const std::string& text) {
            auto proposal = schema::parse_proposal(text);
            size_t n = record.paragraphs.size();
            for (const auto& node : proposal.nodes) {
                if (node.anchors) {
                    check_paragraphs(*node.anchors, n, "proposal node anchors");
                }
            }
            for (const auto& edge : proposal.edges) {
                if (edge.anchors) {
                    check_paragraphs(*edge.anchors, n, "proposal edge anchors");
                }
            }
            return proposal;
        });
}

}  // namespace specforge::extract
