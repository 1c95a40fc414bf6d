#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "specforge/errors.hpp"
#include "specforge/ingest.hpp"
#include "specforge/provider.hpp"
#include "specforge/schema.hpp"

// Model-backed section understanding: classify each RFC section, lift the
// extract-worthy ones into structured fragments, and propose section-local
// graphs. Every model reply passes the strict schema layer; an invalid reply
// is re-issued exactly once before giving up.
namespace specforge::extract {

// Sampling temperatures by call class.
constexpr double kClassifyTemperature = 0.0;
constexpr double kExtractTemperature = 0.1;

struct Context {
    provider::LlmProvider& llm;
    std::filesystem::path prompts_dir;
    std::string model_id;
};

// Issues `request`, parses with `parse`; on SchemaViolation re-issues the
// request once with the attempt counter bumped. At most two provider calls.
// Throws the second SchemaViolation, or ProviderError immediately.
template <typename T>
T call_with_retry(provider::LlmProvider& llm, provider::LlmRequest request,
                  const std::function<T(const std::string&)>& parse) {
    try {
        return parse(llm.complete(request).text);
    } catch (const SchemaViolation&) {
        request.attempt += 1;
        return parse(llm.complete(request).text);
    }
}

// Section payload handed to the model: JSON with rfc_id, section_id, title,
// and indexed paragraphs.
std::string section_payload(const ingest::SectionRecord& record);

schema::ClassificationRecord classify_section(const Context& ctx,
                                              const ingest::SectionRecord& record);

schema::ExtractionFragment extract_fragment(const Context& ctx,
                                            const ingest::SectionRecord& record);

schema::MicrographProposal propose_micrograph(const Context& ctx,
                                              const ingest::SectionRecord& record,
                                              const schema::ExtractionFragment& fragment);

}  // namespace specforge::extract
