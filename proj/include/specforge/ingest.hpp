#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace specforge::ingest {

enum class SourceFormat { plain_text, html };

struct RawDocument {
    std::string rfc_id;
    std::string body;
    SourceFormat source_format = SourceFormat::plain_text;
};

struct Paragraph {
    int index = 0;
    std::string text;
    bool operator==(const Paragraph&) const = default;
};

/// One RFC section with paragraph-indexed text. Paragraph indices are
/// contiguous from 0; boilerplate never survives into paragraphs.
struct SectionRecord {
    std::string rfc_id;
    std::string section_id;  // dotted numbering ("5", "3.1") or appendix letter ("A")
    std::string title;
    std::vector<Paragraph> paragraphs;
    bool operator==(const SectionRecord&) const = default;
};

// Ties an extracted element back to the source text.
struct Provenance {
    std::string rfc_id;
    std::string section_id;
    std::vector<int> paragraph_indices;  // sorted, non-empty
    bool operator==(const Provenance&) const = default;
    auto operator<=>(const Provenance&) const = default;
};

// Strips page headers/footers, form-feed page breaks and table-of-contents
// blocks; every other byte of the body passes through untouched.
std::string clean(const RawDocument& doc);

std::vector<SectionRecord> sectionize(const std::string& cleaned, const std::string& rfc_id);

std::vector<std::filesystem::path> store_sections(const std::vector<SectionRecord>& records,
                                                  const std::filesystem::path& root);
std::vector<SectionRecord> load_sections(const std::filesystem::path& root,
                                         const std::string& rfc_id);

std::string section_to_json(const SectionRecord& rec);
SectionRecord section_from_json(const std::string& json_text);

// Exposed for the boilerplate oracle tests.
bool is_page_footer(const std::string& line);
bool is_toc_line(const std::string& line);
bool is_heading(const std::string& line);

}  // namespace specforge::ingest
