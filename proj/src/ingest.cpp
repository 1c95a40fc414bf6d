#include "specforge/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

#include <nlohmann/json.hpp>

#include "specforge/errors.hpp"
#include "specforge/util.hpp"

namespace specforge::ingest {

using nlohmann::json;

namespace {

const std::regex kFooterRe(R"(\[Page\s+\d+\]\s*$)");
const std::regex kHeaderRe(R"(^RFC\s+\d+.*\d{4}\s*$)");
const std::regex kTocLeaderRe(R"((\.\s*){2,}\d+\s*$)");
const std::regex kTocHeadingRe(R"(^\s*Table of Contents\s*$)");
const std::regex kNumberedHeadingRe(R"(^(\d+(\.\d+)*)\.?\s+\S)");
const std::regex kAppendixHeadingRe(R"(^Appendix\s+([A-Z](\.\d+)*)\.?(\s+(\S.*))?$)");

bool is_blank(const std::string& line) {
    return line.find_first_not_of(" \t") == std::string::npos;
}

std::string strip_html(const std::string& body) {
    static const std::regex script_re(R"(<(script|style)\b[^>]*>[\s\S]*?</\1>)",
                                      std::regex::icase);
    std::string text = std::regex_replace(body, script_re, "");

    std::string out;
    out.reserve(text.size());
    size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '<') {
            size_t end = text.find('>', i);
            if (end == std::string::npos) break;
            std::string tag = util::to_lower(text.substr(i + 1, end - i - 1));
            if (!tag.empty() && tag[0] == '/') tag = tag.substr(1);
            tag = tag.substr(0, tag.find_first_of(" \t/"));
            static const char* block[] = {"p",  "div", "br", "li", "tr", "pre", "h1",
                                          "h2", "h3",  "h4", "h5", "h6", "hr"};
            for (const char* b : block)
                if (tag == b) {
                    out.push_back('\n');
                    break;
                }
            i = end + 1;
        } else if (text[i] == '&') {
            size_t end = text.find(';', i);
            if (end != std::string::npos && end - i <= 8) {
                std::string ent = text.substr(i + 1, end - i - 1);
                if (ent == "amp") out.push_back('&');
                else if (ent == "lt") out.push_back('<');
                else if (ent == "gt") out.push_back('>');
                else if (ent == "quot") out.push_back('"');
                else if (ent == "apos") out.push_back('\'');
                else if (ent == "nbsp") out.push_back(' ');
                else if (!ent.empty() && ent[0] == '#')
                    out.push_back(static_cast<char>(std::atoi(ent.c_str() + 1)));
                else {
                    out.append(text.substr(i, end - i + 1));
                }
                i = end + 1;
            } else {
                out.push_back(text[i++]);
            }
        } else {
            out.push_back(text[i++]);
        }
    }
    return out;
}

}  // namespace

bool is_page_footer(const std::string& line) {
    return std::regex_search(line, kFooterRe);
}

bool is_toc_line(const std::string& line) {
    return std::regex_search(line, kTocLeaderRe) || std::regex_match(line, kTocHeadingRe);
}

bool is_heading(const std::string& line) {
    return std::regex_search(line, kNumberedHeadingRe) ||
           std::regex_match(line, kAppendixHeadingRe);
}

std::string clean(const RawDocument& doc) {
    std::string body;
    switch (doc.source_format) {
        case SourceFormat::plain_text: body = doc.body; break;
        case SourceFormat::html: body = strip_html(doc.body); break;
        default: throw UnsupportedFormat("unrecognized source format for " + doc.rfc_id);
    }

    auto lines = util::split_lines(body);
    std::vector<bool> drop(lines.size(), false);

    for (size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (line.find('\f') != std::string::npos) {
            drop[i] = true;
            // running header on the first non-blank line of the new page
            for (size_t j = i + 1; j < lines.size(); ++j) {
                if (is_blank(lines[j])) continue;
                if (std::regex_match(lines[j], kHeaderRe)) drop[j] = true;
                break;
            }
            continue;
        }
        if (is_page_footer(line)) drop[i] = true;
        if (is_toc_line(line)) drop[i] = true;
    }

    std::string out;
    out.reserve(body.size());
    for (size_t i = 0; i < lines.size(); ++i) {
        if (drop[i]) continue;
        out += lines[i];
        out.push_back('\n');
    }
    return out;
}

std::vector<SectionRecord> sectionize(const std::string& cleaned, const std::string& rfc_id) {
    auto lines = util::split_lines(cleaned);
    if (cleaned.find_first_not_of(" \t\r\n") == std::string::npos) return {};

    struct RawSection {
        std::string id;
        std::string title;
        std::vector<std::string> lines;
    };
    std::vector<RawSection> raw;
    RawSection preamble{"0", "", {}};
    bool any_heading = false;

    for (const auto& line : lines) {
        std::smatch m;
        if (std::regex_search(line, m, kNumberedHeadingRe)) {
            any_heading = true;
            raw.push_back({m[1].str(), util::trim(line.substr(m[1].length() +
                                                              (line[m[1].length()] == '.' ? 1 : 0))),
                           {}});
            continue;
        }
        if (std::regex_match(line, m, kAppendixHeadingRe)) {
            any_heading = true;
            raw.push_back({m[1].str(), m[4].matched ? util::trim(m[4].str()) : "", {}});
            continue;
        }
        if (raw.empty())
            preamble.lines.push_back(line);
        else
            raw.back().lines.push_back(line);
    }

    if (!any_heading) throw NoSectionsFound("no section headings found in " + rfc_id);

    bool preamble_has_text = std::any_of(preamble.lines.begin(), preamble.lines.end(),
                                         [](const std::string& l) { return !is_blank(l); });
    if (preamble_has_text) raw.insert(raw.begin(), preamble);

    std::vector<SectionRecord> records;
    for (const auto& rs : raw) {
        SectionRecord rec;
        rec.rfc_id = rfc_id;
        rec.section_id = rs.id;
        rec.title = rs.title;
        int idx = 0;
        std::string para;
        auto flush = [&] {
            if (!para.empty()) {
                rec.paragraphs.push_back({idx++, para});
                para.clear();
            }
        };
        for (const auto& line : rs.lines) {
            if (is_blank(line)) {
                flush();
            } else {
                if (!para.empty()) para.push_back('\n');
                para += line;
            }
        }
        flush();
        records.push_back(std::move(rec));
    }
    return records;
}

std::string section_to_json(const SectionRecord& rec) {
    json j;
    j["rfc_id"] = rec.rfc_id;
    j["section_id"] = rec.section_id;
    j["title"] = rec.title;
    j["paragraphs"] = json::array();
    for (const auto& p : rec.paragraphs)
        j["paragraphs"].push_back({{"index", p.index}, {"text", p.text}});
    return j.dump(2) + "\n";
}

SectionRecord section_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    SectionRecord rec;
    rec.rfc_id = j.at("rfc_id").get<std::string>();
    rec.section_id = j.at("section_id").get<std::string>();
    rec.title = j.at("title").get<std::string>();
    for (const auto& p : j.at("paragraphs"))
        rec.paragraphs.push_back({p.at("index").get<int>(), p.at("text").get<std::string>()});
    return rec;
}

std::vector<std::filesystem::path> store_sections(const std::vector<SectionRecord>& records,
                                                  const std::filesystem::path& root) {
    std::vector<std::filesystem::path> paths;
    for (const auto& rec : records) {
        auto dir = root / "data" / "RFC" / rec.rfc_id;
        auto path = dir / (rec.section_id + ".json");
        util::write_file_atomic(path, section_to_json(rec));
        paths.push_back(path);
    }
    return paths;
}

std::vector<SectionRecord> load_sections(const std::filesystem::path& root,
                                         const std::string& rfc_id) {
    auto dir = root / "data" / "RFC" / rfc_id;
    if (!std::filesystem::is_directory(dir))
        throw MissingArtifact("no section store under " + dir.string());
    std::vector<SectionRecord> records;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".json") continue;
        records.push_back(section_from_json(util::read_file(entry.path())));
    }
    // directory order is unspecified; restore document order
    auto key = [](const SectionRecord& r) {
        std::vector<int> parts;
        bool appendix = !r.section_id.empty() && std::isalpha((unsigned char)r.section_id[0]);
        std::string digits;
        for (char c : r.section_id) {
            if (c == '.') {
                if (!digits.empty()) parts.push_back(std::atoi(digits.c_str()));
                digits.clear();
            } else if (std::isdigit((unsigned char)c)) {
                digits += c;
            }
        }
        if (!digits.empty()) parts.push_back(std::atoi(digits.c_str()));
        return std::tuple<int, std::string, std::vector<int>>(
            appendix ? 1 : 0, appendix ? r.section_id.substr(0, 1) : "", parts);
    };
    std::sort(records.begin(), records.end(),
              [&](const auto& a, const auto& b) { return key(a) < key(b); });
    return records;
}

}  // namespace specforge::ingest
