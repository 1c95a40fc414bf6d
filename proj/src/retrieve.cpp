#include "specforge/retrieve.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "specforge/errors.hpp"

namespace specforge::retrieve {

namespace {
constexpr double kK1 = 1.2;
constexpr double kB = 0.75;
}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

SectionIndex build_index(const std::vector<ingest::SectionRecord>& records) {
    if (records.empty()) throw EmptyCorpus("no sections to index");
    SectionIndex index;
    index.N = static_cast<int>(records.size());
    long long total_len = 0;
    for (int d = 0; d < index.N; ++d) {
        const auto& rec = records[d];
        index.docs.push_back({rec.rfc_id, rec.section_id});
        std::map<std::string, int> tf;
        int len = 0;
        auto count = [&](const std::string& text) {
            for (const std::string& tok : tokenize(text)) {
                ++tf[tok];
                ++len;
            }
        };
        count(rec.title);
        for (const auto& p : rec.paragraphs) count(p.text);
        index.doc_lengths.push_back(len);
        total_len += len;
        for (const auto& [term, n] : tf) {
            index.postings[term].push_back({d, n});
        }
    }
    index.avg_doc_length = index.N ? static_cast<double>(total_len) / index.N : 0.0;
    return index;
}

std::vector<Scored> query_terms(const SectionIndex& index,
                                const std::vector<std::string>& terms, int k) {
    // Duplicate query terms carry no extra weight: the query is a set.
    std::set<std::string> unique_terms;
    for (const std::string& raw : terms) {
        for (const std::string& tok : tokenize(raw)) unique_terms.insert(tok);
    }

    std::vector<double> score(index.docs.size(), 0.0);
    for (const std::string& term : unique_terms) {
        auto it = index.postings.find(term);
        if (it == index.postings.end()) continue;
        double df = static_cast<double>(it->second.size());
        double idf = std::log((index.N - df + 0.5) / (df + 0.5) + 1.0);
        for (const Posting& p : it->second) {
            double tf = p.tf;
            double norm = index.avg_doc_length > 0.0
                              ? index.doc_lengths[p.doc] / index.avg_doc_length
                              : 0.0;
            score[p.doc] += idf * tf * (kK1 + 1.0) / (tf + kK1 * (1.0 - kB + kB * norm));
        }
    }

    std::vector<Scored> hits;
    for (size_t d = 0; d < index.docs.size(); ++d) {
        if (score[d] > 0.0) hits.push_back({index.docs[d], score[d]});
    }
    std::sort(hits.begin(), hits.end(), [](const Scored& a, const Scored& b) {
        return std::tie(b.score, a.ref.section_id, a.ref.rfc_id) <
               std::tie(a.score, b.ref.section_id, b.ref.rfc_id);
    });
    if (k >= 0 && hits.size() > static_cast<size_t>(k)) hits.resize(k);
    return hits;
}

std::vector<Scored> query(const SectionIndex& index, const graph::Mtp& mtp, int k) {
    std::vector<std::string> terms;
    for (const auto& t : mtp.triples) {
        terms.push_back(t[0]);  // state entered from
        terms.push_back(t[1]);  // command
        terms.push_back(t[2]);  // state reached
    }
    return query_terms(index, terms, k);
}

}  // namespace specforge::retrieve
