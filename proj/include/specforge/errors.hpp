#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace specforge {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ingest
struct UnsupportedFormat : Error { using Error::Error; };
struct NoSectionsFound : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// llm / extract
struct ProviderError : Error { using Error::Error; };
struct SchemaViolation : Error { using Error::Error; };

// retrieve
struct EmptyCorpus : Error { using Error::Error; };

// grammar
struct GrammarSyntaxError : Error {
    GrammarSyntaxError(const std::string& msg, int line, int col)
        : Error(msg + " at line " + std::to_string(line) + ", column " + std::to_string(col)),
          line(line), column(col) {}
    int line = 0;
    int column = 0;
};
struct UndefinedNonterminal : Error { using Error::Error; };
struct DuplicateDefinition : Error { using Error::Error; };
struct UnknownPartyTag : Error { using Error::Error; };
struct DerivationExhausted : Error { using Error::Error; };
struct UnresolvableFieldRef : Error { using Error::Error; };

// Carries the furthest failure position and the terminals that would have
// allowed progress there; downstream this is the G-SYN evidence.
struct ParseFailure : Error {
    ParseFailure(size_t position, std::vector<std::string> expected_syms)
        : Error("parse failure at byte " + std::to_string(position)),
          position(position), expected(std::move(expected_syms)) {}
    size_t position = 0;
    std::vector<std::string> expected;
};

// synth
struct InconsistentMtps : Error { using Error::Error; };
struct PatchRejected : Error {
    enum class Reason { parse_failure, schema_failure, mtp_regression, unknown_target };
    PatchRejected(Reason r, const std::string& detail)
        : Error("patch rejected (" + reason_name(r) + "): " + detail), reason(r) {}
    static std::string reason_name(Reason r) {
        switch (r) {
            case Reason::parse_failure: return "parse_failure";
            case Reason::schema_failure: return "schema_failure";
            case Reason::mtp_regression: return "mtp_regression";
            case Reason::unknown_target: return "unknown_target";
        }
        return "?";
    }
    Reason reason;
};

// harness
struct ConnectFailure : Error { using Error::Error; };
struct BindFailure : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };

// repair
struct LocalizationFailure : Error { using Error::Error; };

// cli
struct MissingArtifact : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace specforge
