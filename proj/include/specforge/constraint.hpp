#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace specforge::constraint {

// Boolean expression attached to a production via a `where` clause, or to a
// graph command via the constraint map. Grammar:
//
//   expr  := or ; or := and ("or" and)* ; and := unary ("and" unary)*
//   unary := "not" unary | "(" expr ")" | cmp
//   cmp   := term (("=="|"!="|"<="|">="|"<"|">") term)?
//   term  := integer | "string" | <field> | len(<field>) | int(<field>)
//          | matches(<field>, "regex")
struct Expr {
    enum class Kind {
        int_lit,
        str_lit,
        field_ref,
        fn_len,      // children[0] = field_ref
        fn_int,      // children[0] = field_ref
        fn_matches,  // children[0] = field_ref, str_value = pattern
        cmp,         // op in str_value, children = {lhs, rhs}
        logic_and,
        logic_or,
        logic_not,
    };

    Kind kind = Kind::int_lit;
    long long int_value = 0;
    std::string str_value;  // literal text, field name, pattern, or cmp operator
    std::vector<Expr> children;

    bool operator==(const Expr& o) const;
};

enum class ConstraintKind { independent, dependent };

Expr parse_constraint(const std::string& text);

// Canonical rendering; parse(to_string(e)) == e.
std::string to_string(const Expr& e);

// Field names referenced anywhere in the expression, deduplicated.
std::set<std::string> field_refs(const Expr& e);

// Independent: mentions exactly one distinct field. Dependent: two or more.
ConstraintKind kind_of(const Expr& e);

// Recognized closed integer range `int(<f>) >= lo and int(<f>) <= hi` (in
// either comparison order), or a single equality `int(<f>) == n`; lets the
// deriver sample directly instead of generate-and-filter.
struct Interval {
    std::string field;
    long long lo = 0;
    long long hi = 0;
};
std::optional<Interval> as_interval(const Expr& e);

// Integer bounds on a single field, recognized from `int(<f>) OP n`
// comparisons and conjunctions of them. One-sided constraints leave the
// missing side unset; contradictory results (lo > hi) are returned as-is so
// callers can intersect constraints and flag conflicts.
struct FieldBounds {
    std::string field;
    std::optional<long long> lo;
    std::optional<long long> hi;
};
std::optional<FieldBounds> as_bounds(const Expr& e);

// Recognized `int(<a>) == int(<b>)`: the deriver satisfies it by mirroring
// one field's value into the other.
struct IntEquality {
    std::string a;
    std::string b;
};
std::optional<IntEquality> as_int_equality(const Expr& e);

// Conjunction of two constraint bodies; flattens nested ands.
Expr conjoin(const Expr& a, const Expr& b);

}  // namespace specforge::constraint
