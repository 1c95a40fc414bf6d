// Minimal edit scripts: cost optimality against an independently coded
// dynamic-programming table, exact op sequences for the deterministic
// tie-break, and script application.
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "specforge/editscript.hpp"

using namespace specforge;
using editscript::EditOp;
using editscript::OpKind;

namespace {

// Textbook Wagner–Fischer cost table, written without reference to the
// implementation (prefix formulation instead of its suffix one).
int oracle_cost(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::vector<int>> d(a.size() + 1, std::vector<int>(b.size() + 1));
    for (size_t i = 0; i <= a.size(); ++i) d[i][0] = static_cast<int>(i);
    for (size_t j = 0; j <= b.size(); ++j) d[0][j] = static_cast<int>(j);
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j) {
            int sub = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            int del = d[i - 1][j] + 1;
            int ins = d[i][j - 1] + 1;
            d[i][j] = std::min({sub, del, ins});
        }
    }
    return d[a.size()][b.size()];
}

std::vector<std::string> random_tokens(std::mt19937& rng, int max_len, int alphabet) {
    std::uniform_int_distribution<int> len_dist(0, max_len);
    std::uniform_int_distribution<int> sym(0, alphabet - 1);
    std::vector<std::string> out;
    int len = len_dist(rng);
    for (int i = 0; i < len; ++i) out.push_back("t" + std::to_string(sym(rng)));
    return out;
}

}  // namespace

TEST_CASE("identical sequences need no edits") {
    std::vector<std::string> s = {"+OK", "2", "320", "<crlf>"};
    auto script = editscript::min_edit_script(s, s);
    CHECK(script.cost() == 0);
    CHECK(script.ops.empty());
    CHECK(editscript::apply(script, s) == s);
    CHECK(editscript::min_edit_script({}, {}).cost() == 0);
}

TEST_CASE("status-indicator flip is one substitution") {
    auto script = editscript::min_edit_script({"+OK"}, {"-ERR"});
    REQUIRE(script.cost() == 1);
    CHECK(script.ops[0] == EditOp{OpKind::substitute, 0, "-ERR"});
    CHECK(editscript::apply(script, {"+OK"}) == std::vector<std::string>{"-ERR"});
}

TEST_CASE("pure insertions and deletions") {
    auto grow = editscript::min_edit_script({}, {"a", "b", "c"});
    CHECK(grow.cost() == 3);
    for (const auto& op : grow.ops) CHECK(op.kind == OpKind::insert);
    CHECK(editscript::apply(grow, {}) == std::vector<std::string>{"a", "b", "c"});

    auto shrink = editscript::min_edit_script({"a", "b", "c"}, {});
    CHECK(shrink.cost() == 3);
    for (const auto& op : shrink.ops) CHECK(op.kind == OpKind::erase);
    CHECK(editscript::apply(shrink, {"a", "b", "c"}).empty());
}

TEST_CASE("equal-cost paths prefer substitute, then delete, then insert") {
    // {A,B} -> {B,A}: substituting both beats delete+insert under the
    // preference order even though the costs tie.
    auto swap = editscript::min_edit_script({"A", "B"}, {"B", "A"});
    REQUIRE(swap.cost() == 2);
    CHECK(swap.ops[0] == EditOp{OpKind::substitute, 0, "B"});
    CHECK(swap.ops[1] == EditOp{OpKind::substitute, 1, "A"});

    // {A,X} -> {A}: the deletion lands on the mismatching token.
    auto drop = editscript::min_edit_script({"A", "X"}, {"A"});
    REQUIRE(drop.cost() == 1);
    CHECK(drop.ops[0] == EditOp{OpKind::erase, 1, ""});

    // {A} -> {B,A}: one insertion before position 0.
    auto grow = editscript::min_edit_script({"A"}, {"B", "A"});
    REQUIRE(grow.cost() == 1);
    CHECK(grow.ops[0] == EditOp{OpKind::insert, 0, "B"});

    // Appending: insert at pos == source length.
    auto tail = editscript::min_edit_script({"A"}, {"A", "Z"});
    REQUIRE(tail.cost() == 1);
    CHECK(tail.ops[0] == EditOp{OpKind::insert, 1, "Z"});
}

TEST_CASE("op positions never decrease") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        auto a = random_tokens(rng, 10, 4);
        auto b = random_tokens(rng, 10, 4);
        auto script = editscript::min_edit_script(a, b);
        for (size_t i = 1; i < script.ops.size(); ++i) {
            CHECK(script.ops[i].pos >= script.ops[i - 1].pos);
        }
    }
}

TEST_CASE("cost matches the independent table and apply reproduces targets") {
    std::mt19937 rng(20260823);
    int nonzero = 0;
    for (int trial = 0; trial < 500; ++trial) {
        auto a = random_tokens(rng, 12, 6);
        auto b = random_tokens(rng, 12, 6);
        auto script = editscript::min_edit_script(a, b);
        INFO("trial " << trial);
        CHECK(script.cost() == oracle_cost(a, b));
        CHECK(editscript::apply(script, a) == b);
        if (script.cost() > 0) ++nonzero;
    }
    CHECK(nonzero > 400);  // the fixture genuinely exercises edits
}

TEST_CASE("op kind names match the wire vocabulary") {
    CHECK(editscript::op_kind_name(OpKind::substitute) == "substitute");
    CHECK(editscript::op_kind_name(OpKind::erase) == "delete");
    CHECK(editscript::op_kind_name(OpKind::insert) == "insert");
}
