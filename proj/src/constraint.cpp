#include "specforge/constraint.hpp"

#include <cctype>
#include <climits>

#include "specforge/errors.hpp"

namespace specforge::constraint {

namespace {

struct Token {
    enum class Kind { word, field, str, num, op, lparen, rparen, comma, end };
    Kind kind = Kind::end;
    std::string text;
    long long num = 0;
};

class Lexer {
public:
    explicit Lexer(const std::string& s) : s_(s) { advance(); }

    const Token& peek() const { return tok_; }

    Token take() {
        Token t = tok_;
        advance();
        return t;
    }

private:
    const std::string& s_;
    size_t i_ = 0;
    Token tok_;

    [[noreturn]] void fail(const std::string& why) {
        throw GrammarSyntaxError("constraint \"" + s_ + "\": " + why, 0,
                                 static_cast<int>(i_));
    }

    void advance() {
        while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t')) ++i_;
        tok_ = Token{};
        if (i_ >= s_.size()) {
            tok_.kind = Token::Kind::end;
            return;
        }
        char c = s_[i_];
        if (c == '(') { tok_ = {Token::Kind::lparen, "("}; ++i_; return; }
        if (c == ')') { tok_ = {Token::Kind::rparen, ")"}; ++i_; return; }
        if (c == ',') { tok_ = {Token::Kind::comma, ","}; ++i_; return; }
        if (c == '<') {
            // `<name>` is a field reference; any other `<` is a comparison.
            size_t j = i_ + 1;
            while (j < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[j])) || s_[j] == '_' ||
                    s_[j] == '-')) {
                ++j;
            }
            if (j > i_ + 1 && j < s_.size() && s_[j] == '>') {
                tok_.kind = Token::Kind::field;
                tok_.text = s_.substr(i_ + 1, j - i_ - 1);
                i_ = j + 1;
                return;
            }
        }
        if (c == '"') {
            std::string out;
            size_t j = i_ + 1;
            while (j < s_.size() && s_[j] != '"') {
                if (s_[j] == '\\' && j + 1 < s_.size()) {
                    char e = s_[j + 1];
                    switch (e) {
                        case 'r': out += '\r'; break;
                        case 'n': out += '\n'; break;
                        case 't': out += '\t'; break;
                        case '\\': out += '\\'; break;
                        case '"': out += '"'; break;
                        default: out += '\\'; out += e; break;
                    }
                    j += 2;
                } else {
                    out += s_[j];
                    ++j;
                }
            }
            if (j >= s_.size()) fail("unterminated string literal");
            tok_.kind = Token::Kind::str;
            tok_.text = out;
            i_ = j + 1;
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '-' && i_ + 1 < s_.size() &&
             std::isdigit(static_cast<unsigned char>(s_[i_ + 1])))) {
            size_t j = i_ + 1;
            while (j < s_.size() && std::isdigit(static_cast<unsigned char>(s_[j]))) ++j;
            tok_.kind = Token::Kind::num;
            tok_.text = s_.substr(i_, j - i_);
            tok_.num = std::stoll(tok_.text);
            i_ = j;
            return;
        }
        if (c == '=' || c == '!' || c == '<' || c == '>') {
            std::string op(1, c);
            if (i_ + 1 < s_.size() && s_[i_ + 1] == '=') op += '=';
            if ((c == '=' || c == '!') && op.size() == 1) fail("malformed comparison operator");
            tok_.kind = Token::Kind::op;
            tok_.text = op;
            i_ += op.size();
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t j = i_;
            while (j < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[j])) || s_[j] == '_')) {
                ++j;
            }
            tok_.kind = Token::Kind::word;
            tok_.text = s_.substr(i_, j - i_);
            i_ = j;
            return;
        }
        fail(std::string("unexpected character '") + c + "'");
    }
};

class Parser {
public:
    explicit Parser(const std::string& text) : text_(text), lex_(text) {}

    Expr parse() {
        Expr e = parse_or();
        if (lex_.peek().kind != Token::Kind::end) {
            fail("trailing tokens after expression");
        }
        return e;
    }

private:
    const std::string& text_;
    Lexer lex_;

    [[noreturn]] void fail(const std::string& why) {
        throw GrammarSyntaxError("constraint \"" + text_ + "\": " + why, 0, 0);
    }

    bool at_word(const char* w) {
        return lex_.peek().kind == Token::Kind::word && lex_.peek().text == w;
    }

    Expr parse_or() {
        Expr lhs = parse_and();
        while (at_word("or")) {
            lex_.take();
            Expr node;
            node.kind = Expr::Kind::logic_or;
            node.children.push_back(std::move(lhs));
            node.children.push_back(parse_and());
            lhs = std::move(node);
        }
        return lhs;
    }

    Expr parse_and() {
        Expr lhs = parse_unary();
        while (at_word("and")) {
            lex_.take();
            Expr node;
            node.kind = Expr::Kind::logic_and;
            node.children.push_back(std::move(lhs));
            node.children.push_back(parse_unary());
            lhs = std::move(node);
        }
        return lhs;
    }

    Expr parse_unary() {
        if (at_word("not")) {
            lex_.take();
            Expr node;
            node.kind = Expr::Kind::logic_not;
            node.children.push_back(parse_unary());
            return node;
        }
        return parse_cmp();
    }

    Expr parse_cmp() {
        Expr lhs = parse_term();
        if (lex_.peek().kind == Token::Kind::op) {
            Token op = lex_.take();
            Expr node;
            node.kind = Expr::Kind::cmp;
            node.str_value = op.text;
            node.children.push_back(std::move(lhs));
            node.children.push_back(parse_term());
            return node;
        }
        return lhs;
    }

    Expr parse_field_arg() {
        if (lex_.peek().kind != Token::Kind::field) fail("expected <field> argument");
        Expr f;
        f.kind = Expr::Kind::field_ref;
        f.str_value = lex_.take().text;
        return f;
    }

    void expect(Token::Kind k, const char* what) {
        if (lex_.peek().kind != k) fail(std::string("expected ") + what);
        lex_.take();
    }

    Expr parse_term() {
        const Token& t = lex_.peek();
        switch (t.kind) {
            case Token::Kind::num: {
                Expr e;
                e.kind = Expr::Kind::int_lit;
                e.int_value = lex_.take().num;
                return e;
            }
            case Token::Kind::str: {
                Expr e;
                e.kind = Expr::Kind::str_lit;
                e.str_value = lex_.take().text;
                return e;
            }
            case Token::Kind::field: {
                Expr e;
                e.kind = Expr::Kind::field_ref;
                e.str_value = lex_.take().text;
                return e;
            }
            case Token::Kind::lparen: {
                lex_.take();
                Expr e = parse_or();
                expect(Token::Kind::rparen, "')'");
                return e;
            }
            case Token::Kind::word: {
                std::string fn = lex_.take().text;
                if (fn != "len" && fn != "int" && fn != "matches") {
                    fail("unknown function '" + fn + "'");
                }
                expect(Token::Kind::lparen, "'('");
                Expr e;
                e.children.push_back(parse_field_arg());
                if (fn == "len") {
                    e.kind = Expr::Kind::fn_len;
                } else if (fn == "int") {
                    e.kind = Expr::Kind::fn_int;
                } else {
                    e.kind = Expr::Kind::fn_matches;
                    expect(Token::Kind::comma, "','");
                    if (lex_.peek().kind != Token::Kind::str) fail("matches() needs a pattern string");
                    e.str_value = lex_.take().text;
                }
                expect(Token::Kind::rparen, "')'");
                return e;
            }
            default:
                fail("expected term");
        }
    }
};

int precedence(Expr::Kind k) {
    switch (k) {
        case Expr::Kind::logic_or: return 1;
        case Expr::Kind::logic_and: return 2;
        case Expr::Kind::logic_not: return 3;
        case Expr::Kind::cmp: return 4;
        default: return 5;
    }
}

std::string escape_str(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '\r': out += "\\r"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\\': out += "\\\\"; break;
            case '"': out += "\\\""; break;
            default: out += c;
        }
    }
    return out;
}

void render(const Expr& e, int parent_prec, std::string& out) {
    int prec = precedence(e.kind);
    bool need_parens = prec < parent_prec;
    if (need_parens) out += '(';
    switch (e.kind) {
        case Expr::Kind::int_lit:
            out += std::to_string(e.int_value);
            break;
        case Expr::Kind::str_lit:
            out += '"' + escape_str(e.str_value) + '"';
            break;
        case Expr::Kind::field_ref:
            out += '<' + e.str_value + '>';
            break;
        case Expr::Kind::fn_len:
            out += "len(<" + e.children[0].str_value + ">)";
            break;
        case Expr::Kind::fn_int:
            out += "int(<" + e.children[0].str_value + ">)";
            break;
        case Expr::Kind::fn_matches:
            out += "matches(<" + e.children[0].str_value + ">, \"" +
                   escape_str(e.str_value) + "\")";
            break;
        case Expr::Kind::cmp:
            render(e.children[0], prec + 1, out);
            out += ' ' + e.str_value + ' ';
            render(e.children[1], prec + 1, out);
            break;
        case Expr::Kind::logic_and:
        case Expr::Kind::logic_or: {
            const char* word = (e.kind == Expr::Kind::logic_and) ? " and " : " or ";
            render(e.children[0], prec, out);
            out += word;
            render(e.children[1], prec + 1, out);
            break;
        }
        case Expr::Kind::logic_not:
            out += "not ";
            render(e.children[0], prec, out);
            break;
    }
    if (need_parens) out += ')';
}

void collect_refs(const Expr& e, std::set<std::string>& out) {
    if (e.kind == Expr::Kind::field_ref) out.insert(e.str_value);
    for (const Expr& c : e.children) collect_refs(c, out);
}

// Single-sided bound from `int(<f>) OP n` / `n OP int(<f>)`.
struct Bound {
    std::string field;
    bool is_lower = false;
    long long value = 0;
};

std::optional<Bound> as_bound(const Expr& e) {
    if (e.kind != Expr::Kind::cmp) return std::nullopt;
    const Expr* fn = nullptr;
    const Expr* lit = nullptr;
    bool field_on_left = false;
    if (e.children[0].kind == Expr::Kind::fn_int &&
        e.children[1].kind == Expr::Kind::int_lit) {
        fn = &e.children[0];
        lit = &e.children[1];
        field_on_left = true;
    } else if (e.children[1].kind == Expr::Kind::fn_int &&
               e.children[0].kind == Expr::Kind::int_lit) {
        fn = &e.children[1];
        lit = &e.children[0];
    } else {
        return std::nullopt;
    }
    Bound b;
    b.field = fn->children[0].str_value;
    long long n = lit->int_value;
    const std::string& op = e.str_value;
    // Normalize to field-on-left form.
    std::string norm = op;
    if (!field_on_left) {
        if (op == "<") norm = ">";
        else if (op == "<=") norm = ">=";
        else if (op == ">") norm = "<";
        else if (op == ">=") norm = "<=";
    }
    if (norm == ">=") { b.is_lower = true; b.value = n; }
    else if (norm == ">") { b.is_lower = true; b.value = n + 1; }
    else if (norm == "<=") { b.is_lower = false; b.value = n; }
    else if (norm == "<") { b.is_lower = false; b.value = n - 1; }
    else return std::nullopt;
    return b;
}

}  // namespace

bool Expr::operator==(const Expr& o) const {
    return kind == o.kind && int_value == o.int_value && str_value == o.str_value &&
           children == o.children;
}

Expr parse_constraint(const std::string& text) { return Parser(text).parse(); }

std::string to_string(const Expr& e) {
    std::string out;
    render(e, 0, out);
    return out;
}

std::set<std::string> field_refs(const Expr& e) {
    std::set<std::string> out;
    collect_refs(e, out);
    return out;
}

ConstraintKind kind_of(const Expr& e) {
    return field_refs(e).size() >= 2 ? ConstraintKind::dependent
                                     : ConstraintKind::independent;
}

std::optional<Interval> as_interval(const Expr& e) {
    if (e.kind == Expr::Kind::cmp && e.str_value == "==") {
        // int(<f>) == n (or reversed) is the degenerate range [n, n].
        const Expr* fn = nullptr;
        const Expr* lit = nullptr;
        if (e.children[0].kind == Expr::Kind::fn_int &&
            e.children[1].kind == Expr::Kind::int_lit) {
            fn = &e.children[0];
            lit = &e.children[1];
        } else if (e.children[1].kind == Expr::Kind::fn_int &&
                   e.children[0].kind == Expr::Kind::int_lit) {
            fn = &e.children[1];
            lit = &e.children[0];
        } else {
            return std::nullopt;
        }
        return Interval{fn->children[0].str_value, lit->int_value, lit->int_value};
    }
    if (e.kind != Expr::Kind::logic_and) return std::nullopt;
    auto a = as_bound(e.children[0]);
    auto b = as_bound(e.children[1]);
    if (!a || !b) return std::nullopt;
    if (a->field != b->field) return std::nullopt;
    if (a->is_lower == b->is_lower) return std::nullopt;
    Interval iv;
    iv.field = a->field;
    iv.lo = a->is_lower ? a->value : b->value;
    iv.hi = a->is_lower ? b->value : a->value;
    if (iv.lo > iv.hi) return std::nullopt;
    return iv;
}

std::optional<FieldBounds> as_bounds(const Expr& e) {
    if (e.kind == Expr::Kind::logic_and) {
        auto a = as_bounds(e.children[0]);
        auto b = as_bounds(e.children[1]);
        if (!a || !b || a->field != b->field) return std::nullopt;
        FieldBounds out;
        out.field = a->field;
        out.lo = a->lo;
        if (b->lo && (!out.lo || *b->lo > *out.lo)) out.lo = b->lo;
        out.hi = a->hi;
        if (b->hi && (!out.hi || *b->hi < *out.hi)) out.hi = b->hi;
        return out;
    }
    if (e.kind != Expr::Kind::cmp) return std::nullopt;
    if (e.str_value == "==") {
        const Expr* fn = nullptr;
        const Expr* lit = nullptr;
        if (e.children[0].kind == Expr::Kind::fn_int &&
            e.children[1].kind == Expr::Kind::int_lit) {
            fn = &e.children[0];
            lit = &e.children[1];
        } else if (e.children[1].kind == Expr::Kind::fn_int &&
                   e.children[0].kind == Expr::Kind::int_lit) {
            fn = &e.children[1];
            lit = &e.children[0];
        } else {
            return std::nullopt;
        }
        return FieldBounds{fn->children[0].str_value, lit->int_value, lit->int_value};
    }
    auto b = as_bound(e);
    if (!b) return std::nullopt;
    FieldBounds out;
    out.field = b->field;
    if (b->is_lower) out.lo = b->value;
    else out.hi = b->value;
    return out;
}

std::optional<IntEquality> as_int_equality(const Expr& e) {
    if (e.kind != Expr::Kind::cmp || e.str_value != "==") return std::nullopt;
    if (e.children[0].kind != Expr::Kind::fn_int ||
        e.children[1].kind != Expr::Kind::fn_int) {
        return std::nullopt;
    }
    return IntEquality{e.children[0].children[0].str_value,
                       e.children[1].children[0].str_value};
}

Expr conjoin(const Expr& a, const Expr& b) {
    Expr out;
    out.kind = Expr::Kind::logic_and;
    out.children.push_back(a);
    out.children.push_back(b);
    return out;
}

}  // namespace specforge::constraint
