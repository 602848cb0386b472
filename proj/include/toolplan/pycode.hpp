#pragma once

// A small parser for the generated-code dialect (a practical subset of
// Python 3). It covers what planner output and pseudo-function definitions
// actually use: simple and compound statements, call expressions with
// keyword arguments, literal displays, comprehensions, attribute and
// subscript trailers. The parser backs three consumers: syntactic call
// extraction, canonical argument printing, and definition-header analysis.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace toolplan::pycode {

struct ParseError : std::runtime_error {
    int line;
    int col;
    ParseError(std::string const & msg, int line_, int col_)
    : std::runtime_error(msg + " at line " + std::to_string(line_) + ", column "
                         + std::to_string(col_)),
      line(line_),
      col(col_)
    {}
};

// ---------------------------------------------------------------------------
// Tokenizer

enum class TokKind { Name, Keyword, Number, Str, Op, Newline, End };

struct Token {
    TokKind kind = TokKind::End;
    std::string text;      // raw source text
    std::string value;     // decoded value for plain string literals
    bool plain_string = false;  // no prefix or escape trouble; value is valid
    int line = 1;
    int col = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
};

namespace detail {

inline std::unordered_set<std::string> const & keywords()
{
    static std::unordered_set<std::string> const kw = {
        "False", "None", "True", "and", "as", "assert", "async", "await",
        "break", "class", "continue", "def", "del", "elif", "else", "except",
        "finally", "for", "from", "global", "if", "import", "in", "is",
        "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try",
        "while", "with", "yield"};
    return kw;
}

inline bool ident_start(char c)
{
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

inline bool ident_cont(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

}  // namespace detail

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> tokenize()
    {
        std::vector<Token> out;
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
                continue;
            }
            if (c == '\\' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n') {
                pos_ += 2;
                ++line_;
                line_start_ = pos_;
                continue;
            }
            if (c == '\n') {
                if (depth_ == 0 && !out.empty()
                    && out.back().kind != TokKind::Newline) {
                    out.push_back(make(TokKind::Newline, pos_, pos_ + 1));
                }
                ++pos_;
                ++line_;
                line_start_ = pos_;
                continue;
            }
            if (c == ' ' || c == '\t' || c == '\r' || c == '\f') {
                ++pos_;
                continue;
            }
            if (detail::ident_start(c)) {
                std::size_t b = pos_;
                while (pos_ < src_.size() && detail::ident_cont(src_[pos_]))
                    ++pos_;
                std::string text(src_.substr(b, pos_ - b));
                // string prefix?
                if (pos_ < src_.size()
                    && (src_[pos_] == '\'' || src_[pos_] == '"')
                    && text.size() <= 2 && is_string_prefix(text)) {
                    out.push_back(lex_string(b, text));
                    continue;
                }
                Token t = make(detail::keywords().count(text) ? TokKind::Keyword
                                                              : TokKind::Name,
                               b, pos_);
                t.text = std::move(text);
                out.push_back(std::move(t));
                continue;
            }
            if (std::isdigit(static_cast<unsigned char>(c))
                || (c == '.' && pos_ + 1 < src_.size()
                    && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
                out.push_back(lex_number());
                continue;
            }
            if (c == '\'' || c == '"') {
                out.push_back(lex_string(pos_, ""));
                continue;
            }
            out.push_back(lex_operator());
        }
        if (!out.empty() && out.back().kind != TokKind::Newline)
            out.push_back(make(TokKind::Newline, pos_, pos_));
        out.push_back(make(TokKind::End, pos_, pos_));
        return out;
    }

private:
    static bool is_string_prefix(std::string const & s)
    {
        for (char c : s) {
            char l = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            if (l != 'r' && l != 'b' && l != 'f' && l != 'u') return false;
        }
        return true;
    }

    Token make(TokKind kind, std::size_t b, std::size_t e) const
    {
        Token t;
        t.kind = kind;
        t.text = std::string(src_.substr(b, e - b));
        t.line = line_;
        t.col = static_cast<int>(b - line_start_);
        t.begin = b;
        t.end = e;
        return t;
    }

    Token lex_number()
    {
        std::size_t b = pos_;
        if (src_[pos_] == '0' && pos_ + 1 < src_.size()
            && std::strchr("xXoObB", src_[pos_ + 1])) {
            pos_ += 2;
            while (pos_ < src_.size()
                   && (std::isalnum(static_cast<unsigned char>(src_[pos_]))
                       || src_[pos_] == '_'))
                ++pos_;
        } else {
            while (pos_ < src_.size()
                   && (std::isdigit(static_cast<unsigned char>(src_[pos_]))
                       || src_[pos_] == '_'))
                ++pos_;
            if (pos_ < src_.size() && src_[pos_] == '.') {
                ++pos_;
                while (pos_ < src_.size()
                       && (std::isdigit(static_cast<unsigned char>(src_[pos_]))
                           || src_[pos_] == '_'))
                    ++pos_;
            }
            if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
                std::size_t save = pos_;
                ++pos_;
                if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-'))
                    ++pos_;
                if (pos_ < src_.size()
                    && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                    while (pos_ < src_.size()
                           && std::isdigit(static_cast<unsigned char>(src_[pos_])))
                        ++pos_;
                } else {
                    pos_ = save;
                }
            }
            if (pos_ < src_.size() && (src_[pos_] == 'j' || src_[pos_] == 'J'))
                ++pos_;
        }
        return make(TokKind::Number, b, pos_);
    }

    Token lex_string(std::size_t token_begin, std::string const & prefix)
    {
        bool raw = false, plain = prefix.empty();
        for (char c : prefix) {
            char l = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            if (l == 'r') raw = true;
            if (l == 'u') plain = true;  // u'' decodes like a plain string
        }
        char quote = src_[pos_];
        bool triple = src_.substr(pos_, 3) == std::string(3, quote);
        std::size_t qlen = triple ? 3 : 1;
        pos_ += qlen;
        std::string value;
        bool decoded_ok = true;
        while (pos_ < src_.size()) {
            if (!triple && src_[pos_] == '\n') {
                throw ParseError("unterminated string literal", line_,
                                 static_cast<int>(pos_ - line_start_));
            }
            if (src_[pos_] == '\\' && !raw && pos_ + 1 < src_.size()) {
                char e = src_[pos_ + 1];
                switch (e) {
                    case 'n': value += '\n'; break;
                    case 't': value += '\t'; break;
                    case 'r': value += '\r'; break;
                    case '\\': value += '\\'; break;
                    case '\'': value += '\''; break;
                    case '"': value += '"'; break;
                    case '0': value += '\0'; break;
                    case '\n': ++line_; break;  // line continuation
                    default:
                        value += '\\';
                        value += e;
                        decoded_ok = false;
                        break;
                }
                pos_ += 2;
                continue;
            }
            if (src_[pos_] == '\\' && raw && pos_ + 1 < src_.size()) {
                value += src_[pos_];
                value += src_[pos_ + 1];
                pos_ += 2;
                continue;
            }
            if (src_.substr(pos_, qlen) == std::string(qlen, quote)) {
                pos_ += qlen;
                Token t = make(TokKind::Str, token_begin, pos_);
                t.value = std::move(value);
                t.plain_string = plain && decoded_ok;
                return t;
            }
            if (src_[pos_] == '\n') {
                ++line_;
                line_start_ = pos_ + 1;
            }
            value += src_[pos_];
            ++pos_;
        }
        throw ParseError("unterminated string literal", line_,
                         static_cast<int>(token_begin - line_start_));
    }

    Token lex_operator()
    {
        static char const * const three[] = {"**=", "//=", ">>=", "<<=", "..."};
        static char const * const two[] = {"**", "//", ">>", "<<", "<=", ">=",
                                           "==", "!=", "->", ":=", "+=", "-=",
                                           "*=", "/=", "%=", "@=", "&=", "|=",
                                           "^="};
        for (auto op : three) {
            if (src_.substr(pos_, 3) == op) {
                Token t = make(TokKind::Op, pos_, pos_ + 3);
                update_depth(op[0]);
                pos_ += 3;
                return t;
            }
        }
        for (auto op : two) {
            if (src_.substr(pos_, 2) == op) {
                Token t = make(TokKind::Op, pos_, pos_ + 2);
                pos_ += 2;
                return t;
            }
        }
        char c = src_[pos_];
        if (!std::strchr("+-*/%@<>=&|^~()[]{},:.;", c)) {
            throw ParseError(std::string("unexpected character '") + c + "'",
                             line_, static_cast<int>(pos_ - line_start_));
        }
        Token t = make(TokKind::Op, pos_, pos_ + 1);
        update_depth(c);
        ++pos_;
        return t;
    }

    void update_depth(char c)
    {
        if (c == '(' || c == '[' || c == '{') ++depth_;
        if (c == ')' || c == ']' || c == '}') depth_ = std::max(0, depth_ - 1);
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t line_start_ = 0;
    int line_ = 1;
    int depth_ = 0;
};

// ---------------------------------------------------------------------------
// Expression tree

enum class ExprKind {
    Name,
    Number,
    Str,        // plain literal; text holds the decoded value
    Bool,
    None,
    Paren,      // explicit parenthesization, one child
    List,
    Tuple,
    Set,
    Dict,       // children alternate key, value
    Call,       // children[0] = callee, rest = arguments; strs = kwarg names
    Attribute,  // children[0].text
    Subscript,  // children[0] [ children[1] ]
    Unary,      // text = operator
    Binary,     // text = operator
    BoolOp,     // text = "and" | "or"
    Compare,    // strs = operators between children
    Ternary,    // value if cond else other
    Star,       // text = "*" | "**"
    Raw         // printed from the source span verbatim
};

struct Expr {
    ExprKind kind = ExprKind::Raw;
    std::string text;
    std::vector<std::string> strs;
    std::vector<Expr> children;
    int line = 1;
    int col = 0;
    std::size_t span_begin = 0;
    std::size_t span_end = 0;
};

// ---------------------------------------------------------------------------
// Statements

enum class StmtKind {
    Expression,  // exprs = the expression(s)
    Assign,      // targets + value exprs; `name_binding` set for `x = ...`
    AugAssign,
    Return,      // exprs = returned value, if any
    Def,         // header captured in `def_header`
    Import,      // strs = names introduced into scope
    Compound,    // if/while/for/with/except header; exprs = embedded exprs
    Other        // pass, break, class header, ...
};

struct Param {
    std::string name;
    std::string annotation;     // canonical text, empty if absent
    std::string default_value;  // canonical text, empty if absent
    std::string prefix;         // "", "*", or "**"
};

struct DefHeader {
    std::string name;
    std::vector<Param> params;
    std::string return_annotation;
    int line = 1;
    int col = 0;
};

struct Statement {
    StmtKind kind = StmtKind::Other;
    std::vector<Expr> exprs;          // embedded expressions, source order
    std::vector<std::string> strs;    // import names / aug operator
    std::string name_binding;         // Assign to a single plain name
    std::optional<DefHeader> def_header;
    int line = 1;
    int col = 0;  // indentation column of the first token
};

// ---------------------------------------------------------------------------
// Canonical printing
//
// Canonical form: single-quoted strings, keyword arguments sorted
// lexicographically after positionals, numeric literals unchanged,
// ", " element separator, single spaces around binary operators.
// Parentheses from the source are preserved, so printing is
// semantics-preserving and idempotent.

inline std::string quote_single(std::string_view s)
{
    std::string out = "'";
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\'': out += "\\'"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    static char const * hex = "0123456789abcdef";
                    out += "\\x";
                    out += hex[(c >> 4) & 0xf];
                    out += hex[c & 0xf];
                } else {
                    out += c;
                }
        }
    }
    out += '\'';
    return out;
}

class Parser {
public:
    explicit Parser(std::string_view src)
    : src_(src), tokens_(Lexer(src).tokenize())
    {}

    // Parses the whole module body, flattening nested blocks.
    std::vector<Statement> parse_module()
    {
        std::vector<Statement> out;
        while (!at_end()) {
            if (peek().kind == TokKind::Newline) {
                advance();
                continue;
            }
            parse_statement(out);
        }
        return out;
    }

    // Parses a single expression spanning the whole input.
    Expr parse_single_expression()
    {
        Expr e = parse_testlist();
        if (peek().kind == TokKind::Newline) advance();
        if (!at_end())
            throw ParseError("trailing input after expression", peek().line,
                             peek().col);
        return e;
    }

    std::string_view source() const { return src_; }

private:
    Token const & peek(std::size_t ahead = 0) const
    {
        std::size_t i = std::min(pos_ + ahead, tokens_.size() - 1);
        return tokens_[i];
    }

    Token const & advance() { return tokens_[std::min(pos_++, tokens_.size() - 1)]; }

    bool at_end() const { return peek().kind == TokKind::End; }

    bool at_op(std::string_view op) const
    {
        return peek().kind == TokKind::Op && peek().text == op;
    }

    bool at_keyword(std::string_view kw) const
    {
        return peek().kind == TokKind::Keyword && peek().text == kw;
    }

    void expect_op(std::string_view op)
    {
        if (!at_op(op))
            throw ParseError("expected '" + std::string(op) + "'", peek().line,
                             peek().col);
        advance();
    }

    void skip_to_newline()
    {
        while (!at_end() && peek().kind != TokKind::Newline) advance();
        if (peek().kind == TokKind::Newline) advance();
    }

    // ---- statements -------------------------------------------------------

    void parse_statement(std::vector<Statement> & out)
    {
        Token const & first = peek();
        Statement st;
        st.line = first.line;
        st.col = first.col;

        if (first.kind == TokKind::Keyword) {
            std::string const & kw = first.text;
            if (kw == "def" || (kw == "async" && peek(1).text == "def")) {
                if (kw == "async") advance();
                st.kind = StmtKind::Def;
                st.def_header = parse_def_header(st);
                end_simple_statement();
                out.push_back(std::move(st));
                return;
            }
            if (kw == "if" || kw == "elif" || kw == "while") {
                advance();
                st.kind = StmtKind::Compound;
                st.exprs.push_back(parse_testlist());
                expect_op(":");
                out.push_back(std::move(st));
                return;  // trailing simple statement parses as the next one
            }
            if (kw == "for") {
                advance();
                st.kind = StmtKind::Compound;
                st.exprs.push_back(parse_target_list());
                if (!at_keyword("in"))
                    throw ParseError("expected 'in'", peek().line, peek().col);
                advance();
                st.exprs.push_back(parse_testlist());
                expect_op(":");
                out.push_back(std::move(st));
                return;
            }
            if (kw == "with") {
                advance();
                st.kind = StmtKind::Compound;
                while (true) {
                    st.exprs.push_back(parse_test());
                    if (at_keyword("as")) {
                        advance();
                        st.exprs.push_back(parse_test());
                    }
                    if (at_op(",")) {
                        advance();
                        continue;
                    }
                    break;
                }
                expect_op(":");
                out.push_back(std::move(st));
                return;
            }
            if (kw == "except") {
                advance();
                st.kind = StmtKind::Compound;
                if (!at_op(":")) {
                    st.exprs.push_back(parse_test());
                    if (at_keyword("as")) {
                        advance();
                        advance();  // bound name
                    }
                }
                expect_op(":");
                out.push_back(std::move(st));
                return;
            }
            if (kw == "else" || kw == "try" || kw == "finally") {
                advance();
                expect_op(":");
                st.kind = StmtKind::Compound;
                out.push_back(std::move(st));
                return;
            }
            if (kw == "return" || kw == "yield") {
                advance();
                st.kind = kw == "return" ? StmtKind::Return : StmtKind::Expression;
                if (peek().kind != TokKind::Newline && !at_op(";") && !at_end())
                    st.exprs.push_back(parse_testlist());
                end_simple_statement();
                out.push_back(std::move(st));
                return;
            }
            if (kw == "del" || kw == "assert" || kw == "raise") {
                advance();
                st.kind = StmtKind::Expression;
                if (peek().kind != TokKind::Newline && !at_end()) {
                    st.exprs.push_back(parse_testlist());
                    if (at_op(",")) {  // assert expr, message
                        advance();
                        st.exprs.push_back(parse_testlist());
                    }
                    if (at_keyword("from")) {  // raise e from cause
                        advance();
                        st.exprs.push_back(parse_test());
                    }
                }
                end_simple_statement();
                out.push_back(std::move(st));
                return;
            }
            if (kw == "import") {
                advance();
                st.kind = StmtKind::Import;
                parse_import_names(st, /*from_form=*/false);
                out.push_back(std::move(st));
                return;
            }
            if (kw == "from") {
                advance();
                // dotted module path
                while (peek().kind == TokKind::Name || at_op(".")) advance();
                if (!at_keyword("import"))
                    throw ParseError("expected 'import'", peek().line, peek().col);
                advance();
                st.kind = StmtKind::Import;
                if (at_op("*")) {
                    advance();
                    st.strs.push_back("*");
                    end_simple_statement();
                } else {
                    bool parens = at_op("(");
                    if (parens) advance();
                    parse_import_names(st, /*from_form=*/true);
                    if (parens && at_op(")")) advance();
                }
                out.push_back(std::move(st));
                return;
            }
            if (kw == "class") {
                advance();
                st.kind = StmtKind::Other;
                if (peek().kind == TokKind::Name) advance();
                if (at_op("(")) {
                    advance();
                    while (!at_op(")") && !at_end()) {
                        st.exprs.push_back(parse_test());
                        if (at_op(",")) advance();
                    }
                    expect_op(")");
                }
                expect_op(":");
                out.push_back(std::move(st));
                return;
            }
            if (kw == "pass" || kw == "break" || kw == "continue"
                || kw == "global" || kw == "nonlocal") {
                st.kind = StmtKind::Other;
                skip_to_newline();
                out.push_back(std::move(st));
                return;
            }
        }

        // simple statement: expression / assignment / augmented assignment
        Expr lhs = parse_testlist();
        if (at_op("=")) {
            st.kind = StmtKind::Assign;
            std::vector<Expr> groups{std::move(lhs)};
            while (at_op("=")) {
                advance();
                groups.push_back(parse_testlist());
            }
            if (groups.front().kind == ExprKind::Name)
                st.name_binding = groups.front().text;
            st.exprs = std::move(groups);  // last element is the value
            end_simple_statement();
            out.push_back(std::move(st));
            return;
        }
        if (peek().kind == TokKind::Op && peek().text.size() >= 2
            && peek().text.back() == '='
            && std::strchr("+-*/%@&|^", peek().text[0])) {
            st.kind = StmtKind::AugAssign;
            st.strs.push_back(peek().text);
            advance();
            st.exprs.push_back(std::move(lhs));
            st.exprs.push_back(parse_testlist());
            end_simple_statement();
            out.push_back(std::move(st));
            return;
        }
        st.kind = StmtKind::Expression;
        st.exprs.push_back(std::move(lhs));
        end_simple_statement();
        out.push_back(std::move(st));
    }

    void end_simple_statement()
    {
        if (at_op(";")) {
            advance();
            return;  // next statement continues on the line
        }
        if (peek().kind == TokKind::Newline) {
            advance();
            return;
        }
        if (!at_end())
            throw ParseError("unexpected token '" + peek().text + "'",
                             peek().line, peek().col);
    }

    void parse_import_names(Statement & st, bool from_form)
    {
        while (true) {
            if (peek().kind != TokKind::Name)
                throw ParseError("expected module name", peek().line, peek().col);
            std::string name = advance().text;
            if (!from_form) {
                while (at_op(".")) {  // dotted module: binds the root name
                    advance();
                    if (peek().kind == TokKind::Name) advance();
                }
            }
            if (at_keyword("as")) {
                advance();
                if (peek().kind != TokKind::Name)
                    throw ParseError("expected alias name", peek().line,
                                     peek().col);
                name = advance().text;
            }
            st.strs.push_back(std::move(name));
            if (at_op(",")) {
                advance();
                if (peek().kind == TokKind::Newline) break;  // trailing comma
                continue;
            }
            break;
        }
        if (peek().kind == TokKind::Newline) advance();
    }

    DefHeader parse_def_header(Statement & st)
    {
        DefHeader header;
        header.line = peek().line;
        header.col = peek().col;
        advance();  // 'def'
        if (peek().kind != TokKind::Name)
            throw ParseError("expected function name", peek().line, peek().col);
        header.name = advance().text;
        expect_op("(");
        while (!at_op(")")) {
            Param param;
            if (at_op("*") || at_op("**")) {
                param.prefix = advance().text;
                if (at_op(",") || at_op(")")) {  // bare '*' separator
                    if (at_op(",")) advance();
                    continue;
                }
            } else if (at_op("/")) {
                advance();
                if (at_op(",")) advance();
                continue;
            }
            if (peek().kind != TokKind::Name)
                throw ParseError("expected parameter name", peek().line,
                                 peek().col);
            param.name = advance().text;
            if (at_op(":")) {
                advance();
                Expr ann = parse_test();
                param.annotation = print_expr(ann);
                st.exprs.push_back(std::move(ann));
            }
            if (at_op("=")) {
                advance();
                Expr def = parse_test();
                param.default_value = print_expr(def);
                st.exprs.push_back(std::move(def));
            }
            header.params.push_back(std::move(param));
            if (at_op(",")) advance();
        }
        expect_op(")");
        if (at_op("->")) {
            advance();
            Expr ret = parse_test();
            header.return_annotation = print_expr(ret);
            st.exprs.push_back(std::move(ret));
        }
        expect_op(":");
        return header;
    }

    // ---- expressions ------------------------------------------------------

    Expr begin_expr(ExprKind kind) const
    {
        Expr e;
        e.kind = kind;
        e.line = peek().line;
        e.col = peek().col;
        e.span_begin = peek().begin;
        return e;
    }

    void close_expr(Expr & e) const
    {
        e.span_end = pos_ > 0 ? tokens_[pos_ - 1].end : e.span_begin;
    }

    Expr raw_since(std::size_t span_begin, int line, int col)
    {
        Expr e;
        e.kind = ExprKind::Raw;
        e.line = line;
        e.col = col;
        e.span_begin = span_begin;
        e.span_end = pos_ > 0 ? tokens_[pos_ - 1].end : span_begin;
        e.text = std::string(src_.substr(e.span_begin, e.span_end - e.span_begin));
        return e;
    }

    // testlist: test (',' test)* — a naked tuple when a comma appears
    // Assignment targets of a 'for' clause: the 'in' that follows belongs to
    // the loop header, not to a containment comparison.
    Expr parse_target_list()
    {
        bool saved = forbid_in_;
        forbid_in_ = true;
        Expr targets = parse_testlist();
        forbid_in_ = saved;
        return targets;
    }

    Expr parse_testlist()
    {
        Expr first = parse_test();
        if (!at_op(",")) return first;
        Expr tuple = first;  // adopt position of first element
        Expr container;
        container.kind = ExprKind::Tuple;
        container.line = first.line;
        container.col = first.col;
        container.span_begin = first.span_begin;
        container.text = "naked";
        container.children.push_back(std::move(first));
        while (at_op(",")) {
            advance();
            if (peek().kind == TokKind::Newline || at_op("=") || at_op(":")
                || at_op(")") || at_op("]") || at_op("}") || at_end()
                || at_keyword("in"))
                break;
            container.children.push_back(parse_test());
        }
        close_expr(container);
        return container;
    }

    Expr parse_test()
    {
        if (at_keyword("lambda")) {
            std::size_t b = peek().begin;
            int line = peek().line, col = peek().col;
            advance();
            while (!at_op(":") && !at_end()) advance();  // parameter list
            expect_op(":");
            Expr body = parse_test();
            (void)body;
            return raw_since(b, line, col);
        }
        Expr cond = parse_or();
        if (at_keyword("if")) {
            Expr ternary = begin_expr(ExprKind::Ternary);
            ternary.line = cond.line;
            ternary.col = cond.col;
            ternary.span_begin = cond.span_begin;
            advance();
            Expr test = parse_or();
            if (!at_keyword("else"))
                throw ParseError("expected 'else'", peek().line, peek().col);
            advance();
            Expr other = parse_test();
            ternary.children = {std::move(cond), std::move(test),
                                std::move(other)};
            close_expr(ternary);
            return ternary;
        }
        return cond;
    }

    Expr parse_or() { return parse_boolop("or", &Parser::parse_and); }
    Expr parse_and() { return parse_boolop("and", &Parser::parse_not); }

    Expr parse_boolop(char const * op, Expr (Parser::*next)())
    {
        Expr lhs = (this->*next)();
        if (!at_keyword(op)) return lhs;
        Expr node;
        node.kind = ExprKind::BoolOp;
        node.text = op;
        node.line = lhs.line;
        node.col = lhs.col;
        node.span_begin = lhs.span_begin;
        node.children.push_back(std::move(lhs));
        while (at_keyword(op)) {
            advance();
            node.children.push_back((this->*next)());
        }
        close_expr(node);
        return node;
    }

    Expr parse_not()
    {
        if (at_keyword("not")) {
            Expr node = begin_expr(ExprKind::Unary);
            node.text = "not";
            advance();
            node.children.push_back(parse_not());
            close_expr(node);
            return node;
        }
        return parse_comparison();
    }

    Expr parse_comparison()
    {
        Expr lhs = parse_bitor();
        std::vector<std::string> ops;
        std::vector<Expr> operands;
        while (true) {
            std::string op;
            if (at_op("<") || at_op(">") || at_op("<=") || at_op(">=")
                || at_op("==") || at_op("!=")) {
                op = advance().text;
            } else if (at_keyword("in")) {
                if (forbid_in_) break;
                advance();
                op = "in";
            } else if (at_keyword("not") && peek(1).text == "in") {
                advance();
                advance();
                op = "not in";
            } else if (at_keyword("is")) {
                advance();
                op = "is";
                if (at_keyword("not")) {
                    advance();
                    op = "is not";
                }
            } else {
                break;
            }
            ops.push_back(std::move(op));
            operands.push_back(parse_bitor());
        }
        if (ops.empty()) return lhs;
        Expr node;
        node.kind = ExprKind::Compare;
        node.line = lhs.line;
        node.col = lhs.col;
        node.span_begin = lhs.span_begin;
        node.strs = std::move(ops);
        node.children.push_back(std::move(lhs));
        for (auto & e : operands) node.children.push_back(std::move(e));
        close_expr(node);
        return node;
    }

    Expr parse_binary(std::vector<std::string_view> ops, Expr (Parser::*next)())
    {
        Expr lhs = (this->*next)();
        while (true) {
            bool matched = false;
            for (auto op : ops) {
                if (at_op(op)) {
                    Expr node;
                    node.kind = ExprKind::Binary;
                    node.text = std::string(op);
                    node.line = lhs.line;
                    node.col = lhs.col;
                    node.span_begin = lhs.span_begin;
                    advance();
                    Expr rhs = (this->*next)();
                    node.children = {std::move(lhs), std::move(rhs)};
                    close_expr(node);
                    lhs = std::move(node);
                    matched = true;
                    break;
                }
            }
            if (!matched) return lhs;
        }
    }

    Expr parse_bitor() { return parse_binary({"|"}, &Parser::parse_bitxor); }
    Expr parse_bitxor() { return parse_binary({"^"}, &Parser::parse_bitand); }
    Expr parse_bitand() { return parse_binary({"&"}, &Parser::parse_shift); }
    Expr parse_shift() { return parse_binary({"<<", ">>"}, &Parser::parse_arith); }
    Expr parse_arith() { return parse_binary({"+", "-"}, &Parser::parse_term); }
    Expr parse_term()
    {
        return parse_binary({"*", "/", "//", "%", "@"}, &Parser::parse_factor);
    }

    Expr parse_factor()
    {
        if (at_op("+") || at_op("-") || at_op("~")) {
            Expr node = begin_expr(ExprKind::Unary);
            node.text = advance().text;
            node.children.push_back(parse_factor());
            close_expr(node);
            return node;
        }
        return parse_power();
    }

    Expr parse_power()
    {
        Expr base = parse_postfix();
        if (at_op("**")) {
            Expr node;
            node.kind = ExprKind::Binary;
            node.text = "**";
            node.line = base.line;
            node.col = base.col;
            node.span_begin = base.span_begin;
            advance();
            Expr exp = parse_factor();
            node.children = {std::move(base), std::move(exp)};
            close_expr(node);
            return node;
        }
        return base;
    }

    Expr parse_postfix()
    {
        if (at_keyword("await")) {
            Expr node = begin_expr(ExprKind::Unary);
            node.text = "await";
            advance();
            node.children.push_back(parse_postfix());
            close_expr(node);
            return node;
        }
        Expr expr = parse_atom();
        while (true) {
            if (at_op("(")) {
                Expr call;
                call.kind = ExprKind::Call;
                call.line = expr.line;
                call.col = expr.col;
                call.span_begin = expr.span_begin;
                call.children.push_back(std::move(expr));
                advance();
                parse_call_arguments(call);
                expect_op(")");
                close_expr(call);
                expr = std::move(call);
                continue;
            }
            if (at_op("[")) {
                Expr sub;
                sub.kind = ExprKind::Subscript;
                sub.line = expr.line;
                sub.col = expr.col;
                sub.span_begin = expr.span_begin;
                sub.children.push_back(std::move(expr));
                advance();
                sub.children.push_back(parse_subscript_inner());
                expect_op("]");
                close_expr(sub);
                expr = std::move(sub);
                continue;
            }
            if (at_op(".")) {
                Expr attr;
                attr.kind = ExprKind::Attribute;
                attr.line = expr.line;
                attr.col = expr.col;
                attr.span_begin = expr.span_begin;
                advance();
                if (peek().kind != TokKind::Name)
                    throw ParseError("expected attribute name", peek().line,
                                     peek().col);
                attr.text = advance().text;
                attr.children.push_back(std::move(expr));
                close_expr(attr);
                expr = std::move(attr);
                continue;
            }
            break;
        }
        return expr;
    }

    void parse_call_arguments(Expr & call)
    {
        while (!at_op(")") && !at_end()) {
            if (at_op("*") || at_op("**")) {
                Expr star = begin_expr(ExprKind::Star);
                star.text = advance().text;
                star.children.push_back(parse_test());
                close_expr(star);
                call.strs.emplace_back();
                call.children.push_back(std::move(star));
            } else if (peek().kind == TokKind::Name && peek(1).kind == TokKind::Op
                       && peek(1).text == "="
                       && !(peek(2).kind == TokKind::Op && peek(2).text == "=")) {
                std::string name = advance().text;
                advance();  // '='
                call.strs.push_back(std::move(name));
                call.children.push_back(parse_test());
            } else {
                std::size_t arg_begin = peek().begin;
                int line = peek().line, col = peek().col;
                Expr value = parse_test();
                if (at_keyword("for") || at_keyword("async")) {
                    // bare generator expression argument
                    skip_comprehension_clauses(call);
                    value = raw_since(arg_begin, line, col);
                }
                call.strs.emplace_back();
                call.children.push_back(std::move(value));
            }
            if (at_op(",")) advance();
        }
    }

    void skip_comprehension_clauses(Expr & parent)
    {
        while (at_keyword("for") || at_keyword("async") || at_keyword("if")) {
            if (at_keyword("async")) advance();
            if (at_keyword("for")) {
                advance();
                parse_target_list();
                if (!at_keyword("in"))
                    throw ParseError("expected 'in'", peek().line, peek().col);
                advance();
                parent.children.push_back(parse_or());
            } else {  // if
                advance();
                parent.children.push_back(parse_or());
            }
        }
    }

    Expr parse_subscript_inner()
    {
        std::size_t b = peek().begin;
        int line = peek().line, col = peek().col;
        bool slice = false;
        std::vector<Expr> parts;
        while (!at_op("]") && !at_end()) {
            if (at_op(":")) {
                slice = true;
                advance();
                continue;
            }
            if (at_op(",")) {
                advance();
                continue;
            }
            parts.push_back(parse_test());
        }
        if (!slice && parts.size() == 1) return std::move(parts.front());
        Expr raw = raw_since(b, line, col);
        raw.children = std::move(parts);  // keep operands visitable
        return raw;
    }

    Expr parse_atom()
    {
        Token const & t = peek();
        switch (t.kind) {
            case TokKind::Name: {
                Expr e = begin_expr(ExprKind::Name);
                e.text = advance().text;
                close_expr(e);
                return e;
            }
            case TokKind::Number: {
                Expr e = begin_expr(ExprKind::Number);
                e.text = advance().text;
                close_expr(e);
                return e;
            }
            case TokKind::Str:
                return parse_string_atom();
            case TokKind::Keyword: {
                if (t.text == "True" || t.text == "False") {
                    Expr e = begin_expr(ExprKind::Bool);
                    e.text = advance().text;
                    close_expr(e);
                    return e;
                }
                if (t.text == "None") {
                    Expr e = begin_expr(ExprKind::None);
                    advance();
                    close_expr(e);
                    return e;
                }
                if (t.text == "yield") {
                    std::size_t b = t.begin;
                    int line = t.line, col = t.col;
                    advance();
                    if (at_keyword("from")) advance();
                    if (peek().kind != TokKind::Newline && !at_op(")"))
                        parse_testlist();
                    return raw_since(b, line, col);
                }
                break;
            }
            case TokKind::Op:
                if (t.text == "(") return parse_paren_or_tuple();
                if (t.text == "[") return parse_list_display();
                if (t.text == "{") return parse_dict_or_set();
                if (t.text == "*" || t.text == "**") {
                    Expr star = begin_expr(ExprKind::Star);
                    star.text = advance().text;
                    star.children.push_back(parse_test());
                    close_expr(star);
                    return star;
                }
                if (t.text == "...") {
                    advance();
                    Expr e;
                    e.kind = ExprKind::Raw;
                    e.text = "...";
                    e.line = t.line;
                    e.col = t.col;
                    e.span_begin = t.begin;
                    e.span_end = t.end;
                    return e;
                }
                break;
            default:
                break;
        }
        throw ParseError("unexpected token '" + t.text + "'", t.line, t.col);
    }

    Expr parse_string_atom()
    {
        Expr e = begin_expr(ExprKind::Str);
        bool plain = true;
        std::string value;
        std::size_t b = peek().begin;
        while (peek().kind == TokKind::Str) {
            Token const & tok = advance();
            plain = plain && tok.plain_string;
            value += tok.value;
        }
        if (!plain) {
            Expr raw;
            raw.kind = ExprKind::Raw;
            raw.line = e.line;
            raw.col = e.col;
            raw.span_begin = b;
            raw.span_end = tokens_[pos_ - 1].end;
            raw.text = std::string(src_.substr(b, raw.span_end - b));
            return raw;
        }
        e.text = std::move(value);
        close_expr(e);
        return e;
    }

    Expr parse_paren_or_tuple()
    {
        Expr e = begin_expr(ExprKind::Paren);
        std::size_t b = peek().begin;
        int line = peek().line, col = peek().col;
        advance();  // '('
        if (at_op(")")) {
            advance();
            e.kind = ExprKind::Tuple;
            close_expr(e);
            return e;
        }
        Expr first = parse_walrus();
        if (at_keyword("for") || at_keyword("async")) {
            Expr comp;
            comp.kind = ExprKind::Raw;
            comp.children.push_back(std::move(first));
            skip_comprehension_clauses(comp);
            expect_op(")");
            Expr raw = raw_since(b, line, col);
            raw.children = std::move(comp.children);
            return raw;
        }
        if (at_op(",")) {
            e.kind = ExprKind::Tuple;
            e.children.push_back(std::move(first));
            while (at_op(",")) {
                advance();
                if (at_op(")")) break;
                e.children.push_back(parse_test());
            }
            expect_op(")");
            close_expr(e);
            return e;
        }
        expect_op(")");
        e.children.push_back(std::move(first));
        close_expr(e);
        return e;
    }

    Expr parse_walrus()
    {
        Expr lhs = parse_test();
        if (at_op(":=")) {
            Expr node;
            node.kind = ExprKind::Binary;
            node.text = ":=";
            node.line = lhs.line;
            node.col = lhs.col;
            node.span_begin = lhs.span_begin;
            advance();
            Expr rhs = parse_test();
            node.children = {std::move(lhs), std::move(rhs)};
            close_expr(node);
            return node;
        }
        return lhs;
    }

    Expr parse_list_display()
    {
        Expr e = begin_expr(ExprKind::List);
        std::size_t b = peek().begin;
        int line = peek().line, col = peek().col;
        advance();  // '['
        if (at_op("]")) {
            advance();
            close_expr(e);
            return e;
        }
        Expr first = parse_test();
        if (at_keyword("for") || at_keyword("async")) {
            Expr comp;
            comp.children.push_back(std::move(first));
            skip_comprehension_clauses(comp);
            expect_op("]");
            Expr raw = raw_since(b, line, col);
            raw.children = std::move(comp.children);
            return raw;
        }
        e.children.push_back(std::move(first));
        while (at_op(",")) {
            advance();
            if (at_op("]")) break;
            e.children.push_back(parse_test());
        }
        expect_op("]");
        close_expr(e);
        return e;
    }

    Expr parse_dict_or_set()
    {
        Expr e = begin_expr(ExprKind::Dict);
        std::size_t b = peek().begin;
        int line = peek().line, col = peek().col;
        advance();  // '{'
        if (at_op("}")) {
            advance();
            close_expr(e);
            return e;
        }
        if (at_op("**")) {
            Expr star = begin_expr(ExprKind::Star);
            star.text = advance().text;
            star.children.push_back(parse_test());
            close_expr(star);
            e.children.push_back(std::move(star));
            e.children.push_back(Expr{});  // placeholder value slot
            e.children.back().kind = ExprKind::Raw;
        } else {
            Expr first = parse_test();
            if (at_op(":")) {
                advance();
                Expr value = parse_test();
                if (at_keyword("for") || at_keyword("async")) {
                    Expr comp;
                    comp.children.push_back(std::move(first));
                    comp.children.push_back(std::move(value));
                    skip_comprehension_clauses(comp);
                    expect_op("}");
                    Expr raw = raw_since(b, line, col);
                    raw.children = std::move(comp.children);
                    return raw;
                }
                e.children.push_back(std::move(first));
                e.children.push_back(std::move(value));
            } else {
                // set display
                e.kind = ExprKind::Set;
                if (at_keyword("for") || at_keyword("async")) {
                    Expr comp;
                    comp.children.push_back(std::move(first));
                    skip_comprehension_clauses(comp);
                    expect_op("}");
                    Expr raw = raw_since(b, line, col);
                    raw.children = std::move(comp.children);
                    return raw;
                }
                e.children.push_back(std::move(first));
                while (at_op(",")) {
                    advance();
                    if (at_op("}")) break;
                    e.children.push_back(parse_test());
                }
                expect_op("}");
                close_expr(e);
                return e;
            }
        }
        while (at_op(",")) {
            advance();
            if (at_op("}")) break;
            if (at_op("**")) {
                Expr star = begin_expr(ExprKind::Star);
                star.text = advance().text;
                star.children.push_back(parse_test());
                close_expr(star);
                e.children.push_back(std::move(star));
                e.children.push_back(Expr{});
                e.children.back().kind = ExprKind::Raw;
                continue;
            }
            Expr key = parse_test();
            expect_op(":");
            Expr value = parse_test();
            e.children.push_back(std::move(key));
            e.children.push_back(std::move(value));
        }
        expect_op("}");
        close_expr(e);
        return e;
    }

    // canonical printing used while parsing def headers
    std::string print_expr(Expr const & e) const;

    std::string_view src_;
    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    bool forbid_in_ = false;
};

// ---------------------------------------------------------------------------
// Canonical printer. `on_call` (optional) intercepts Call nodes and may
// return replacement text; the call extractor uses it to substitute
// synthetic bindings for nested tool calls.

class Printer {
public:
    using CallHook = std::function<std::optional<std::string>(Expr const &)>;

    explicit Printer(CallHook on_call = nullptr) : on_call_(std::move(on_call)) {}

    std::string print(Expr const & e) const
    {
        switch (e.kind) {
            case ExprKind::Name:
            case ExprKind::Number:
            case ExprKind::Bool:
                return e.text;
            case ExprKind::None:
                return "None";
            case ExprKind::Str:
                return quote_single(e.text);
            case ExprKind::Paren:
                return "(" + print(e.children.front()) + ")";
            case ExprKind::List:
                return "[" + join(e.children) + "]";
            case ExprKind::Set:
                return "{" + join(e.children) + "}";
            case ExprKind::Tuple: {
                std::string inner = join(e.children);
                if (e.children.size() == 1) inner += ",";
                if (e.text == "naked") return inner;
                return "(" + inner + ")";
            }
            case ExprKind::Dict: {
                std::string out = "{";
                for (std::size_t i = 0; i + 1 < e.children.size(); i += 2) {
                    if (i) out += ", ";
                    if (e.children[i].kind == ExprKind::Star) {
                        out += print(e.children[i]);
                        continue;
                    }
                    out += print(e.children[i]) + ": " + print(e.children[i + 1]);
                }
                return out + "}";
            }
            case ExprKind::Call:
                return print_call(e);
            case ExprKind::Attribute:
                return print(e.children.front()) + "." + e.text;
            case ExprKind::Subscript:
                return print(e.children[0]) + "[" + print(e.children[1]) + "]";
            case ExprKind::Unary:
                if (e.text == "not" || e.text == "await")
                    return e.text + " " + print(e.children.front());
                return e.text + print(e.children.front());
            case ExprKind::Binary:
                return print(e.children[0]) + " " + e.text + " "
                       + print(e.children[1]);
            case ExprKind::BoolOp: {
                std::string out = print(e.children.front());
                for (std::size_t i = 1; i < e.children.size(); ++i)
                    out += " " + e.text + " " + print(e.children[i]);
                return out;
            }
            case ExprKind::Compare: {
                std::string out = print(e.children.front());
                for (std::size_t i = 0; i < e.strs.size(); ++i)
                    out += " " + e.strs[i] + " " + print(e.children[i + 1]);
                return out;
            }
            case ExprKind::Ternary:
                return print(e.children[0]) + " if " + print(e.children[1])
                       + " else " + print(e.children[2]);
            case ExprKind::Star:
                return e.text + print(e.children.front());
            case ExprKind::Raw:
                return e.text;
        }
        return e.text;
    }

    std::string print_call(Expr const & e) const
    {
        if (on_call_) {
            if (auto replacement = on_call_(e)) return *replacement;
        }
        std::string out = print(e.children.front()) + "(";
        // positional arguments in source order, then keywords sorted
        std::vector<std::string> positional;
        std::vector<std::pair<std::string, std::string>> keyword;
        for (std::size_t i = 1; i < e.children.size(); ++i) {
            std::string const & name = e.strs[i - 1];
            if (name.empty())
                positional.push_back(print(e.children[i]));
            else
                keyword.emplace_back(name, print(e.children[i]));
        }
        std::stable_sort(keyword.begin(), keyword.end(),
                         [](auto const & a, auto const & b) {
                             return a.first < b.first;
                         });
        bool first = true;
        for (auto const & p : positional) {
            if (!first) out += ", ";
            out += p;
            first = false;
        }
        for (auto const & [name, value] : keyword) {
            if (!first) out += ", ";
            out += name + "=" + value;
            first = false;
        }
        return out + ")";
    }

private:
    std::string join(std::vector<Expr> const & children) const
    {
        std::string out;
        for (std::size_t i = 0; i < children.size(); ++i) {
            if (i) out += ", ";
            out += print(children[i]);
        }
        return out;
    }

    CallHook on_call_;
};

inline std::string Parser::print_expr(Expr const & e) const
{
    return Printer{}.print(e);
}

// ---------------------------------------------------------------------------
// Convenience entry points

inline std::vector<Statement> parse_statements(std::string_view source)
{
    return Parser(source).parse_module();
}

inline Expr parse_expression(std::string_view source)
{
    return Parser(source).parse_single_expression();
}

// Canonical form of an argument text. Unparseable input is returned trimmed,
// so comparisons degrade to raw text instead of failing.
inline std::string canonicalize_argument(std::string_view text)
{
    auto trim = [](std::string_view s) {
        std::size_t b = s.find_first_not_of(" \t\r\n");
        if (b == std::string_view::npos) return std::string{};
        std::size_t e = s.find_last_not_of(" \t\r\n");
        return std::string(s.substr(b, e - b + 1));
    };
    try {
        return Printer{}.print(parse_expression(text));
    } catch (ParseError const &) {
        return trim(text);
    }
}

// Definition headers of every `def` in the source, in order.
// `top_level_only` restricts to column-zero definitions.
inline std::vector<DefHeader> parse_def_headers(std::string_view source,
                                                bool top_level_only = false)
{
    std::vector<DefHeader> out;
    for (auto const & st : parse_statements(source)) {
        if (st.kind != StmtKind::Def) continue;
        if (top_level_only && st.def_header->col != 0) continue;
        out.push_back(*st.def_header);
    }
    return out;
}

// Docstring of the first function definition, decoded; empty if absent.
inline std::string extract_docstring(std::string_view source)
{
    auto statements = parse_statements(source);
    for (std::size_t i = 0; i < statements.size(); ++i) {
        if (statements[i].kind != StmtKind::Def) continue;
        if (i + 1 < statements.size()
            && statements[i + 1].kind == StmtKind::Expression
            && statements[i + 1].exprs.size() == 1
            && statements[i + 1].exprs[0].kind == ExprKind::Str) {
            return statements[i + 1].exprs[0].text;
        }
        break;
    }
    return {};
}

// Canonical text of the first `return` expression after the first `def`.
inline std::string extract_return_repr(std::string_view source)
{
    auto statements = parse_statements(source);
    bool seen_def = false;
    for (auto const & st : statements) {
        if (st.kind == StmtKind::Def) {
            seen_def = true;
            continue;
        }
        if (seen_def && st.kind == StmtKind::Return && !st.exprs.empty())
            return Printer{}.print(st.exprs.front());
    }
    return {};
}

// Names bound by import statements anywhere in the source.
inline std::vector<std::string> imported_names(std::string_view source)
{
    std::vector<std::string> out;
    for (auto const & st : parse_statements(source)) {
        if (st.kind != StmtKind::Import) continue;
        out.insert(out.end(), st.strs.begin(), st.strs.end());
    }
    return out;
}

}  // namespace toolplan::pycode
