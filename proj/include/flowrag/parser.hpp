/// @file parser.hpp
/// @brief Lexer and recursive-descent parser for the workflow DSL.
///
/// Grammar (whitespace between tokens is insignificant):
///
///     program      := statement+
///     statement    := assignment | conditional
///     assignment   := IDENT "=" ["await"] IDENT "." IDENT "(" object ")" ";"
///     conditional  := "if" "(" expr ")" "{" statement+ "}" ["else" "{" statement+ "}"]
///     expr         := and_expr ("||" and_expr)*
///     and_expr     := unary ("&&" unary)*
///     unary        := "!" unary | "(" expr ")" | operand [cmp_op operand]
///     operand      := member | STRING | NUMBER | "true" | "false"
///     member       := IDENT ("." IDENT)*
///     object       := "{" [STRING ":" value ("," STRING ":" value)*] "}"
///     value        := object | "[" [value ("," value)*] "]" | STRING | NUMBER
///                   | "true" | "false" | "null" | member
///
/// Strings and numbers follow JSON lexical rules. The first error aborts the
/// parse; there is no recovery.

#pragma once

#include "flowrag/ast.hpp"

#include <charconv>
#include <optional>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <variant>

namespace flowrag {

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, std::size_t column, std::string expected, std::string found)
        : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                             ": expected " + expected + ", found " + found),
          line_(line), column_(column), expected_(std::move(expected)), found_(std::move(found))
    {
    }

    /// 1-based.
    std::size_t line() const noexcept { return line_; }
    /// 1-based, counted in bytes.
    std::size_t column() const noexcept { return column_; }
    const std::string& expected() const noexcept { return expected_; }
    const std::string& found() const noexcept { return found_; }

private:
    std::size_t line_;
    std::size_t column_;
    std::string expected_;
    std::string found_;
};

namespace detail {

inline constexpr std::size_t kMaxNesting = 200;

inline bool is_ident_start(char c) noexcept
{
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

inline bool is_ident_char(char c) noexcept { return is_ident_start(c) || (c >= '0' && c <= '9'); }

inline bool is_digit(char c) noexcept { return c >= '0' && c <= '9'; }

inline bool is_keyword(std::string_view word) noexcept
{
    return word == "if" || word == "else" || word == "await" || word == "true" ||
           word == "false" || word == "null";
}

enum class TokenKind { Identifier, String, Number, Punct, End };

struct Token {
    TokenKind kind = TokenKind::End;
    std::string text; // identifier, punctuator, raw number text, or decoded string
    double number = 0.0;
    std::size_t line = 1;
    std::size_t column = 1;

    bool is(std::string_view punct) const { return kind == TokenKind::Punct && text == punct; }
    bool is_word(std::string_view word) const { return kind == TokenKind::Identifier && text == word; }
};

inline std::string describe(const Token& token)
{
    switch (token.kind) {
    case TokenKind::End:
        return "end of input";
    case TokenKind::Identifier:
        return "'" + token.text + "'";
    case TokenKind::Number:
        return "number " + token.text;
    case TokenKind::Punct:
        return "'" + token.text + "'";
    case TokenKind::String: {
        std::string shown = token.text.size() > 32 ? token.text.substr(0, 32) + "..." : token.text;
        return "string \"" + shown + "\"";
    }
    }
    return "token";
}

inline void append_utf8(std::string& out, std::uint32_t cp)
{
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

/// Length of the well-formed UTF-8 sequence starting at `s[0]`, or 0.
inline std::size_t utf8_sequence_length(std::string_view s) noexcept
{
    const auto b0 = static_cast<unsigned char>(s[0]);
    std::size_t len = 0;
    std::uint32_t min = 0;
    std::uint32_t cp = 0;
    if (b0 >= 0xC2 && b0 <= 0xDF) {
        len = 2, min = 0x80, cp = b0 & 0x1F;
    } else if (b0 >= 0xE0 && b0 <= 0xEF) {
        len = 3, min = 0x800, cp = b0 & 0x0F;
    } else if (b0 >= 0xF0 && b0 <= 0xF4) {
        len = 4, min = 0x10000, cp = b0 & 0x07;
    } else {
        return 0;
    }
    if (s.size() < len)
        return 0;
    for (std::size_t i = 1; i < len; ++i) {
        const auto b = static_cast<unsigned char>(s[i]);
        if ((b & 0xC0) != 0x80)
            return 0;
        cp = (cp << 6) | (b & 0x3F);
    }
    if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
        return 0;
    return len;
}

class Lexer {
public:
    explicit Lexer(std::string_view source) : src_(source) { current_ = lex(); }

    const Token& peek() const noexcept { return current_; }

    Token next()
    {
        Token out = std::move(current_);
        current_ = lex();
        return out;
    }

private:
    [[noreturn]] void fail_here(std::string expected, std::string found) const
    {
        throw ParseError(line_, column_, std::move(expected), std::move(found));
    }

    static std::string describe_byte(char c)
    {
        const auto b = static_cast<unsigned char>(c);
        if (b >= 0x21 && b < 0x7F)
            return std::string("'") + c + "'";
        static constexpr char hex[] = "0123456789ABCDEF";
        return std::string("byte 0x") + hex[b >> 4] + hex[b & 0xF];
    }

    bool at_end() const noexcept { return pos_ >= src_.size(); }
    char cur() const noexcept { return src_[pos_]; }

    void advance(std::size_t n = 1) noexcept
    {
        for (std::size_t i = 0; i < n && pos_ < src_.size(); ++i) {
            if (src_[pos_] == '\n') {
                ++line_;
                column_ = 1;
            } else {
                ++column_;
            }
            ++pos_;
        }
    }

    void skip_whitespace() noexcept
    {
        while (!at_end() && (cur() == ' ' || cur() == '\t' || cur() == '\n' || cur() == '\r'))
            advance();
    }

    Token lex()
    {
        skip_whitespace();
        Token tok;
        tok.line = line_;
        tok.column = column_;
        if (at_end()) {
            tok.kind = TokenKind::End;
            return tok;
        }

        const char c = cur();
        if (is_ident_start(c)) {
            const std::size_t start = pos_;
            while (!at_end() && is_ident_char(cur()))
                advance();
            tok.kind = TokenKind::Identifier;
            tok.text = std::string(src_.substr(start, pos_ - start));
            return tok;
        }
        if (c == '"') {
            tok.kind = TokenKind::String;
            tok.text = lex_string();
            return tok;
        }
        if (c == '-' || is_digit(c)) {
            lex_number(tok);
            return tok;
        }

        static constexpr std::string_view two_char[] = {"==", "!=", "<=", ">=", "&&", "||"};
        for (auto op : two_char) {
            if (src_.substr(pos_, 2) == op) {
                tok.kind = TokenKind::Punct;
                tok.text = std::string(op);
                advance(2);
                return tok;
            }
        }
        static constexpr std::string_view one_char = "=!<>(){}[],:;.";
        if (one_char.find(c) != std::string_view::npos) {
            tok.kind = TokenKind::Punct;
            tok.text = std::string(1, c);
            advance();
            return tok;
        }
        fail_here("token", describe_byte(c));
    }

    std::string lex_string()
    {
        advance(); // opening quote
        std::string out;
        while (true) {
            if (at_end())
                fail_here("'\"'", "end of input");
            const char c = cur();
            const auto b = static_cast<unsigned char>(c);
            if (c == '"') {
                advance();
                return out;
            }
            if (c == '\\') {
                advance();
                if (at_end())
                    fail_here("escape sequence", "end of input");
                const char e = cur();
                switch (e) {
                case '"': out.push_back('"'); break;
                case '\\': out.push_back('\\'); break;
                case '/': out.push_back('/'); break;
                case 'b': out.push_back('\b'); break;
                case 'f': out.push_back('\f'); break;
                case 'n': out.push_back('\n'); break;
                case 'r': out.push_back('\r'); break;
                case 't': out.push_back('\t'); break;
                case 'u': {
                    advance();
                    std::uint32_t cp = read_hex4();
                    if (cp >= 0xD800 && cp <= 0xDBFF) {
                        if (src_.substr(pos_, 2) != "\\u")
                            fail_here("low surrogate escape", at_end() ? "end of input" : describe_byte(cur()));
                        advance(2);
                        const std::uint32_t low = read_hex4();
                        if (low < 0xDC00 || low > 0xDFFF)
                            fail_here("low surrogate escape", "code unit outside DC00-DFFF");
                        cp = 0x10000 + ((cp - 0xD800) << 10) + (low - 0xDC00);
                    } else if (cp >= 0xDC00 && cp <= 0xDFFF) {
                        fail_here("escape sequence", "unpaired low surrogate");
                    }
                    append_utf8(out, cp);
                    continue; // read_hex4 already advanced
                }
                default:
                    fail_here("escape sequence", describe_byte(e));
                }
                advance();
                continue;
            }
            if (b < 0x20)
                fail_here("string character", describe_byte(c));
            if (b < 0x80) {
                out.push_back(c);
                advance();
                continue;
            }
            const std::size_t len = utf8_sequence_length(src_.substr(pos_));
            if (len == 0)
                fail_here("UTF-8 text", describe_byte(c));
            out.append(src_.substr(pos_, len));
            advance(len);
        }
    }

    std::uint32_t read_hex4()
    {
        std::uint32_t value = 0;
        for (int i = 0; i < 4; ++i) {
            if (at_end())
                fail_here("hex digit", "end of input");
            const char h = cur();
            std::uint32_t digit = 0;
            if (h >= '0' && h <= '9')
                digit = static_cast<std::uint32_t>(h - '0');
            else if (h >= 'a' && h <= 'f')
                digit = static_cast<std::uint32_t>(h - 'a' + 10);
            else if (h >= 'A' && h <= 'F')
                digit = static_cast<std::uint32_t>(h - 'A' + 10);
            else
                fail_here("hex digit", describe_byte(h));
            value = value * 16 + digit;
            advance();
        }
        return value;
    }

    void lex_number(Token& tok)
    {
        const std::size_t start = pos_;
        auto digits = [&] {
            if (at_end() || !is_digit(cur()))
                fail_here("digit", at_end() ? "end of input" : describe_byte(cur()));
            while (!at_end() && is_digit(cur()))
                advance();
        };
        if (cur() == '-')
            advance();
        if (!at_end() && cur() == '0') {
            advance();
        } else {
            digits();
        }
        if (!at_end() && cur() == '.') {
            advance();
            digits();
        }
        if (!at_end() && (cur() == 'e' || cur() == 'E')) {
            advance();
            if (!at_end() && (cur() == '+' || cur() == '-'))
                advance();
            digits();
        }
        if (!at_end() && is_ident_char(cur()))
            fail_here("end of number", describe_byte(cur()));

        tok.kind = TokenKind::Number;
        tok.text = std::string(src_.substr(start, pos_ - start));
        const char* first = tok.text.data();
        const char* last = first + tok.text.size();
        auto [ptr, ec] = std::from_chars(first, last, tok.number);
        if (ec != std::errc{} || ptr != last)
            throw ParseError(tok.line, tok.column, "finite number", "number " + tok.text);
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t column_ = 1;
    Token current_;
};

class Parser {
public:
    explicit Parser(std::string_view source) : lexer_(source) {}

    std::vector<Statement> parse_program()
    {
        std::vector<Statement> statements;
        if (peek().kind == TokenKind::End)
            fail("statement");
        while (peek().kind != TokenKind::End)
            statements.push_back(parse_statement(0));
        return statements;
    }

private:
    const Token& peek() const noexcept { return lexer_.peek(); }

    [[noreturn]] void fail(std::string expected) const
    {
        const Token& t = peek();
        throw ParseError(t.line, t.column, std::move(expected), describe(t));
    }

    void expect(std::string_view punct)
    {
        if (!peek().is(punct))
            fail("'" + std::string(punct) + "'");
        lexer_.next();
    }

    void check_depth(std::size_t depth) const
    {
        if (depth > kMaxNesting)
            fail("nesting depth at most " + std::to_string(kMaxNesting));
    }

    std::string expect_identifier(std::string_view what = "identifier")
    {
        if (peek().kind != TokenKind::Identifier || is_keyword(peek().text))
            fail(std::string(what));
        return lexer_.next().text;
    }

    Statement parse_statement(std::size_t depth)
    {
        check_depth(depth);
        if (peek().is_word("if"))
            return Statement{parse_conditional(depth)};
        return Statement{parse_assignment()};
    }

    ApiCallStatement parse_assignment()
    {
        ApiCallStatement stmt;
        stmt.target_variable = expect_identifier("statement");
        expect("=");
        if (peek().is_word("await")) {
            lexer_.next();
            stmt.awaited = true;
        }
        stmt.call.ns = expect_identifier("API namespace");
        expect(".");
        stmt.call.function = expect_identifier("API function name");
        expect("(");
        if (!peek().is("{"))
            fail("'{'");
        stmt.call.arguments = parse_object(1);
        expect(")");
        expect(";");
        return stmt;
    }

    std::vector<Statement> parse_block(std::size_t depth)
    {
        expect("{");
        std::vector<Statement> body;
        if (peek().is("}"))
            fail("statement");
        while (!peek().is("}")) {
            if (peek().kind == TokenKind::End)
                fail("'}'");
            body.push_back(parse_statement(depth));
        }
        lexer_.next();
        return body;
    }

    Conditional parse_conditional(std::size_t depth)
    {
        lexer_.next(); // if
        Conditional cond;
        expect("(");
        cond.condition = parse_or(depth + 1);
        expect(")");
        cond.then_branch = parse_block(depth + 1);
        if (peek().is_word("else")) {
            lexer_.next();
            cond.else_branch = parse_block(depth + 1);
        }
        return cond;
    }

    //===--- parameter objects ---===//

    ParamObject parse_object(std::size_t depth)
    {
        check_depth(depth);
        expect("{");
        ParamObject obj;
        if (peek().is("}")) {
            lexer_.next();
            return obj;
        }
        while (true) {
            if (peek().kind != TokenKind::String)
                fail(obj.empty() ? "string key or '}'" : "string key");
            const Token key_token = lexer_.next();
            for (const auto& entry : obj.entries) {
                if (entry.key == key_token.text)
                    throw ParseError(key_token.line, key_token.column, "unique key",
                                     "duplicate " + describe(key_token));
            }
            expect(":");
            ParamValue value = parse_value(depth + 1);
            obj.entries.push_back(ParamEntry{key_token.text, std::move(value)});
            if (peek().is(",")) {
                lexer_.next();
                continue;
            }
            if (peek().is("}")) {
                lexer_.next();
                return obj;
            }
            fail("',' or '}'");
        }
    }

    ParamList parse_list(std::size_t depth)
    {
        check_depth(depth);
        expect("[");
        ParamList list;
        if (peek().is("]")) {
            lexer_.next();
            return list;
        }
        while (true) {
            list.items.push_back(parse_value(depth + 1));
            if (peek().is(",")) {
                lexer_.next();
                continue;
            }
            if (peek().is("]")) {
                lexer_.next();
                return list;
            }
            fail("',' or ']'");
        }
    }

    ParamValue parse_value(std::size_t depth)
    {
        const Token& t = peek();
        switch (t.kind) {
        case TokenKind::String:
            return ParamValue{lexer_.next().text};
        case TokenKind::Number:
            return ParamValue{lexer_.next().number};
        case TokenKind::Identifier:
            if (t.text == "true" || t.text == "false") {
                const bool b = t.text == "true";
                lexer_.next();
                return ParamValue{b};
            }
            if (t.text == "null") {
                lexer_.next();
                return ParamValue{nullptr};
            }
            if (is_keyword(t.text))
                fail("value");
            return ParamValue{parse_member()};
        case TokenKind::Punct:
            if (t.is("{"))
                return ParamValue{parse_object(depth)};
            if (t.is("["))
                return ParamValue{parse_list(depth)};
            break;
        case TokenKind::End:
            break;
        }
        fail("value");
    }

    MemberAccess parse_member()
    {
        MemberAccess access;
        access.base_variable = expect_identifier();
        while (peek().is(".")) {
            lexer_.next();
            access.path.push_back(expect_identifier("member name"));
        }
        return access;
    }

    //===--- conditions ---===//

    Expression parse_or(std::size_t depth)
    {
        check_depth(depth);
        Expression left = parse_and(depth);
        while (peek().is("||")) {
            lexer_.next();
            Expression right = parse_and(depth);
            left = Expression{Logical{LogicalOp::Or, std::move(left), std::move(right)}};
        }
        return left;
    }

    Expression parse_and(std::size_t depth)
    {
        Expression left = parse_unary(depth);
        while (peek().is("&&")) {
            lexer_.next();
            Expression right = parse_unary(depth);
            left = Expression{Logical{LogicalOp::And, std::move(left), std::move(right)}};
        }
        return left;
    }

    Expression parse_unary(std::size_t depth)
    {
        check_depth(depth);
        if (peek().is("!")) {
            lexer_.next();
            return Expression{Negation{parse_unary(depth + 1)}};
        }
        if (peek().is("(")) {
            lexer_.next();
            Expression inner = parse_or(depth + 1);
            expect(")");
            return inner;
        }
        Operand left = parse_operand();
        if (auto op = comparison_op()) {
            lexer_.next();
            Operand right = parse_operand();
            return Expression{Comparison{std::move(left), *op, std::move(right)}};
        }
        return std::visit([](auto&& v) { return Expression{std::move(v)}; }, std::move(left));
    }

    std::optional<CompareOp> comparison_op() const
    {
        const Token& t = peek();
        if (t.kind != TokenKind::Punct)
            return std::nullopt;
        if (t.text == "==") return CompareOp::Eq;
        if (t.text == "!=") return CompareOp::Ne;
        if (t.text == "<") return CompareOp::Lt;
        if (t.text == "<=") return CompareOp::Le;
        if (t.text == ">") return CompareOp::Gt;
        if (t.text == ">=") return CompareOp::Ge;
        return std::nullopt;
    }

    Operand parse_operand()
    {
        const Token& t = peek();
        switch (t.kind) {
        case TokenKind::String:
            return Literal{lexer_.next().text};
        case TokenKind::Number:
            return Literal{lexer_.next().number};
        case TokenKind::Identifier:
            if (t.text == "true" || t.text == "false") {
                const bool b = t.text == "true";
                lexer_.next();
                return Literal{b};
            }
            if (is_keyword(t.text))
                break;
            return parse_member();
        default:
            break;
        }
        fail("condition operand");
    }

    Lexer lexer_;
};

} // namespace detail

/// Parses a complete program. Throws ParseError at the first violation.
inline Flow parse_flow(std::string_view source)
{
    detail::Parser parser(source);
    Flow flow;
    flow.statements = parser.parse_program();
    flow.source_text = std::string(source);
    return flow;
}

/// Non-throwing form of parse_flow.
inline std::variant<Flow, ParseError> try_parse_flow(std::string_view source)
{
    try {
        return parse_flow(source);
    } catch (const ParseError& e) {
        return e;
    }
}

} // namespace flowrag
