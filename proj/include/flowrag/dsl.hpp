/// @file dsl.hpp
/// @brief Canonical serialization and call extraction for parsed flows.

#pragma once

#include "flowrag/ast.hpp"
#include "flowrag/parser.hpp"

#include <array>
#include <charconv>
#include <string>
#include <utility>
#include <vector>

namespace flowrag {

namespace detail {

inline void write_json_string(std::string& out, std::string_view s)
{
    out.push_back('"');
    for (const char c : s) {
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\b': out += "\\b"; break;
        case '\f': out += "\\f"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        case '\t': out += "\\t"; break;
        default:
            if (static_cast<unsigned char>(c) < 0x20) {
                static constexpr char hex[] = "0123456789abcdef";
                out += "\\u00";
                out.push_back(hex[(c >> 4) & 0xF]);
                out.push_back(hex[c & 0xF]);
            } else {
                out.push_back(c);
            }
        }
    }
    out.push_back('"');
}

/// Shortest text that reads back to the same double.
inline void write_number(std::string& out, double value)
{
    std::array<char, 32> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    out.append(buf.data(), ptr);
}

inline void write_member(std::string& out, const MemberAccess& m)
{
    out += m.base_variable;
    for (const auto& part : m.path) {
        out.push_back('.');
        out += part;
    }
}

inline void write_value(std::string& out, const ParamValue& value);

inline void write_object(std::string& out, const ParamObject& obj)
{
    out.push_back('{');
    bool first = true;
    for (const auto& entry : obj.entries) {
        if (!first)
            out.push_back(',');
        first = false;
        write_json_string(out, entry.key);
        out.push_back(':');
        write_value(out, entry.value);
    }
    out.push_back('}');
}

inline void write_value(std::string& out, const ParamValue& value)
{
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::nullptr_t>) {
                out += "null";
            } else if constexpr (std::is_same_v<T, bool>) {
                out += v ? "true" : "false";
            } else if constexpr (std::is_same_v<T, double>) {
                write_number(out, v);
            } else if constexpr (std::is_same_v<T, std::string>) {
                write_json_string(out, v);
            } else if constexpr (std::is_same_v<T, MemberAccess>) {
                write_member(out, v);
            } else if constexpr (std::is_same_v<T, ParamList>) {
                out.push_back('[');
                for (std::size_t i = 0; i < v.items.size(); ++i) {
                    if (i)
                        out.push_back(',');
                    write_value(out, v.items[i]);
                }
                out.push_back(']');
            } else {
                write_object(out, v);
            }
        },
        value.value);
}

inline void write_operand(std::string& out, const Operand& operand)
{
    if (const auto* m = std::get_if<MemberAccess>(&operand)) {
        write_member(out, *m);
        return;
    }
    std::visit(
        [&](const auto& lit) {
            using T = std::decay_t<decltype(lit)>;
            if constexpr (std::is_same_v<T, std::string>)
                write_json_string(out, lit);
            else if constexpr (std::is_same_v<T, double>)
                write_number(out, lit);
            else
                out += lit ? "true" : "false";
        },
        std::get<Literal>(operand));
}

inline const char* compare_op_text(CompareOp op)
{
    switch (op) {
    case CompareOp::Eq: return "==";
    case CompareOp::Ne: return "!=";
    case CompareOp::Lt: return "<";
    case CompareOp::Le: return "<=";
    case CompareOp::Gt: return ">";
    case CompareOp::Ge: return ">=";
    }
    return "==";
}

inline void write_expression(std::string& out, const Expression& expr);

inline void write_grouped(std::string& out, const Expression& expr, bool parens)
{
    if (parens)
        out.push_back('(');
    write_expression(out, expr);
    if (parens)
        out.push_back(')');
}

// Logical operators are left-associative with && binding tighter than ||.
// Parentheses are emitted exactly where re-parsing would otherwise build a
// different tree.
inline void write_expression(std::string& out, const Expression& expr)
{
    std::visit(
        [&](const auto& node) {
            using T = std::decay_t<decltype(node)>;
            if constexpr (std::is_same_v<T, MemberAccess>) {
                write_member(out, node);
            } else if constexpr (std::is_same_v<T, Literal>) {
                write_operand(out, Operand{node});
            } else if constexpr (std::is_same_v<T, Comparison>) {
                write_operand(out, node.left);
                out += ' ';
                out += compare_op_text(node.op);
                out += ' ';
                write_operand(out, node.right);
            } else if constexpr (std::is_same_v<T, Logical>) {
                const auto* left = std::get_if<Logical>(&node.left->node);
                const auto* right = std::get_if<Logical>(&node.right->node);
                const bool and_op = node.op == LogicalOp::And;
                write_grouped(out, *node.left, and_op && left && left->op == LogicalOp::Or);
                out += and_op ? " && " : " || ";
                write_grouped(out, *node.right, right && (and_op || right->op == LogicalOp::Or));
            } else {
                out.push_back('!');
                write_grouped(out, *node.inner, std::holds_alternative<Logical>(node.inner->node));
            }
        },
        expr.node);
}

inline void write_statements(std::string& out, const std::vector<Statement>& statements,
                             std::size_t indent)
{
    const std::string pad(indent * 2, ' ');
    for (const auto& stmt : statements) {
        if (const auto* call = std::get_if<ApiCallStatement>(&stmt.node)) {
            out += pad;
            out += call->target_variable;
            out += call->awaited ? " = await " : " = ";
            out += call->call.ns;
            out.push_back('.');
            out += call->call.function;
            out.push_back('(');
            write_object(out, call->call.arguments);
            out += ");\n";
        } else {
            const auto& cond = std::get<Conditional>(stmt.node);
            out += pad;
            out += "if (";
            write_expression(out, cond.condition);
            out += ") {\n";
            write_statements(out, cond.then_branch, indent + 1);
            out += pad;
            out.push_back('}');
            if (cond.has_else()) {
                out += " else {\n";
                write_statements(out, cond.else_branch, indent + 1);
                out += pad;
                out.push_back('}');
            }
            out.push_back('\n');
        }
    }
}

template <typename Visitor>
void for_each_call(const std::vector<Statement>& statements, Visitor&& visit)
{
    for (const auto& stmt : statements) {
        if (const auto* call = std::get_if<ApiCallStatement>(&stmt.node)) {
            visit(call->call);
        } else {
            const auto& cond = std::get<Conditional>(stmt.node);
            for_each_call(cond.then_branch, visit);
            for_each_call(cond.else_branch, visit);
        }
    }
}

} // namespace detail

/// Canonical text: one statement per line, compact JSON arguments with
/// source key order, two-space indentation inside conditionals.
inline std::string serialize_flow(const Flow& flow)
{
    std::string out;
    detail::write_statements(out, flow.statements, 0);
    return out;
}

inline std::string serialize_param_object(const ParamObject& obj)
{
    std::string out;
    detail::write_object(out, obj);
    return out;
}

/// Visits every ApiCall in source order; conditionals contribute their
/// then-branch before their else-branch.
template <typename Visitor>
void for_each_call(const Flow& flow, Visitor&& visit)
{
    detail::for_each_call(flow.statements, visit);
}

inline std::vector<std::string> extract_api_sequence(const Flow& flow)
{
    std::vector<std::string> names;
    for_each_call(flow, [&](const ApiCall& call) { names.push_back(call.qualified_name()); });
    return names;
}

struct ParameterUsage {
    std::string qualified_name;
    std::vector<std::string> keys; // top-level only

    friend bool operator==(const ParameterUsage&, const ParameterUsage&) = default;
};

inline std::vector<ParameterUsage> extract_parameter_usages(const Flow& flow)
{
    std::vector<ParameterUsage> usages;
    for_each_call(flow, [&](const ApiCall& call) {
        ParameterUsage usage{call.qualified_name(), {}};
        for (const auto& entry : call.arguments.entries)
            usage.keys.push_back(entry.key);
        usages.push_back(std::move(usage));
    });
    return usages;
}

} // namespace flowrag
