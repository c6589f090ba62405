/// @file ast_json.hpp
/// @brief JSON view of a parsed flow, for inspection and tooling.

#pragma once

#include "flowrag/ast.hpp"
#include "flowrag/dsl.hpp"

#include <nlohmann/json.hpp>

namespace flowrag {

namespace detail {

inline nlohmann::ordered_json member_json(const MemberAccess& m)
{
    return {{"kind", "member"}, {"base", m.base_variable}, {"path", m.path}};
}

inline nlohmann::ordered_json value_json(const ParamValue& v);

inline nlohmann::ordered_json object_json(const ParamObject& obj)
{
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& e : obj.entries)
        out[e.key] = value_json(e.value);
    return out;
}

inline nlohmann::ordered_json value_json(const ParamValue& v)
{
    return std::visit(
        [](const auto& x) -> nlohmann::ordered_json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, MemberAccess>) {
                return member_json(x);
            } else if constexpr (std::is_same_v<T, ParamList>) {
                nlohmann::ordered_json arr = nlohmann::ordered_json::array();
                for (const auto& item : x.items)
                    arr.push_back(value_json(item));
                return arr;
            } else if constexpr (std::is_same_v<T, ParamObject>) {
                return object_json(x);
            } else {
                return x;
            }
        },
        v.value);
}

inline nlohmann::ordered_json operand_json(const Operand& o)
{
    if (const auto* m = std::get_if<MemberAccess>(&o))
        return member_json(*m);
    return std::visit([](const auto& lit) { return nlohmann::ordered_json{{"kind", "literal"}, {"value", lit}}; },
                      std::get<Literal>(o));
}

inline nlohmann::ordered_json expression_json(const Expression& e)
{
    return std::visit(
        [](const auto& n) -> nlohmann::ordered_json {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, MemberAccess>) {
                return member_json(n);
            } else if constexpr (std::is_same_v<T, Literal>) {
                return operand_json(Operand{n});
            } else if constexpr (std::is_same_v<T, Comparison>) {
                return {{"kind", "compare"},
                        {"op", compare_op_text(n.op)},
                        {"left", operand_json(n.left)},
                        {"right", operand_json(n.right)}};
            } else if constexpr (std::is_same_v<T, Logical>) {
                return {{"kind", n.op == LogicalOp::And ? "and" : "or"},
                        {"left", expression_json(*n.left)},
                        {"right", expression_json(*n.right)}};
            } else {
                return {{"kind", "not"}, {"operand", expression_json(*n.inner)}};
            }
        },
        e.node);
}

inline nlohmann::ordered_json statements_json(const std::vector<Statement>& statements)
{
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& s : statements) {
        if (const auto* call = std::get_if<ApiCallStatement>(&s.node)) {
            out.push_back({{"kind", "call"},
                           {"target", call->target_variable},
                           {"await", call->awaited},
                           {"function", call->call.qualified_name()},
                           {"arguments", object_json(call->call.arguments)}});
        } else {
            const auto& c = std::get<Conditional>(s.node);
            nlohmann::ordered_json j = {{"kind", "if"},
                                        {"condition", expression_json(c.condition)},
                                        {"then", statements_json(c.then_branch)}};
            if (c.has_else())
                j["else"] = statements_json(c.else_branch);
            out.push_back(std::move(j));
        }
    }
    return out;
}

} // namespace detail

inline nlohmann::ordered_json flow_to_json(const Flow& flow)
{
    return {{"statements", detail::statements_json(flow.statements)}};
}

} // namespace flowrag
