/// @file ast.hpp
/// @brief Syntax tree for workflow DSL programs.
///
/// A flow is an ordered list of statements. Each statement is either an
/// assignment of an API call result to a variable, or a conditional whose
/// branches are themselves statement lists:
///
/// ```
/// triggerOutputs = await shared_microsoftforms.CreateFormWebhook({});
/// if (triggerOutputs.body.priority == "high") {
///   sent = shared_teams.PostMessageToConversation({"poster": "User"});
/// }
/// ```
///
/// All nodes are plain values: copyable, comparable with `==`, and immutable
/// once a parser or builder hands them out.

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace flowrag {

/// Heap-allocated value with deep-copy semantics, used to close recursive
/// variants.
template <typename T>
class Box {
public:
    Box(T value) : ptr_(std::make_unique<T>(std::move(value))) {}
    Box(const Box& other) : ptr_(std::make_unique<T>(*other.ptr_)) {}
    Box(Box&&) noexcept = default;
    Box& operator=(const Box& other)
    {
        if (this != &other)
            ptr_ = std::make_unique<T>(*other.ptr_);
        return *this;
    }
    Box& operator=(Box&&) noexcept = default;
    ~Box() = default;

    const T& operator*() const { return *ptr_; }
    const T* operator->() const { return ptr_.get(); }

    friend bool operator==(const Box& a, const Box& b) { return *a == *b; }

private:
    std::unique_ptr<T> ptr_;
};

//===----------------------------------------------------------------------===//
// Parameter values
//===----------------------------------------------------------------------===//

/// Reference to a previous step's output, e.g. `triggerOutputs.body.id`.
struct MemberAccess {
    std::string base_variable;
    std::vector<std::string> path;

    friend bool operator==(const MemberAccess&, const MemberAccess&) = default;
};

struct ParamEntry;
struct ParamValue;

/// JSON-like object whose keys keep their source order.
struct ParamObject {
    std::vector<ParamEntry> entries;

    bool empty() const noexcept { return entries.empty(); }
    std::size_t size() const noexcept { return entries.size(); }

    friend bool operator==(const ParamObject& a, const ParamObject& b);
};

struct ParamList {
    std::vector<ParamValue> items;

    friend bool operator==(const ParamList& a, const ParamList& b);
};

struct ParamValue {
    using Storage = std::variant<std::nullptr_t, bool, double, std::string,
                                 MemberAccess, ParamList, ParamObject>;
    Storage value;

    friend bool operator==(const ParamValue&, const ParamValue&) = default;
};

struct ParamEntry {
    std::string key;
    ParamValue value;

    friend bool operator==(const ParamEntry&, const ParamEntry&) = default;
};

inline bool operator==(const ParamObject& a, const ParamObject& b) { return a.entries == b.entries; }
inline bool operator==(const ParamList& a, const ParamList& b) { return a.items == b.items; }

//===----------------------------------------------------------------------===//
// Conditions
//===----------------------------------------------------------------------===//

using Literal = std::variant<std::string, double, bool>;

/// Leaf of a comparison: either a variable path or a constant.
using Operand = std::variant<MemberAccess, Literal>;

enum class CompareOp { Eq, Ne, Lt, Le, Gt, Ge };
enum class LogicalOp { And, Or };

struct Expression;

struct Comparison {
    Operand left;
    CompareOp op;
    Operand right;

    friend bool operator==(const Comparison&, const Comparison&) = default;
};

struct Logical {
    LogicalOp op;
    Box<Expression> left;
    Box<Expression> right;

    friend bool operator==(const Logical&, const Logical&) = default;
};

struct Negation {
    Box<Expression> inner;

    friend bool operator==(const Negation&, const Negation&) = default;
};

struct Expression {
    using Node = std::variant<MemberAccess, Literal, Comparison, Logical, Negation>;
    Node node;

    friend bool operator==(const Expression&, const Expression&) = default;
};

//===----------------------------------------------------------------------===//
// Statements
//===----------------------------------------------------------------------===//

struct ApiCall {
    std::string ns;
    std::string function;
    ParamObject arguments;

    /// `namespace.function`
    std::string qualified_name() const { return ns + "." + function; }

    friend bool operator==(const ApiCall&, const ApiCall&) = default;
};

struct ApiCallStatement {
    std::string target_variable;
    bool awaited = false;
    ApiCall call;

    friend bool operator==(const ApiCallStatement&, const ApiCallStatement&) = default;
};

struct Statement;

struct Conditional {
    Expression condition;
    std::vector<Statement> then_branch;
    std::vector<Statement> else_branch; // empty when there is no else

    bool has_else() const noexcept { return !else_branch.empty(); }

    friend bool operator==(const Conditional& a, const Conditional& b);
};

struct Statement {
    using Node = std::variant<ApiCallStatement, Conditional>;
    Node node;

    friend bool operator==(const Statement&, const Statement&) = default;
};

inline bool operator==(const Conditional& a, const Conditional& b)
{
    return a.condition == b.condition && a.then_branch == b.then_branch &&
           a.else_branch == b.else_branch;
}

/// A parsed program. Equality is structural: the original text is ignored.
struct Flow {
    std::vector<Statement> statements;
    std::string source_text;

    friend bool operator==(const Flow& a, const Flow& b) { return a.statements == b.statements; }
};

} // namespace flowrag
