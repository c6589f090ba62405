#pragma once

#include "flowrag/dsl.hpp"

#include <optional>
#include <string>
#include <utility>

namespace flowrag {

/// One (natural-language prompt, DSL flow) pair.
struct Sample {
    std::string id;
    std::string prompt;
    std::string flow_text;
    std::optional<Flow> flow; // filled when the flow text has been parsed

    /// Parsed flow, parsing on demand when it was not cached. Throws ParseError.
    Flow parsed_flow() const { return flow ? *flow : parse_flow(flow_text); }
};

/// Builds a sample and parses its flow eagerly. Throws ParseError.
inline Sample make_sample(std::string id, std::string prompt, std::string flow_text)
{
    Sample s{std::move(id), std::move(prompt), std::move(flow_text), std::nullopt};
    s.flow = parse_flow(s.flow_text);
    return s;
}

} // namespace flowrag
