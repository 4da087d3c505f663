#pragma once

#include <string>

#include "grex/explain.hpp"
#include "grex/graph.hpp"

namespace grex::cli {

/// Graphviz rendering of an explanation: pen width and color intensity follow
/// the min-max normalized importance (all-0.5 when the range is degenerate);
/// the top_k edges are additionally highlighted in red. E_SHAPE when the
/// explanation does not match the graph's edge count.
std::string explanation_to_dot(const Graph& g, const Explanation& e, int top_k);

}  // namespace grex::cli
