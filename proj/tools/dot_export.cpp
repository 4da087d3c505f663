#include "dot_export.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace grex::cli {

std::string explanation_to_dot(const Graph& g, const Explanation& e, int top_k) {
  if (static_cast<int>(e.importance.size()) != g.num_edges()) {
    throw Error("E_SHAPE", "explanation covers " + std::to_string(e.importance.size()) +
                               " edges but the graph has " + std::to_string(g.num_edges()));
  }

  double lo = 0.0, hi = 0.0;
  if (!e.importance.empty()) {
    const auto [mn, mx] = std::minmax_element(e.importance.begin(), e.importance.end());
    lo = *mn;
    hi = *mx;
  }
  const bool degenerate = hi <= lo;
  const auto normalized = [&](double v) { return degenerate ? 0.5 : (v - lo) / (hi - lo); };

  std::set<EdgeId> highlighted;
  if (top_k >= 1 && g.num_edges() > 0) {
    const auto top = top_k_edges(e, top_k);
    highlighted.insert(top.begin(), top.end());
  }

  std::ostringstream out;
  out << "graph explanation {\n";
  out << "  node [shape=circle, fontsize=10];\n";
  for (int v = 0; v < g.num_nodes(); ++v) out << "  " << v << ";\n";
  char buf[128];
  for (EdgeId i = 0; i < g.num_edges(); ++i) {
    const auto& edge = g.edge(i);
    const double norm = normalized(e.importance[static_cast<std::size_t>(i)]);
    const double penwidth = 0.5 + 3.5 * norm;
    const int shade = 220 - static_cast<int>(180.0 * norm);
    if (highlighted.count(i)) {
      std::snprintf(buf, sizeof(buf),
                    "  %d -- %d [penwidth=%.2f, color=\"#c81e1e\", label=\"%d\"];\n",
                    edge.u, edge.v, penwidth + 1.0, i);
    } else {
      std::snprintf(buf, sizeof(buf),
                    "  %d -- %d [penwidth=%.2f, color=\"#%02x%02x%02x\"];\n", edge.u,
                    edge.v, penwidth, shade, shade, shade);
    }
    out << buf;
  }
  out << "}\n";
  return out.str();
}

}  // namespace grex::cli
