#pragma once

// Graphviz DOT export of scene graphs and line-graph structure.

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "leo/line_graph.hpp"
#include "leo/metrics.hpp"
#include "leo/scene.hpp"

namespace leo {

namespace detail {

inline std::string dot_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

inline std::string label_of(const std::vector<std::string>& names, int id) {
  if (id >= 0 && static_cast<std::size_t>(id) < names.size()) return names[static_cast<std::size_t>(id)];
  return std::to_string(id);
}

inline std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

/// Ground-truth scene graph.
inline std::string scene_graph_dot(const Scene& scene, const Vocabulary& vocab, const std::string& name = "gt") {
  std::ostringstream os;
  os << "digraph " << detail::dot_quote(name) << " {\n  rankdir=LR;\n  node [shape=box];\n";
  for (const auto& o : scene.objects)
    os << "  n" << o.id << " [label=" << detail::dot_quote(std::to_string(o.id) + ": " +
                                                            detail::label_of(vocab.objects, o.class_id))
       << "];\n";
  for (const auto& r : scene.relationships)
    os << "  n" << r.subject_id << " -> n" << r.object_id
       << " [label=" << detail::dot_quote(detail::label_of(vocab.predicates, r.predicate_id)) << "];\n";
  os << "}\n";
  return os.str();
}

/// Predicted graph: the top-k constrained triplets. Edges also present in the
/// ground truth are drawn green, the rest red.
inline std::string predicted_graph_dot(const Scene& scene, const std::vector<TripletPrediction>& predictions,
                                       const Vocabulary& vocab, std::size_t k, const std::string& name = "predicted") {
  const auto ranked = rank_triplets(predictions, true);
  const auto gt = gt_triplets(scene);
  std::ostringstream os;
  os << "digraph " << detail::dot_quote(name) << " {\n  rankdir=LR;\n  node [shape=box];\n";
  std::vector<int> predicted_class(scene.size(), -1);
  for (const auto& p : ranked) {
    predicted_class[scene.index_of(p.subject_id)] = p.subject_class;
    predicted_class[scene.index_of(p.object_id)] = p.object_class;
  }
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const auto& o = scene.objects[i];
    const int c = predicted_class[i] < 0 ? o.class_id : predicted_class[i];
    os << "  n" << o.id << " [label=" << detail::dot_quote(std::to_string(o.id) + ": " + detail::label_of(vocab.objects, c))
       << "];\n";
  }
  for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) {
    const auto& p = ranked[r];
    bool hit = false;
    for (const auto& g : gt) hit = hit || matches(p, g);
    os << "  n" << p.subject_id << " -> n" << p.object_id << " [label="
       << detail::dot_quote(detail::label_of(vocab.predicates, p.predicate_id) + " " + detail::fixed(p.score, 3))
       << ", color=" << (hit ? "green" : "red") << "];\n";
  }
  os << "}\n";
  return os.str();
}

/// Line-graph structure: one node per primitive edge "i→j", one arc per adjacency.
inline std::string line_graph_dot(const Scene& scene, const PrimitiveGraph& graph, const LineGraph& lg,
                                  const std::string& name = "line_graph") {
  std::ostringstream os;
  os << "digraph " << detail::dot_quote(name) << " {\n  node [shape=ellipse];\n";
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    const auto [i, j] = graph.edge(e);
    os << "  e" << e << " [label="
       << detail::dot_quote(std::to_string(scene.objects[i].id) + "→" + std::to_string(scene.objects[j].id))
       << "];\n";
  }
  for (std::size_t p = 0; p < lg.num_adjacencies(); ++p)
    os << "  e" << lg.sender()[p] << " -> e" << lg.receiver()[p] << ";\n";
  os << "}\n";
  return os.str();
}

}  // namespace leo
