#pragma once

// Object-centric message passing on the primitive graph and the two
// classification heads.
//
//   h_i'  = GRU(h_i,  LN( sum_{edges e incident to i} phi_e(h_e) ))
//   h_ij' = GRU(h_ij, LN( phi_n(h_i) + phi_n(h_j) ))
//
// Both updates read the layer-l states.

#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "leo/error.hpp"
#include "leo/nn.hpp"
#include "leo/scene.hpp"
#include "leo/tensor.hpp"

namespace leo {

enum class Incidence {
  kBoth,      // outgoing (i,j) and incoming (j,i)
  kOutgoing,  // (i,j) only
};

template <typename T>
struct ObjectGnnLayer {
  Linear<T> phi_e;  // edge -> node, ReLU
  Linear<T> phi_n;  // node -> edge, ReLU
  LayerNorm<T> node_norm;
  LayerNorm<T> edge_norm;
  GruCell<T> node_gru;
  GruCell<T> edge_gru;

  ObjectGnnLayer() = default;
  ObjectGnnLayer(ParamStore<T>& store, Initializer& init, const std::string& name, std::size_t dim)
      : phi_e(store, init, name + ".phi_e", dim, dim),
        phi_n(store, init, name + ".phi_n", dim, dim),
        node_norm(store, name + ".node_ln", dim),
        edge_norm(store, name + ".edge_ln", dim),
        node_gru(store, init, name + ".node_gru", dim),
        edge_gru(store, init, name + ".edge_gru", dim) {}

  Tensor<T> node_message(const Tensor<T>& edges, const PrimitiveGraph& g, Incidence inc) const {
    auto msgs = relu(phi_e(edges));
    auto total = scatter_add_rows(msgs, g.sources(), g.num_objects());
    if (inc == Incidence::kBoth) total = add(total, scatter_add_rows(msgs, g.targets(), g.num_objects()));
    return node_norm(total);
  }

  Tensor<T> edge_message(const Tensor<T>& nodes, const PrimitiveGraph& g) const {
    auto p = relu(phi_n(nodes));
    return edge_norm(add(gather_rows(p, g.sources()), gather_rows(p, g.targets())));
  }

  std::pair<Tensor<T>, Tensor<T>> operator()(const Tensor<T>& nodes, const Tensor<T>& edges,
                                             const PrimitiveGraph& g, Incidence inc) const {
    auto mn = node_message(edges, g, inc);
    auto me = edge_message(nodes, g);
    return {node_gru(nodes, mn), edge_gru(edges, me)};
  }
};

template <typename T>
struct ObjectGnn {
  std::vector<ObjectGnnLayer<T>> layers;
  Incidence incidence = Incidence::kBoth;

  ObjectGnn() = default;
  ObjectGnn(ParamStore<T>& store, Initializer& init, std::size_t dim, std::size_t depth, Incidence inc)
      : incidence(inc) {
    if (depth < 1) throw ValidationError("object GNN needs at least one layer");
    for (std::size_t l = 0; l < depth; ++l)
      layers.emplace_back(store, init, "objgnn.layer" + std::to_string(l), dim);
  }

  std::pair<Tensor<T>, Tensor<T>> operator()(Tensor<T> nodes, Tensor<T> edges, const PrimitiveGraph& g) const {
    if (nodes.rank() != 2 || nodes.dim(0) != g.num_objects() || edges.rank() != 2 || edges.dim(0) != g.num_edges()) {
      throw ShapeError("object GNN: state counts do not match the graph");
    }
    for (const auto& layer : layers) std::tie(nodes, edges) = layer(nodes, edges, g, incidence);
    return {nodes, edges};
  }
};

/// s_n = softmax(phi_obj(h_i)), s_e = softmax(phi_pred(h_ij)); the predicate
/// head has one extra trailing "none" class.
template <typename T>
struct Heads {
  Linear<T> object;
  Linear<T> predicate;

  Heads() = default;
  Heads(ParamStore<T>& store, Initializer& init, std::size_t dim, std::size_t num_object_classes,
        std::size_t num_predicates)
      : object(store, init, "heads.object", dim, num_object_classes),
        predicate(store, init, "heads.predicate", dim, num_predicates + 1) {}

  Tensor<T> classify_objects(const Tensor<T>& h) const { return softmax(object(h), h.rank() - 1); }
  Tensor<T> classify_predicates(const Tensor<T>& h) const { return softmax(predicate(h), h.rank() - 1); }
};

}  // namespace leo
