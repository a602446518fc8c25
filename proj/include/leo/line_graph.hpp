#pragma once

// Line-graph transformation of the primitive graph and the edge-centric GNN
// that runs on it. Line node n corresponds to primitive edge n; with the
// default same-source rule, e_ij is adjacent to e_ik for every k != i, j.

#include <algorithm>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "leo/error.hpp"
#include "leo/nn.hpp"
#include "leo/scene.hpp"
#include "leo/tensor.hpp"

namespace leo {

enum class Adjacency {
  kSameSource,  // e_ij ~ e_ik (shared source object)
  kSharedAny,   // any shared endpoint
};

class LineGraph {
 public:
  LineGraph() = default;

  /// Builds from explicit neighbor lists (one per line node); lists are sorted
  /// so that message sums always accumulate in ascending neighbor order.
  static LineGraph from_adjacency(std::vector<std::vector<std::size_t>> neighbors) {
    LineGraph g;
    g.offsets_.push_back(0);
    for (std::size_t n = 0; n < neighbors.size(); ++n) {
      auto& list = neighbors[n];
      std::sort(list.begin(), list.end());
      for (std::size_t m : list) {
        if (m >= neighbors.size()) throw ValidationError("line-graph neighbor out of range");
        if (m == n) throw ValidationError("line-graph self-adjacency");
        g.receiver_.push_back(n);
        g.sender_.push_back(m);
      }
      g.offsets_.push_back(g.sender_.size());
    }
    return g;
  }

  std::size_t num_nodes() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t num_adjacencies() const { return sender_.size(); }

  std::span<const std::size_t> neighbors(std::size_t node) const {
    return std::span<const std::size_t>(sender_).subspan(offsets_[node], offsets_[node + 1] - offsets_[node]);
  }

  /// Flat adjacency list: entry p says line node receiver()[p] hears from sender()[p].
  const std::vector<std::size_t>& receiver() const { return receiver_; }
  const std::vector<std::size_t>& sender() const { return sender_; }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> receiver_;
  std::vector<std::size_t> sender_;
};

inline LineGraph build_line_graph(const PrimitiveGraph& graph, Adjacency rule = Adjacency::kSameSource) {
  const std::size_t k = graph.num_objects();
  std::vector<std::vector<std::size_t>> out_edges(k), in_edges(k);
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    out_edges[graph.sources()[e]].push_back(e);
    in_edges[graph.targets()[e]].push_back(e);
  }
  std::vector<std::vector<std::size_t>> nbrs(graph.num_edges());
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    const auto [i, j] = graph.edge(e);
    auto& list = nbrs[e];
    if (rule == Adjacency::kSameSource) {
      for (std::size_t f : out_edges[i])
        if (graph.targets()[f] != j) list.push_back(f);
    } else {
      for (std::size_t v : {i, j}) {
        for (std::size_t f : out_edges[v]) list.push_back(f);
        for (std::size_t f : in_edges[v]) list.push_back(f);
      }
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
      list.erase(std::remove(list.begin(), list.end(), e), list.end());
    }
  }
  return LineGraph::from_adjacency(std::move(nbrs));
}

/// f~_ij = s_ij * f_ij
template <typename T>
Tensor<T> weight_edges(const Tensor<T>& edge_features, const Tensor<T>& link_weights) {
  if (edge_features.rank() != 2 || link_weights.numel() != edge_features.dim(0)) {
    throw ShapeError("weight_edges: " + std::to_string(link_weights.numel()) + " weights for " +
                     shape_str(edge_features.shape()) + " edge features");
  }
  return mul_rows(edge_features, link_weights);
}

/// One LineGNN layer:
///   alpha_{ij->ik} = softmax_k( phi_att([h_ij || h_ik]) )
///   m_ij = LN( sum_k alpha_{ij->ik} phi_e(h_ik) )
///   h_ij' = GRU(h_ij, m_ij)
/// phi_att is linear -> ReLU -> linear(1). Its first linear map on the
/// concatenation is stored as two blocks (self, neighbor) so it can be applied
/// per node before gathering; the result equals W [h_ij || h_ik] + b.
template <typename T>
struct LineGnnLayer {
  Linear<T> phi_e;      // D -> D, ReLU
  Tensor<T> att_self;   // [D x H]
  Tensor<T> att_nbr;    // [D x H]
  Tensor<T> att_bias;   // [H]
  Linear<T> att_out;    // H -> 1
  LayerNorm<T> norm;
  GruCell<T> gru;

  LineGnnLayer() = default;
  LineGnnLayer(ParamStore<T>& store, Initializer& init, const std::string& name, std::size_t dim) {
    phi_e = Linear<T>(store, init, name + ".phi_e", dim, dim);
    // The concatenated input has fan-in 2D.
    const auto w = init.uniform_fan_in<T>(2 * dim, dim);
    std::vector<T> top(w.values().begin(), w.values().begin() + dim * dim);
    std::vector<T> bottom(w.values().begin() + dim * dim, w.values().end());
    att_self = store.add(name + ".att.w_self", Tensor<T>::matrix(dim, dim, std::move(top)));
    att_nbr = store.add(name + ".att.w_nbr", Tensor<T>::matrix(dim, dim, std::move(bottom)));
    att_bias = store.add(name + ".att.b", Tensor<T>::zeros({dim}));
    att_out = Linear<T>(store, init, name + ".att.out", dim, 1);
    norm = LayerNorm<T>(store, name + ".ln", dim);
    gru = GruCell<T>(store, init, name + ".gru", dim);
  }

  /// Attention weights, one per adjacency entry of `lg`.
  Tensor<T> attention(const Tensor<T>& h, const LineGraph& lg) const {
    const std::size_t pairs = lg.num_adjacencies();
    auto pre = add(gather_rows(matmul(h, att_self), lg.receiver()), gather_rows(matmul(h, att_nbr), lg.sender()));
    auto logits = reshape(att_out(relu(add_row(pre, att_bias))), {pairs});
    return segment_softmax(logits, lg.receiver(), lg.num_nodes());
  }

  Tensor<T> message(const Tensor<T>& h, const LineGraph& lg) const {
    auto alpha = attention(h, lg);
    auto values = gather_rows(relu(phi_e(h)), lg.sender());
    return norm(scatter_add_rows(mul_rows(values, alpha), lg.receiver(), lg.num_nodes()));
  }

  Tensor<T> operator()(const Tensor<T>& h, const LineGraph& lg) const { return gru(h, message(h, lg)); }
};

template <typename T>
struct LineGnn {
  std::vector<LineGnnLayer<T>> layers;

  LineGnn() = default;
  LineGnn(ParamStore<T>& store, Initializer& init, std::size_t dim, std::size_t depth) {
    for (std::size_t l = 0; l < depth; ++l)
      layers.emplace_back(store, init, "linegnn.layer" + std::to_string(l), dim);
  }

  /// Refined edge states h~ aligned with primitive-graph edge indices; h0 = f~.
  Tensor<T> operator()(const Tensor<T>& h0, const LineGraph& lg) const {
    if (h0.rank() != 2 || h0.dim(0) != lg.num_nodes()) {
      throw ShapeError("run_linegnn: " + shape_str(h0.shape()) + " states for " +
                       std::to_string(lg.num_nodes()) + " line nodes");
    }
    Tensor<T> h = h0;
    for (const auto& layer : layers) h = layer(h, lg);
    return h;
  }
};

}  // namespace leo
