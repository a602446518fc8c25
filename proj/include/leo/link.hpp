#pragma once

// Link prediction: a soft weight s_ij = P(link) for every directed object pair,
// from feature and box-geometry differences.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "leo/nn.hpp"
#include "leo/scene.hpp"
#include "leo/tensor.hpp"

namespace leo {

/// Box geometry: 8 corners (x-fastest order), centroid, length, width, height, volume.
inline constexpr std::size_t kBoxGeometrySize = 31;

inline std::array<double, kBoxGeometrySize> box_geometry(const Box& b) {
  std::array<double, kBoxGeometrySize> out{};
  std::size_t n = 0;
  for (const auto& c : b.corners())
    for (double v : c) out[n++] = v;
  for (double v : b.center()) out[n++] = v;
  out[n++] = b.length();
  out[n++] = b.width();
  out[n++] = b.height();
  out[n++] = b.volume();
  return out;
}

struct LinkConfig {
  std::size_t geom_dim = 32;  // D_g
  std::size_t link_dim = 64;  // D_link
};

template <typename T>
struct LinkScores {
  Tensor<T> logits;  // [E x 2]
  Tensor<T> probs;   // [E x 2], column 1 = link
  Tensor<T> weight;  // [E], s_ij = probs[:, 1]
};

template <typename T>
struct LinkPredictor {
  Linear<T> phi_b;  // 31 -> D_g, ReLU
  Mlp2<T> phi_p;    // (D + D_g) -> D_link -> D_link
  Linear<T> phi_l;  // D_link -> 2

  LinkPredictor() = default;
  LinkPredictor(ParamStore<T>& store, Initializer& init, std::size_t feature_dim, const LinkConfig& cfg)
      : phi_b(store, init, "link.phi_b", kBoxGeometrySize, cfg.geom_dim),
        phi_p(store, init, "link.phi_p", feature_dim + cfg.geom_dim, cfg.link_dim, cfg.link_dim),
        phi_l(store, init, "link.phi_l", cfg.link_dim, 2) {}

  /// g_i for every object; geometry: [K x 31].
  Tensor<T> geometric_embed(const Tensor<T>& geometry) const { return relu(phi_b(geometry)); }

  /// phi_p([(f_i - f_j) || (g_i - g_j)]) for every edge.
  Tensor<T> link_features(const Tensor<T>& f, const Tensor<T>& g, const PrimitiveGraph& graph) const {
    const auto& s = graph.sources();
    const auto& t = graph.targets();
    auto df = sub(gather_rows(f, s), gather_rows(f, t));
    auto dg = sub(gather_rows(g, s), gather_rows(g, t));
    return phi_p(concat(df, dg, 1));
  }

  LinkScores<T> classify(const Tensor<T>& link_feat) const { return link_classify(link_feat, phi_l); }

  static LinkScores<T> link_classify(const Tensor<T>& link_feat, const Linear<T>& classifier) {
    LinkScores<T> out;
    out.logits = classifier(link_feat);
    if (out.logits.rank() == 1) out.logits = reshape(out.logits, {1, 2});
    out.probs = softmax(out.logits, 1);
    out.weight = column(out.probs, 1);
    return out;
  }
};

/// 1 for edge (i, j) iff at least one ground-truth predicate exists on the ordered pair.
inline std::vector<int> link_targets(const Scene& scene, const PrimitiveGraph& graph) {
  std::vector<int> out(graph.num_edges(), 0);
  for (const auto& r : scene.relationships) {
    if (auto e = graph.edge_index(scene.index_of(r.subject_id), scene.index_of(r.object_id))) out[*e] = 1;
  }
  return out;
}

/// Mean focal loss over edges of the 2-way link distribution; negatives are
/// weighted by 1 - alpha_positive.
template <typename T>
Tensor<T> link_loss(const Tensor<T>& probs, std::span<const int> targets, double gamma = 2.0,
                    double alpha_positive = 0.25) {
  if (probs.rank() != 2 || probs.dim(0) != targets.size() || probs.dim(1) != 2) {
    throw ShapeError("link_loss: expected [E x 2] probabilities aligned with targets");
  }
  if (targets.empty()) return Tensor<T>::scalar(T(0));
  std::vector<std::size_t> cls(targets.size());
  std::vector<T> alpha(targets.size());
  for (std::size_t e = 0; e < targets.size(); ++e) {
    cls[e] = targets[e] ? 1 : 0;
    alpha[e] = static_cast<T>(targets[e] ? alpha_positive : 1.0 - alpha_positive);
  }
  return mean(focal_loss<T>(probs, cls, static_cast<T>(gamma), alpha));
}

}  // namespace leo
