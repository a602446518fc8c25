#pragma once

// Initial object and edge features. Objects are described by a fixed geometric
// point-set descriptor projected to D dims; in PredCls the node features are
// replaced by a learned label embedding. Edge features are an MLP of the
// subject-minus-object feature difference.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "leo/error.hpp"
#include "leo/nn.hpp"
#include "leo/scene.hpp"
#include "leo/tensor.hpp"

namespace leo {

/// Source of node features: the point-set encoder (SGCls) or label embeddings (PredCls).
enum class FeatureMode { kGeometric, kLabelEmbedding };

struct EncoderConfig {
  std::size_t feature_dim = 64;
  std::size_t histogram_bins = 8;

  void validate() const {
    if (feature_dim < 8) throw ValidationError("encoder feature_dim must be >= 8");
    if (histogram_bins < 2) throw ValidationError("encoder histogram_bins must be >= 2");
  }
};

/// Raw descriptor layout: centroid(3) extents(3) log-count(1) eigenvalues(3) histograms(3*bins).
inline std::size_t raw_descriptor_size(std::size_t bins) { return 10 + 3 * bins; }

/// Eigenvalues of a symmetric 3x3 matrix in descending order (cyclic Jacobi).
inline std::array<double, 3> symmetric_eigenvalues(std::array<std::array<double, 3>, 3> a) {
  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    if (off < 1e-30) break;
    for (int p = 0; p < 2; ++p)
      for (int q = p + 1; q < 3; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (int k = 0; k < 3; ++k) {  // A <- A J
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {  // A <- J^T A
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
  }
  std::array<double, 3> ev = {a[0][0], a[1][1], a[2][2]};
  std::sort(ev.begin(), ev.end(), std::greater<>());
  return ev;
}

/// Population covariance of the points.
inline std::array<std::array<double, 3>, 3> covariance(const std::vector<Vec3>& pts) {
  Vec3 mu{0, 0, 0};
  for (const auto& p : pts)
    for (int a = 0; a < 3; ++a) mu[a] += p[a];
  for (auto& m : mu) m /= static_cast<double>(pts.size());
  std::array<std::array<double, 3>, 3> c{};
  for (const auto& p : pts)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) c[a][b] += (p[a] - mu[a]) * (p[b] - mu[b]);
  for (auto& row : c)
    for (auto& v : row) v /= static_cast<double>(pts.size());
  return c;
}

inline std::vector<double> raw_object_descriptor(const std::vector<Vec3>& points, const Box& bbox,
                                                 std::size_t bins) {
  if (points.empty()) throw ValidationError("encode_object_points: empty point set");
  std::vector<double> out;
  out.reserve(raw_descriptor_size(bins));
  Vec3 mu{0, 0, 0};
  for (const auto& p : points)
    for (int a = 0; a < 3; ++a) mu[a] += p[a];
  for (int a = 0; a < 3; ++a) out.push_back(mu[a] / static_cast<double>(points.size()));
  for (double e : bbox.extents()) out.push_back(e);
  out.push_back(std::log(static_cast<double>(points.size())));
  for (double ev : symmetric_eigenvalues(covariance(points))) out.push_back(ev);
  for (int a = 0; a < 3; ++a) {
    std::vector<double> hist(bins, 0.0);
    const double lo = bbox.min[a], span = bbox.max[a] - bbox.min[a];
    for (const auto& p : points) {
      const double u = span > 0 ? (p[a] - lo) / span : 0.5;
      const auto b = static_cast<std::size_t>(std::clamp(u, 0.0, 1.0) * static_cast<double>(bins));
      hist[std::min(b, bins - 1)] += 1.0;
    }
    for (double h : hist) out.push_back(h / static_cast<double>(points.size()));
  }
  return out;
}

/// Descriptor for a scene object; objects without points fall back to their 8 box corners.
inline std::vector<double> raw_object_descriptor(const ObjectInstance& obj, std::size_t bins) {
  if (!obj.points.empty()) return raw_object_descriptor(obj.points, obj.bbox, bins);
  const auto corners = obj.bbox.corners();
  return raw_object_descriptor(std::vector<Vec3>(corners.begin(), corners.end()), obj.bbox, bins);
}

template <typename T>
struct FeatureEncoder {
  EncoderConfig config;
  Linear<T> project;      // raw descriptor -> D, followed by ReLU
  Embedding<T> labels;    // C_obj x D
  Mlp2<T> edge_init;      // phi_e0: D -> D -> D

  FeatureEncoder() = default;
  FeatureEncoder(ParamStore<T>& store, Initializer& init, const EncoderConfig& cfg, std::size_t num_classes)
      : config(cfg),
        project(store, init, "encoder.project", raw_descriptor_size(cfg.histogram_bins), cfg.feature_dim),
        labels(store, init, "encoder.label_embedding", num_classes, cfg.feature_dim),
        edge_init(store, init, "encoder.edge_init", cfg.feature_dim, cfg.feature_dim, cfg.feature_dim) {
    cfg.validate();
  }

  /// raw: [K x raw_descriptor_size]
  Tensor<T> encode_points(const Tensor<T>& raw) const { return relu(project(raw)); }

  Tensor<T> label_embedding(std::span<const std::size_t> class_ids) const { return labels(class_ids); }

  /// phi_e0(f_i - f_j) for every edge (i = source/subject, j = target/object).
  Tensor<T> init_edge_features(const Tensor<T>& f, const PrimitiveGraph& graph) const {
    return edge_init(edge_differences(f, graph));
  }

  /// Single pair: phi_e0(f_i - f_j).
  Tensor<T> init_edge_features(const Tensor<T>& fi, const Tensor<T>& fj) const {
    if (fi.shape() != fj.shape()) throw ShapeError("init_edge_features: feature dimensions differ");
    return edge_init(sub(fi, fj));
  }

  static Tensor<T> edge_differences(const Tensor<T>& f, const PrimitiveGraph& graph) {
    return sub(gather_rows(f, graph.sources()), gather_rows(f, graph.targets()));
  }
};

}  // namespace leo
