#pragma once

// Full pipeline: encode -> link prediction -> edge weighting -> LineGNN ->
// object-centric GNN -> heads, with the integration strategies and link modes
// used for ablations.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "leo/encoder.hpp"
#include "leo/error.hpp"
#include "leo/line_graph.hpp"
#include "leo/link.hpp"
#include "leo/nn.hpp"
#include "leo/object_gnn.hpp"
#include "leo/rng.hpp"
#include "leo/scene.hpp"
#include "leo/tensor.hpp"

namespace leo {

enum class Task { kPredCls, kSgCls };
enum class Strategy { kPre, kPost, kNone, kNoneLp };
enum class LinkMode { kFc, kLp, kGt };

inline FeatureMode feature_mode(Task task) {
  return task == Task::kPredCls ? FeatureMode::kLabelEmbedding : FeatureMode::kGeometric;
}

struct ModelConfig {
  std::size_t num_object_classes = 10;
  std::size_t num_predicates = 11;  // excluding the appended "none" class
  EncoderConfig encoder;
  LinkConfig link;
  std::size_t linegnn_layers = 5;
  std::size_t objgnn_layers = 2;
  Adjacency adjacency = Adjacency::kSameSource;
  Incidence incidence = Incidence::kBoth;

  std::size_t dim() const { return encoder.feature_dim; }
  std::size_t none_class() const { return num_predicates; }
};

struct IntegrationConfig {
  Strategy strategy = Strategy::kPre;
  LinkMode link_mode = LinkMode::kLp;

  /// Link mode actually applied: none+lp always uses predicted weights.
  LinkMode effective_link_mode() const { return strategy == Strategy::kNoneLp ? LinkMode::kLp : link_mode; }
};

/// Scalar-type independent per-scene inputs, computed once.
struct SceneInputs {
  std::size_t num_objects = 0;
  std::size_t descriptor_dim = 0;
  std::vector<double> descriptors;  // K x descriptor_dim
  std::vector<double> geometry;     // K x 31
  std::vector<std::size_t> classes;
  std::vector<std::int64_t> object_ids;
  PrimitiveGraph graph;
  LineGraph line_graph;
  std::vector<int> link_targets;
  std::vector<std::vector<int>> edge_predicates;
};

inline SceneInputs prepare_inputs(const Scene& scene, const ModelConfig& cfg) {
  SceneInputs in;
  in.num_objects = scene.size();
  if (in.num_objects == 0) throw ValidationError("scene " + scene.scan_id + " has no objects");
  in.descriptor_dim = raw_descriptor_size(cfg.encoder.histogram_bins);
  for (const auto& o : scene.objects) {
    if (o.class_id < 0 || static_cast<std::size_t>(o.class_id) >= cfg.num_object_classes) {
      throw ValidationError("object class " + std::to_string(o.class_id) + " outside the model vocabulary");
    }
    const auto d = raw_object_descriptor(o, cfg.encoder.histogram_bins);
    in.descriptors.insert(in.descriptors.end(), d.begin(), d.end());
    const auto g = box_geometry(o.bbox);
    in.geometry.insert(in.geometry.end(), g.begin(), g.end());
    in.classes.push_back(static_cast<std::size_t>(o.class_id));
    in.object_ids.push_back(o.id);
  }
  for (const auto& r : scene.relationships) {
    if (r.predicate_id < 0 || static_cast<std::size_t>(r.predicate_id) >= cfg.num_predicates) {
      throw ValidationError("predicate " + std::to_string(r.predicate_id) + " outside the model vocabulary");
    }
  }
  in.graph = build_primitive_graph(scene);
  in.line_graph = build_line_graph(in.graph, cfg.adjacency);
  in.link_targets = link_targets(scene, in.graph);
  in.edge_predicates = edge_predicates(scene, in.graph);
  return in;
}

template <typename T>
Tensor<T> to_tensor(const std::vector<double>& values, std::size_t rows, std::size_t cols) {
  std::vector<T> v(values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(values[i]);
  return Tensor<T>::matrix(rows, cols, std::move(v));
}

template <typename T>
struct PipelineOutputs {
  Tensor<T> object_probs;     // [K x C_obj]
  Tensor<T> predicate_probs;  // [E x (C_pred + 1)]
  LinkScores<T> link;
  Tensor<T> edge_weights;     // [E], weights actually applied
  Tensor<T> node_features;    // f_i
  Tensor<T> edge_features;    // f_ij
  Tensor<T> weighted_edges;   // f~_ij
  Tensor<T> node_states;      // object-GNN output fed to the object head
  Tensor<T> edge_states;      // states fed to the predicate head
};

template <typename T>
class LeoModel {
 public:
  LeoModel(const ModelConfig& cfg, std::uint64_t seed) : config_(cfg) {
    cfg.encoder.validate();
    Initializer init(stream_seed(seed, "init"));
    const std::size_t d = cfg.dim();
    encoder_ = FeatureEncoder<T>(store_, init, cfg.encoder, cfg.num_object_classes);
    link_ = LinkPredictor<T>(store_, init, d, cfg.link);
    linegnn_ = LineGnn<T>(store_, init, d, cfg.linegnn_layers);
    objgnn_ = ObjectGnn<T>(store_, init, d, cfg.objgnn_layers, cfg.incidence);
    heads_ = Heads<T>(store_, init, d, cfg.num_object_classes, cfg.num_predicates);
  }

  LeoModel(const LeoModel&) = delete;
  LeoModel& operator=(const LeoModel&) = delete;
  LeoModel(LeoModel&&) = default;
  LeoModel& operator=(LeoModel&&) = default;

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const FeatureEncoder<T>& encoder() const { return encoder_; }
  const LinkPredictor<T>& link_predictor() const { return link_; }
  const LineGnn<T>& linegnn() const { return linegnn_; }
  const ObjectGnn<T>& objgnn() const { return objgnn_; }
  const Heads<T>& heads() const { return heads_; }

  /// Object features f_i and edge features f_ij. Edge features always come from
  /// the point-set encoder; node features switch to label embeddings in PredCls.
  std::pair<Tensor<T>, Tensor<T>> initial_features(const SceneInputs& in, Task task) const {
    auto raw = to_tensor<T>(in.descriptors, in.num_objects, in.descriptor_dim);
    auto geo = encoder_.encode_points(raw);
    auto nodes = feature_mode(task) == FeatureMode::kLabelEmbedding ? encoder_.label_embedding(in.classes) : geo;
    return {nodes, encoder_.init_edge_features(geo, in.graph)};
  }

  LinkScores<T> predict_links(const SceneInputs& in, const Tensor<T>& node_features) const {
    auto g = link_.geometric_embed(to_tensor<T>(in.geometry, in.num_objects, kBoxGeometrySize));
    return link_.classify(link_.link_features(node_features, g, in.graph));
  }

  /// Stage-1 forward: only what the link loss needs.
  LinkScores<T> forward_link(const SceneInputs& in, Task task) const {
    return predict_links(in, initial_features(in, task).first);
  }

  PipelineOutputs<T> forward(const SceneInputs& in, Task task, const IntegrationConfig& integ) const {
    PipelineOutputs<T> out;
    std::tie(out.node_features, out.edge_features) = initial_features(in, task);
    out.link = predict_links(in, out.node_features);
    const std::size_t e = in.graph.num_edges();
    switch (integ.effective_link_mode()) {
      case LinkMode::kFc: out.edge_weights = Tensor<T>::full({e}, T(1)); break;
      case LinkMode::kLp: out.edge_weights = out.link.weight; break;
      case LinkMode::kGt: {
        std::vector<T> w(e);
        for (std::size_t i = 0; i < e; ++i) w[i] = static_cast<T>(in.link_targets[i]);
        out.edge_weights = Tensor<T>::vector(std::move(w));
        break;
      }
    }
    out.weighted_edges = weight_edges(out.edge_features, out.edge_weights);

    switch (integ.strategy) {
      case Strategy::kPre: {
        auto refined = linegnn_(out.weighted_edges, in.line_graph);
        std::tie(out.node_states, out.edge_states) = objgnn_(out.node_features, refined, in.graph);
        break;
      }
      case Strategy::kPost: {
        Tensor<T> edges;
        std::tie(out.node_states, edges) = objgnn_(out.node_features, out.weighted_edges, in.graph);
        out.edge_states = linegnn_(edges, in.line_graph);
        break;
      }
      case Strategy::kNone:
      case Strategy::kNoneLp:
        std::tie(out.node_states, out.edge_states) = objgnn_(out.node_features, out.weighted_edges, in.graph);
        break;
    }
    out.object_probs = heads_.classify_objects(out.node_states);
    out.predicate_probs = heads_.classify_predicates(out.edge_states);
    return out;
  }

 private:
  ModelConfig config_;
  ParamStore<T> store_;
  FeatureEncoder<T> encoder_;
  LinkPredictor<T> link_;
  LineGnn<T> linegnn_;
  ObjectGnn<T> objgnn_;
  Heads<T> heads_;
};

// ---------------------------------------------------------------------------
// Losses

struct LossConfig {
  double gamma = 2.0;  // object and predicate focal loss
  double alpha = 1.0;
  double link_gamma = 2.0;
  double link_alpha_positive = 0.25;
};

template <typename T>
struct LossTerms {
  Tensor<T> total;
  double object = 0;
  double predicate = 0;
  double link = 0;
  std::size_t num_terms = 0;
};

/// (edge, class) supervision rows: every ground-truth predicate of an edge, or
/// the "none" class for edges without one.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> predicate_rows(const SceneInputs& in,
                                                                                     std::size_t none_class) {
  std::vector<std::size_t> edges, classes;
  for (std::size_t e = 0; e < in.edge_predicates.size(); ++e) {
    if (in.edge_predicates[e].empty()) {
      edges.push_back(e);
      classes.push_back(none_class);
    }
    for (int p : in.edge_predicates[e]) {
      edges.push_back(e);
      classes.push_back(static_cast<std::size_t>(p));
    }
  }
  return {edges, classes};
}

/// Predicate focal loss averaged over all supervision rows.
template <typename T>
Tensor<T> predicate_loss(const Tensor<T>& probs, const SceneInputs& in, std::size_t none_class,
                         const LossConfig& cfg) {
  const auto [edges, classes] = predicate_rows(in, none_class);
  if (edges.empty()) return Tensor<T>::scalar(T(0));
  const T alpha[1] = {static_cast<T>(cfg.alpha)};
  return mean(focal_loss<T>(gather_rows(probs, edges), classes, static_cast<T>(cfg.gamma), alpha));
}

template <typename T>
Tensor<T> object_loss(const Tensor<T>& probs, const SceneInputs& in, const LossConfig& cfg) {
  const T alpha[1] = {static_cast<T>(cfg.alpha)};
  return mean(focal_loss<T>(probs, in.classes, static_cast<T>(cfg.gamma), alpha));
}

/// L_total = L_obj + L_pred + L_link (L_obj omitted in PredCls).
template <typename T>
LossTerms<T> total_loss(const PipelineOutputs<T>& out, const SceneInputs& in, Task task, std::size_t none_class,
                        const LossConfig& cfg = {}) {
  LossTerms<T> terms;
  auto pred = predicate_loss(out.predicate_probs, in, none_class, cfg);
  auto link = link_loss(out.link.probs, in.link_targets, cfg.link_gamma, cfg.link_alpha_positive);
  terms.predicate = static_cast<double>(pred.item());
  terms.link = static_cast<double>(link.item());
  terms.total = add(pred, link);
  terms.num_terms = 2;
  if (task == Task::kSgCls) {
    auto obj = object_loss(out.object_probs, in, cfg);
    terms.object = static_cast<double>(obj.item());
    terms.total = add(terms.total, obj);
    terms.num_terms = 3;
  }
  return terms;
}

}  // namespace leo
