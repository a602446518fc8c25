#pragma once

// Scene data model: objects with point sets and axis-aligned boxes, ground-truth
// relationship triplets, the fully connected primitive graph, and JSON I/O.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "leo/error.hpp"

namespace leo {

using Vec3 = std::array<double, 3>;

inline constexpr double kMinBoxExtent = 1e-4;
inline constexpr double kContainmentSlack = 1e-6;

struct Box {
  Vec3 min{};
  Vec3 max{};

  Vec3 center() const {
    return {(min[0] + max[0]) / 2, (min[1] + max[1]) / 2, (min[2] + max[2]) / 2};
  }
  Vec3 extents() const { return {max[0] - min[0], max[1] - min[1], max[2] - min[2]}; }
  double length() const { return max[0] - min[0]; }  // x
  double width() const { return max[1] - min[1]; }   // y
  double height() const { return max[2] - min[2]; }  // z
  double volume() const { return length() * width() * height(); }

  /// Corner c has x from bit 0, y from bit 1, z from bit 2 (min when the bit is clear).
  std::array<Vec3, 8> corners() const {
    std::array<Vec3, 8> out{};
    for (int c = 0; c < 8; ++c) {
      out[c] = {(c & 1) ? max[0] : min[0], (c & 2) ? max[1] : min[1], (c & 4) ? max[2] : min[2]};
    }
    return out;
  }

  bool contains(const Vec3& p, double slack = kContainmentSlack) const {
    for (int a = 0; a < 3; ++a)
      if (p[a] < min[a] - slack || p[a] > max[a] + slack) return false;
    return true;
  }

  bool operator==(const Box&) const = default;
};

/// Tight box around the points; extents below 1e-4 m are padded symmetrically to 1e-4 m.
inline Box derive_bbox(const std::vector<Vec3>& points) {
  if (points.empty()) throw ValidationError("derive_bbox: empty point set");
  Box b{points[0], points[0]};
  for (const auto& p : points)
    for (int a = 0; a < 3; ++a) {
      b.min[a] = std::min(b.min[a], p[a]);
      b.max[a] = std::max(b.max[a], p[a]);
    }
  for (int a = 0; a < 3; ++a) {
    if (b.max[a] - b.min[a] < kMinBoxExtent) {
      const double c = (b.min[a] + b.max[a]) / 2;
      b.min[a] = c - kMinBoxExtent / 2;
      b.max[a] = c + kMinBoxExtent / 2;
    }
  }
  return b;
}

struct ObjectInstance {
  std::int64_t id = 0;
  int class_id = 0;
  std::vector<Vec3> points;  // may be empty when only a box is known
  Box bbox;

  bool operator==(const ObjectInstance&) const = default;
};

struct Relationship {
  std::int64_t subject_id = 0;
  std::int64_t object_id = 0;
  int predicate_id = 0;

  auto operator<=>(const Relationship&) const = default;
};

struct Scene {
  std::string scan_id;
  std::vector<ObjectInstance> objects;
  std::vector<Relationship> relationships;

  std::size_t size() const { return objects.size(); }

  /// Position of an object id in `objects`.
  std::size_t index_of(std::int64_t id) const {
    for (std::size_t i = 0; i < objects.size(); ++i)
      if (objects[i].id == id) return i;
    throw ValidationError("unknown object id " + std::to_string(id));
  }

  bool operator==(const Scene&) const = default;
};

struct Vocabulary {
  std::vector<std::string> objects;
  std::vector<std::string> predicates;

  bool operator==(const Vocabulary&) const = default;
};

/// Optional class-range limits applied during validation (negative = unchecked).
struct SceneLimits {
  int num_object_classes = -1;
  int num_predicates = -1;

  static SceneLimits from(const Vocabulary& v) {
    return {static_cast<int>(v.objects.size()), static_cast<int>(v.predicates.size())};
  }
};

inline void validate_scene(const Scene& scene, const SceneLimits& limits = {}) {
  std::set<std::int64_t> ids;
  for (const auto& o : scene.objects) {
    if (!ids.insert(o.id).second) {
      throw ValidationError("duplicate object id " + std::to_string(o.id) + " in " + scene.scan_id);
    }
    if (o.class_id < 0 || (limits.num_object_classes >= 0 && o.class_id >= limits.num_object_classes)) {
      throw ValidationError("object class id " + std::to_string(o.class_id) + " out of range");
    }
    if (!(o.bbox.volume() > 0)) {
      throw ValidationError("object " + std::to_string(o.id) + " has a non-positive box volume");
    }
    for (const auto& p : o.points) {
      if (!o.bbox.contains(p)) {
        throw ValidationError("object " + std::to_string(o.id) + " has a point outside its box");
      }
    }
  }
  for (const auto& r : scene.relationships) {
    if (!ids.count(r.subject_id) || !ids.count(r.object_id)) {
      throw ValidationError("relationship references a missing object id (" +
                            std::to_string(r.subject_id) + ", " + std::to_string(r.object_id) + ")");
    }
    if (r.subject_id == r.object_id) {
      throw ValidationError("relationship subject equals object (" + std::to_string(r.subject_id) + ")");
    }
    if (r.predicate_id < 0 || (limits.num_predicates >= 0 && r.predicate_id >= limits.num_predicates)) {
      throw ValidationError("predicate id " + std::to_string(r.predicate_id) + " out of range");
    }
  }
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline Vec3 vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace detail

inline nlohmann::json scene_to_json(const Scene& scene) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : scene.objects) {
    nlohmann::json jo;
    jo["id"] = o.id;
    jo["class_id"] = o.class_id;
    if (!o.points.empty()) jo["points"] = o.points;
    jo["bbox"] = {{"min", o.bbox.min}, {"max", o.bbox.max}};
    objects.push_back(std::move(jo));
  }
  nlohmann::json rels = nlohmann::json::array();
  for (const auto& r : scene.relationships) rels.push_back({r.subject_id, r.object_id, r.predicate_id});
  return {{"scan_id", scene.scan_id}, {"objects", std::move(objects)}, {"relationships", std::move(rels)}};
}

inline Scene scene_from_json(const nlohmann::json& j, const SceneLimits& limits = {}) {
  Scene s;
  try {
    s.scan_id = j.at("scan_id").get<std::string>();
    for (const auto& jo : j.at("objects")) {
      ObjectInstance o;
      o.id = jo.at("id").get<std::int64_t>();
      o.class_id = jo.at("class_id").get<int>();
      if (jo.contains("points"))
        for (const auto& p : jo["points"]) o.points.push_back(detail::vec3_from_json(p));
      if (jo.contains("bbox")) {
        o.bbox.min = detail::vec3_from_json(jo["bbox"].at("min"));
        o.bbox.max = detail::vec3_from_json(jo["bbox"].at("max"));
      } else if (!o.points.empty()) {
        o.bbox = derive_bbox(o.points);
      } else {
        throw ValidationError("object " + std::to_string(o.id) + " has neither points nor bbox");
      }
      s.objects.push_back(std::move(o));
    }
    for (const auto& jr : j.at("relationships")) {
      if (!jr.is_array() || jr.size() != 3) throw ValidationError("relationship must be [subj, obj, pred]");
      s.relationships.push_back({jr[0].get<std::int64_t>(), jr[1].get<std::int64_t>(), jr[2].get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed scene JSON: ") + e.what());
  }
  validate_scene(s, limits);
  return s;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("malformed JSON in " + path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out << text;
}

/// Scenes from a file holding one scene object or an array of them.
inline std::vector<Scene> load_scenes_json(const std::string& path, const SceneLimits& limits = {}) {
  const auto j = read_json_file(path);
  std::vector<Scene> out;
  if (j.is_array()) {
    for (const auto& js : j) out.push_back(scene_from_json(js, limits));
  } else {
    out.push_back(scene_from_json(j, limits));
  }
  return out;
}

inline Scene load_scene_json(const std::string& path, const SceneLimits& limits = {}) {
  auto scenes = load_scenes_json(path, limits);
  if (scenes.size() != 1) throw ValidationError(path + " holds " + std::to_string(scenes.size()) + " scenes");
  return std::move(scenes[0]);
}

inline std::string dump_json(const nlohmann::json& j) { return j.dump(1) + "\n"; }

inline void save_scene_json(const std::string& path, const Scene& scene) {
  write_text_file(path, dump_json(scene_to_json(scene)));
}

inline Vocabulary load_vocabulary(const std::string& path) {
  const auto j = read_json_file(path);
  try {
    return {j.at("objects").get<std::vector<std::string>>(), j.at("predicates").get<std::vector<std::string>>()};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed vocabulary " + path + ": " + e.what());
  }
}

inline void save_vocabulary(const std::string& path, const Vocabulary& v) {
  write_text_file(path, dump_json({{"objects", v.objects}, {"predicates", v.predicates}}));
}

// ---------------------------------------------------------------------------
// Primitive graph

/// Directed graph over object positions 0..K-1. Edges are kept in lexicographic
/// (source, target) order; edge_index() inverts the order.
class PrimitiveGraph {
 public:
  PrimitiveGraph() = default;

  static PrimitiveGraph complete(std::size_t k) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    if (k > 1) edges.reserve(k * (k - 1));
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        if (i != j) edges.emplace_back(i, j);
    return PrimitiveGraph(k, std::move(edges));
  }

  /// Arbitrary edge subset; duplicates and self-loops are rejected.
  static PrimitiveGraph from_edges(std::size_t k, std::vector<std::pair<std::size_t, std::size_t>> edges) {
    std::sort(edges.begin(), edges.end());
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const auto [i, j] = edges[e];
      if (i >= k || j >= k) throw ValidationError("edge endpoint out of range");
      if (i == j) throw ValidationError("self-loop in primitive graph");
      if (e > 0 && edges[e - 1] == edges[e]) throw ValidationError("duplicate edge in primitive graph");
    }
    return PrimitiveGraph(k, std::move(edges));
  }

  std::size_t num_objects() const { return k_; }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }
  std::pair<std::size_t, std::size_t> edge(std::size_t e) const { return edges_.at(e); }
  const std::vector<std::size_t>& sources() const { return src_; }
  const std::vector<std::size_t>& targets() const { return dst_; }

  std::optional<std::size_t> edge_index(std::size_t i, std::size_t j) const {
    if (i >= k_ || j >= k_) return std::nullopt;
    const auto v = index_[i * k_ + j];
    if (v < 0) return std::nullopt;
    return static_cast<std::size_t>(v);
  }

 private:
  PrimitiveGraph(std::size_t k, std::vector<std::pair<std::size_t, std::size_t>> edges)
      : k_(k), edges_(std::move(edges)), index_(k * k, -1) {
    src_.reserve(edges_.size());
    dst_.reserve(edges_.size());
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      src_.push_back(edges_[e].first);
      dst_.push_back(edges_[e].second);
      index_[edges_[e].first * k_ + edges_[e].second] = static_cast<long>(e);
    }
  }

  std::size_t k_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
  std::vector<std::size_t> src_, dst_;
  std::vector<long> index_;
};

inline PrimitiveGraph build_primitive_graph(const Scene& scene) {
  return PrimitiveGraph::complete(scene.size());
}

/// Ground-truth predicates per directed edge (multi-label), as predicate ids.
inline std::vector<std::vector<int>> edge_predicates(const Scene& scene, const PrimitiveGraph& graph) {
  std::vector<std::vector<int>> out(graph.num_edges());
  for (const auto& r : scene.relationships) {
    const auto e = graph.edge_index(scene.index_of(r.subject_id), scene.index_of(r.object_id));
    if (!e) continue;
    auto& labels = out[*e];
    if (std::find(labels.begin(), labels.end(), r.predicate_id) == labels.end()) labels.push_back(r.predicate_id);
  }
  for (auto& l : out) std::sort(l.begin(), l.end());
  return out;
}

}  // namespace leo
