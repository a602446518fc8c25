#pragma once

// Rule-based synthetic scene generator. Boxes are placed in a square room by
// rejection sampling; relationships are then derived from box geometry alone.
//
// Axes: x grows to the right, y grows away from the viewer (behind), z is up.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "leo/error.hpp"
#include "leo/rng.hpp"
#include "leo/scene.hpp"

namespace leo::synth {

enum class Predicate {
  kLeft,
  kRight,
  kFront,
  kBehind,
  kAbove,
  kBelow,
  kStandingOn,
  kAttachedTo,
  kCloseBy,
  kSameAs,
  kAlignedWith,
};

inline constexpr std::array<const char*, 11> kPredicateNames = {
    "left",       "right",       "front",    "behind",  "above",       "below",
    "standing on", "attached to", "close by", "same as", "aligned with"};

inline std::string predicate_name(Predicate p) { return kPredicateNames[static_cast<int>(p)]; }

inline Predicate predicate_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kPredicateNames.size(); ++i) {
    std::string canon = kPredicateNames[i];
    std::string dashed = canon;
    std::replace(dashed.begin(), dashed.end(), ' ', '-');
    std::string under = canon;
    std::replace(under.begin(), under.end(), ' ', '_');
    if (name == canon || name == dashed || name == under) return static_cast<Predicate>(i);
  }
  throw ValidationError("unknown synthetic predicate: " + name);
}

// Rule thresholds (meters).
inline constexpr double kDirectionMargin = 0.05;
inline constexpr double kCloseGap = 0.3;
inline constexpr double kContactGap = 0.02;
inline constexpr double kSupportOverlap = 0.5;
inline constexpr double kSameVolumeTolerance = 0.2;
inline constexpr double kAlignDistance = 0.1;
inline constexpr double kAlignInterior = 0.1;  // projection must fall in [0.1, 0.9] of the segment
inline constexpr double kPointNoise = 0.005;

struct ClassSpec {
  std::string name;
  Vec3 min_size;
  Vec3 max_size;
  bool can_support = false;  // other objects may stand on it
  bool small = false;        // may be placed on a supporter
};

inline std::vector<ClassSpec> default_classes() {
  return {
      {"table", {0.8, 0.6, 0.70}, {1.4, 0.9, 0.80}, true, false},
      {"chair", {0.4, 0.4, 0.80}, {0.5, 0.5, 1.00}, false, false},
      {"cabinet", {0.8, 0.4, 0.90}, {1.2, 0.6, 1.20}, true, false},
      {"box", {0.2, 0.2, 0.15}, {0.4, 0.4, 0.35}, true, true},
      {"lamp", {0.15, 0.15, 0.30}, {0.25, 0.25, 0.50}, false, true},
      {"monitor", {0.40, 0.05, 0.30}, {0.60, 0.15, 0.45}, false, true},
      {"book", {0.15, 0.10, 0.03}, {0.25, 0.20, 0.06}, false, true},
      {"plant", {0.20, 0.20, 0.30}, {0.35, 0.35, 0.80}, false, true},
      {"shelf", {0.6, 0.25, 1.2}, {1.0, 0.40, 1.8}, false, false},
      {"bin", {0.25, 0.25, 0.30}, {0.35, 0.35, 0.50}, false, false},
  };
}

inline std::vector<Predicate> all_predicates() {
  std::vector<Predicate> out;
  for (std::size_t i = 0; i < kPredicateNames.size(); ++i) out.push_back(static_cast<Predicate>(i));
  return out;
}

struct SynthConfig {
  std::size_t num_scenes = 100;
  int min_objects = 4;
  int max_objects = 9;
  double room_size = 4.0;
  int min_points = 48;
  int max_points = 96;
  double p_stack = 0.3;    // small object placed on a supporter
  double p_attach = 0.15;  // placed in face contact with an existing object
  double p_align = 0.2;    // placed between two existing floor objects
  int max_attempts = 1000;
  std::vector<ClassSpec> classes = default_classes();
  std::vector<Predicate> predicates = all_predicates();  // enabled rules, in vocabulary order
  std::string scan_prefix = "synth";
};

inline Vocabulary vocabulary(const SynthConfig& cfg) {
  Vocabulary v;
  for (const auto& c : cfg.classes) v.objects.push_back(c.name);
  for (auto p : cfg.predicates) v.predicates.push_back(predicate_name(p));
  return v;
}

// ---------------------------------------------------------------------------
// Geometry helpers

/// Euclidean distance between two boxes (0 when they touch or overlap).
inline double box_gap(const Box& a, const Box& b) {
  double s = 0;
  for (int ax = 0; ax < 3; ++ax) {
    const double d = std::max({0.0, a.min[ax] - b.max[ax], b.min[ax] - a.max[ax]});
    s += d * d;
  }
  return std::sqrt(s);
}

inline double axis_overlap(const Box& a, const Box& b, int ax) {
  return std::min(a.max[ax], b.max[ax]) - std::max(a.min[ax], b.min[ax]);
}

inline bool boxes_intersect(const Box& a, const Box& b) {
  for (int ax = 0; ax < 3; ++ax)
    if (axis_overlap(a, b, ax) <= 0) return false;
  return true;
}

/// a rests on b: a's bottom within the contact gap of b's top, and at least
/// half of a's footprint over b.
inline bool standing_on(const Box& a, const Box& b) {
  if (std::abs(a.min[2] - b.max[2]) > kContactGap) return false;
  const double ox = std::max(0.0, axis_overlap(a, b, 0));
  const double oy = std::max(0.0, axis_overlap(a, b, 1));
  const double footprint = a.length() * a.width();
  return footprint > 0 && ox * oy >= kSupportOverlap * footprint;
}

/// Side faces within the contact gap along x or y, with positive overlap on the other axes.
inline bool side_contact(const Box& a, const Box& b) {
  for (int ax = 0; ax < 2; ++ax) {
    const double sep = std::max(a.min[ax] - b.max[ax], b.min[ax] - a.max[ax]);
    if (sep < 0 || sep > kContactGap) continue;
    bool others = true;
    for (int o = 0; o < 3; ++o)
      if (o != ax && axis_overlap(a, b, o) <= 0) others = false;
    if (others) return true;
  }
  return false;
}

/// Some third centroid lies within 0.1 m (floor plane) of the segment between
/// the two centroids, away from both ends.
inline bool aligned_with(const std::vector<ObjectInstance>& objs, std::size_t i, std::size_t j) {
  const Vec3 a = objs[i].bbox.center();
  const Vec3 b = objs[j].bbox.center();
  const double dx = b[0] - a[0], dy = b[1] - a[1];
  const double len2 = dx * dx + dy * dy;
  if (len2 <= 0) return false;
  for (std::size_t k = 0; k < objs.size(); ++k) {
    if (k == i || k == j) continue;
    const Vec3 c = objs[k].bbox.center();
    const double t = ((c[0] - a[0]) * dx + (c[1] - a[1]) * dy) / len2;
    if (t < kAlignInterior || t > 1 - kAlignInterior) continue;
    const double px = a[0] + t * dx - c[0], py = a[1] + t * dy - c[1];
    if (std::sqrt(px * px + py * py) < kAlignDistance) return true;
  }
  return false;
}

/// Whether predicate p holds for the ordered pair (i, j).
inline bool holds(Predicate p, const std::vector<ObjectInstance>& objs, std::size_t i, std::size_t j) {
  const Box& a = objs[i].bbox;
  const Box& b = objs[j].bbox;
  const Vec3 ca = a.center(), cb = b.center();
  const bool near = box_gap(a, b) < kCloseGap;
  switch (p) {
    case Predicate::kLeft: return near && ca[0] < cb[0] - kDirectionMargin;
    case Predicate::kRight: return near && ca[0] > cb[0] + kDirectionMargin;
    case Predicate::kFront: return near && ca[1] < cb[1] - kDirectionMargin;
    case Predicate::kBehind: return near && ca[1] > cb[1] + kDirectionMargin;
    case Predicate::kAbove: return near && ca[2] > cb[2] + kDirectionMargin;
    case Predicate::kBelow: return near && ca[2] < cb[2] - kDirectionMargin;
    case Predicate::kStandingOn: return standing_on(a, b);
    case Predicate::kAttachedTo:
      return !standing_on(a, b) && !standing_on(b, a) && side_contact(a, b) && a.volume() < b.volume();
    case Predicate::kCloseBy: return near;
    case Predicate::kSameAs: {
      if (objs[i].class_id != objs[j].class_id) return false;
      const double va = a.volume(), vb = b.volume();
      return std::abs(va - vb) <= kSameVolumeTolerance * std::max(va, vb);
    }
    case Predicate::kAlignedWith: return aligned_with(objs, i, j);
  }
  return false;
}

/// All relationships implied by geometry, ordered by (subject, object, predicate id).
inline std::vector<Relationship> derive_relationships(const std::vector<ObjectInstance>& objs,
                                                      const std::vector<Predicate>& enabled) {
  std::vector<Relationship> out;
  for (std::size_t i = 0; i < objs.size(); ++i)
    for (std::size_t j = 0; j < objs.size(); ++j) {
      if (i == j) continue;
      for (std::size_t p = 0; p < enabled.size(); ++p)
        if (holds(enabled[p], objs, i, j)) out.push_back({objs[i].id, objs[j].id, static_cast<int>(p)});
    }
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

namespace detail {

inline Vec3 sample_size(const ClassSpec& c, SplitMix64& rng) {
  return {rng.uniform(c.min_size[0], c.max_size[0]), rng.uniform(c.min_size[1], c.max_size[1]),
          rng.uniform(c.min_size[2], c.max_size[2])};
}

inline Box box_at(double cx, double cy, double z0, const Vec3& size) {
  return {{cx - size[0] / 2, cy - size[1] / 2, z0}, {cx + size[0] / 2, cy + size[1] / 2, z0 + size[2]}};
}

/// Points on the box surface (faces chosen by area) with Gaussian jitter,
/// clamped back into the box.
inline std::vector<Vec3> sample_surface(const Box& b, int count, SplitMix64& rng) {
  const Vec3 e = b.extents();
  const double areas[3] = {e[1] * e[2], e[0] * e[2], e[0] * e[1]};  // faces normal to x, y, z
  const double total = areas[0] + areas[1] + areas[2];
  std::vector<Vec3> pts;
  pts.reserve(count);
  for (int n = 0; n < count; ++n) {
    double u = rng.uniform() * total;
    int axis = 0;
    while (axis < 2 && u >= areas[axis]) u -= areas[axis++];
    Vec3 p;
    for (int a = 0; a < 3; ++a) p[a] = rng.uniform(b.min[a], b.max[a]);
    p[axis] = rng.uniform() < 0.5 ? b.min[axis] : b.max[axis];
    for (int a = 0; a < 3; ++a) {
      p[a] += kPointNoise * rng.normal();
      p[a] = std::clamp(p[a], b.min[a], b.max[a]);
    }
    pts.push_back(p);
  }
  return pts;
}

inline bool free_spot(const Box& cand, const std::vector<ObjectInstance>& placed, double room) {
  if (cand.min[0] < 0 || cand.min[1] < 0 || cand.max[0] > room || cand.max[1] > room) return false;
  for (const auto& o : placed)
    if (boxes_intersect(cand, o.bbox)) return false;
  return true;
}

}  // namespace detail

inline Scene generate_scene(const SynthConfig& cfg, const std::string& scan_id, SplitMix64& rng) {
  if (cfg.classes.empty()) throw ValidationError("synthetic config has no classes");
  if (cfg.min_objects < 1 || cfg.max_objects < cfg.min_objects) throw ValidationError("bad object count range");
  Scene scene;
  scene.scan_id = scan_id;
  const int count = static_cast<int>(rng.range(cfg.min_objects, cfg.max_objects));
  for (int n = 0; n < count; ++n) {
    const auto cls = static_cast<int>(rng.below(cfg.classes.size()));
    const ClassSpec& spec = cfg.classes[cls];
    const Vec3 size = detail::sample_size(spec, rng);
    const double mode = rng.uniform();
    Box chosen;
    bool ok = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !ok; ++attempt) {
      Box cand;
      std::vector<std::size_t> supporters, floor_objs;
      for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        if (cfg.classes[scene.objects[i].class_id].can_support) supporters.push_back(i);
        if (scene.objects[i].bbox.min[2] == 0.0) floor_objs.push_back(i);
      }
      // The first few attempts honour the drawn placement mode; later ones fall back to the floor.
      const bool honour_mode = attempt < cfg.max_attempts / 2;
      if (honour_mode && spec.small && mode < cfg.p_stack && !supporters.empty()) {
        const Box& s = scene.objects[supporters[rng.below(supporters.size())]].bbox;
        const double hx = std::max(0.0, s.length() - size[0]) / 2;
        const double hy = std::max(0.0, s.width() - size[1]) / 2;
        const Vec3 c = s.center();
        cand = detail::box_at(c[0] + rng.uniform(-hx, hx), c[1] + rng.uniform(-hy, hy), s.max[2], size);
      } else if (honour_mode && mode < cfg.p_stack + cfg.p_attach && !floor_objs.empty()) {
        const Box& s = scene.objects[floor_objs[rng.below(floor_objs.size())]].bbox;
        const int side = static_cast<int>(rng.below(4));
        const double gap = rng.uniform(0.0, kContactGap * 0.5);
        const Vec3 c = s.center();
        double cx = c[0], cy = c[1];
        if (side < 2) {
          cx = side == 0 ? s.min[0] - gap - size[0] / 2 : s.max[0] + gap + size[0] / 2;
          cy += rng.uniform(-s.width() / 2, s.width() / 2) * 0.8;
        } else {
          cy = side == 2 ? s.min[1] - gap - size[1] / 2 : s.max[1] + gap + size[1] / 2;
          cx += rng.uniform(-s.length() / 2, s.length() / 2) * 0.8;
        }
        cand = detail::box_at(cx, cy, 0.0, size);
      } else if (honour_mode && mode < cfg.p_stack + cfg.p_attach + cfg.p_align && floor_objs.size() >= 2) {
        const std::size_t ia = rng.below(floor_objs.size());
        std::size_t ib = rng.below(floor_objs.size() - 1);
        if (ib >= ia) ++ib;
        const std::size_t a = floor_objs[ia], b = floor_objs[ib];
        const Vec3 ca = scene.objects[a].bbox.center(), cb = scene.objects[b].bbox.center();
        const double t = rng.uniform(0.3, 0.7);
        cand = detail::box_at(ca[0] + t * (cb[0] - ca[0]) + rng.uniform(-0.03, 0.03),
                              ca[1] + t * (cb[1] - ca[1]) + rng.uniform(-0.03, 0.03), 0.0, size);
      } else {
        const double cx = rng.uniform(size[0] / 2, cfg.room_size - size[0] / 2);
        const double cy = rng.uniform(size[1] / 2, cfg.room_size - size[1] / 2);
        cand = detail::box_at(cx, cy, 0.0, size);
      }
      if (detail::free_spot(cand, scene.objects, cfg.room_size)) {
        chosen = cand;
        ok = true;
      }
    }
    if (!ok) {
      throw ValidationError("synthetic placement failed after " + std::to_string(cfg.max_attempts) +
                            " attempts in " + scan_id);
    }
    ObjectInstance obj;
    obj.id = n;
    obj.class_id = cls;
    obj.bbox = chosen;
    obj.points = detail::sample_surface(chosen, static_cast<int>(rng.range(cfg.min_points, cfg.max_points)), rng);
    scene.objects.push_back(std::move(obj));
  }
  scene.relationships = derive_relationships(scene.objects, cfg.predicates);
  return scene;
}

inline std::string scan_name(const std::string& prefix, std::size_t index) {
  std::ostringstream os;
  os << prefix << '_' << std::setw(5) << std::setfill('0') << index;
  return os.str();
}

/// Scenes drawn from one seeded stream; the same (config, seed) always yields the same scenes.
inline std::vector<Scene> generate(const SynthConfig& cfg, std::uint64_t seed) {
  auto rng = make_stream(seed, "data");
  std::vector<Scene> out;
  out.reserve(cfg.num_scenes);
  for (std::size_t s = 0; s < cfg.num_scenes; ++s) out.push_back(generate_scene(cfg, scan_name(cfg.scan_prefix, s), rng));
  return out;
}

}  // namespace leo::synth
