#pragma once

// Scene-graph evaluation: triplet scoring, graph-constrained and unconstrained
// recall@k, per-predicate mean recall, and link ROC-AUC.
//
// Conventions:
//  * candidates are ranked by score descending, ties broken by
//    (subject, object, predicate) ascending;
//  * constrained mode keeps only each ordered pair's best candidate before ranking;
//  * recall is computed per scene on that scene's top-k and averaged over scenes
//    with non-empty ground truth;
//  * mean recall pools hits per predicate class across all scenes, then averages
//    over classes present in the ground truth.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "leo/error.hpp"
#include "leo/scene.hpp"

namespace leo {

struct TripletPrediction {
  std::int64_t subject_id = 0;
  std::int64_t object_id = 0;
  int predicate_id = 0;
  double score = 0;
  int subject_class = 0;
  int object_class = 0;
};

struct GtTriplet {
  std::int64_t subject_id = 0;
  std::int64_t object_id = 0;
  int predicate_id = 0;
  int subject_class = 0;
  int object_class = 0;

  auto operator<=>(const GtTriplet&) const = default;
};

struct EvalScene {
  std::vector<TripletPrediction> predictions;
  std::vector<GtTriplet> gt;
};

/// Probabilities produced for one scene, detached from the autodiff machinery.
struct SceneScores {
  std::vector<std::int64_t> object_ids;
  std::vector<int> gt_classes;
  std::size_t num_object_classes = 0;
  std::vector<double> object_probs;  // K x num_object_classes
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::size_t num_predicate_columns = 0;  // includes the trailing "none" column
  std::vector<double> predicate_probs;    // E x num_predicate_columns
};

enum class EvalTask { kPredCls, kSgCls };

inline std::vector<GtTriplet> gt_triplets(const Scene& scene) {
  std::set<GtTriplet> uniq;
  for (const auto& r : scene.relationships) {
    const auto& s = scene.objects[scene.index_of(r.subject_id)];
    const auto& o = scene.objects[scene.index_of(r.object_id)];
    uniq.insert({r.subject_id, r.object_id, r.predicate_id, s.class_id, o.class_id});
  }
  return {uniq.begin(), uniq.end()};
}

/// Every (pair, predicate) candidate except "none".
/// PredCls: score = s_pred[p], classes from ground truth.
/// SGCls:   score = max s_obj(subject) * s_pred[p] * max s_obj(object), argmax classes.
inline std::vector<TripletPrediction> score_triplets(const SceneScores& s, EvalTask task) {
  const std::size_t k = s.object_ids.size();
  const std::size_t c = s.num_object_classes;
  if (s.predicate_probs.size() != s.edges.size() * s.num_predicate_columns || s.num_predicate_columns < 1) {
    throw ShapeError("score_triplets: predicate table does not match edges");
  }
  std::vector<int> cls(k);
  std::vector<double> conf(k, 1.0);
  for (std::size_t i = 0; i < k; ++i) {
    if (task == EvalTask::kPredCls) {
      cls[i] = s.gt_classes.at(i);
      continue;
    }
    if (s.object_probs.size() != k * c) throw ShapeError("score_triplets: object table does not match objects");
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (s.object_probs[i * c + j] > s.object_probs[i * c + best]) best = j;
    cls[i] = static_cast<int>(best);
    conf[i] = s.object_probs[i * c + best];
  }
  std::vector<TripletPrediction> out;
  const std::size_t preds = s.num_predicate_columns - 1;
  out.reserve(s.edges.size() * preds);
  for (std::size_t e = 0; e < s.edges.size(); ++e) {
    const auto [i, j] = s.edges[e];
    for (std::size_t p = 0; p < preds; ++p) {
      const double ps = s.predicate_probs[e * s.num_predicate_columns + p];
      out.push_back({s.object_ids[i], s.object_ids[j], static_cast<int>(p), conf[i] * ps * conf[j], cls[i], cls[j]});
    }
  }
  return out;
}

/// Candidates in rank order; constrained keeps each ordered pair's best candidate only.
inline std::vector<TripletPrediction> rank_triplets(std::vector<TripletPrediction> preds, bool constrained) {
  std::sort(preds.begin(), preds.end(), [](const TripletPrediction& a, const TripletPrediction& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.subject_id, a.object_id, a.predicate_id) < std::tie(b.subject_id, b.object_id, b.predicate_id);
  });
  if (!constrained) return preds;
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  std::vector<TripletPrediction> out;
  for (const auto& p : preds)
    if (seen.insert({p.subject_id, p.object_id}).second) out.push_back(p);
  return out;
}

inline bool matches(const TripletPrediction& p, const GtTriplet& g) {
  return p.subject_id == g.subject_id && p.object_id == g.object_id && p.predicate_id == g.predicate_id &&
         p.subject_class == g.subject_class && p.object_class == g.object_class;
}

/// Which ground-truth triplets of the scene appear in its top-k.
inline std::vector<bool> recalled(const EvalScene& scene, std::size_t k, bool constrained) {
  if (k < 1) throw ValidationError("recall@k needs k >= 1");
  const auto ranked = rank_triplets(scene.predictions, constrained);
  const std::size_t n = std::min(k, ranked.size());
  std::vector<bool> hit(scene.gt.size(), false);
  for (std::size_t g = 0; g < scene.gt.size(); ++g)
    for (std::size_t r = 0; r < n && !hit[g]; ++r) hit[g] = matches(ranked[r], scene.gt[g]);
  return hit;
}

/// Recall of a single scene; NaN-free, returns 0 hits / 0 total for empty ground truth.
inline std::pair<std::size_t, std::size_t> scene_recall(const EvalScene& scene, std::size_t k, bool constrained) {
  const auto hit = recalled(scene, k, constrained);
  return {static_cast<std::size_t>(std::count(hit.begin(), hit.end(), true)), hit.size()};
}

inline double recall_at_k(std::span<const EvalScene> scenes, std::size_t k, bool constrained) {
  double acc = 0;
  std::size_t counted = 0;
  for (const auto& s : scenes) {
    const auto [hits, total] = scene_recall(s, k, constrained);
    if (total == 0) continue;
    acc += static_cast<double>(hits) / static_cast<double>(total);
    ++counted;
  }
  return counted == 0 ? 0.0 : acc / static_cast<double>(counted);
}

struct PredicateRecall {
  int predicate_id = 0;
  std::size_t hits = 0;
  std::size_t total = 0;
  double recall() const { return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total); }
};

inline std::vector<PredicateRecall> per_predicate_recall(std::span<const EvalScene> scenes, std::size_t k,
                                                         bool constrained) {
  std::map<int, PredicateRecall> table;
  for (const auto& s : scenes) {
    const auto hit = recalled(s, k, constrained);
    for (std::size_t g = 0; g < s.gt.size(); ++g) {
      auto& row = table[s.gt[g].predicate_id];
      row.predicate_id = s.gt[g].predicate_id;
      ++row.total;
      if (hit[g]) ++row.hits;
    }
  }
  std::vector<PredicateRecall> out;
  for (const auto& [id, row] : table) out.push_back(row);
  return out;
}

inline double mean_recall_at_k(std::span<const EvalScene> scenes, std::size_t k, bool constrained) {
  const auto table = per_predicate_recall(scenes, k, constrained);
  if (table.empty()) return 0.0;
  double acc = 0;
  for (const auto& row : table) acc += row.recall();
  return acc / static_cast<double>(table.size());
}

/// ROC-AUC by the Mann-Whitney rank statistic; tied scores share their average rank.
inline double link_auc(std::span<const double> scores, std::span<const int> targets) {
  if (scores.size() != targets.size()) throw ShapeError("link_auc: scores and targets differ in length");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
    i = j + 1;
  }
  double pos = 0, neg = 0, rank_sum = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i]) {
      pos += 1;
      rank_sum += rank[i];
    } else {
      neg += 1;
    }
  }
  if (pos == 0 || neg == 0) throw ValidationError("link_auc needs at least one positive and one negative");
  return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

// ---------------------------------------------------------------------------
// Reports

inline const char* task_name(EvalTask t) { return t == EvalTask::kPredCls ? "predcls" : "sgcls"; }

struct RecallReport {
  struct Entry {
    std::string task;
    std::string metric;  // r | ngc_r | m_r
    std::size_t k = 0;
    double value = 0;
  };
  struct PredicateRow {
    std::string task;
    bool constrained = true;
    std::size_t k = 0;
    PredicateRecall recall;
  };

  std::vector<Entry> entries;
  std::vector<PredicateRow> per_predicate;

  double value(const std::string& task, const std::string& metric, std::size_t k) const {
    for (const auto& e : entries)
      if (e.task == task && e.metric == metric && e.k == k) return e.value;
    throw ValidationError("no " + metric + "@" + std::to_string(k) + " for " + task);
  }

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "task,metric,k,value\n";
    for (const auto& e : entries) os << e.task << ',' << e.metric << ',' << e.k << ',' << e.value << '\n';
    return os.str();
  }

  std::string per_predicate_csv(const std::vector<std::string>& names = {}) const {
    std::ostringstream os;
    os.precision(17);
    os << "task,constrained,k,predicate_id,predicate,hits,total,recall\n";
    for (const auto& r : per_predicate) {
      const auto id = static_cast<std::size_t>(r.recall.predicate_id);
      os << r.task << ',' << (r.constrained ? 1 : 0) << ',' << r.k << ',' << r.recall.predicate_id << ','
         << (id < names.size() ? names[id] : std::string()) << ',' << r.recall.hits << ',' << r.recall.total << ','
         << r.recall.recall() << '\n';
    }
    return os.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& e : entries) j[e.task][e.metric][std::to_string(e.k)] = e.value;
    return j;
  }
};

inline RecallReport evaluate_recalls(EvalTask task, std::span<const EvalScene> scenes, std::span<const std::size_t> ks) {
  RecallReport rep;
  const std::string t = task_name(task);
  for (std::size_t k : ks) {
    rep.entries.push_back({t, "r", k, recall_at_k(scenes, k, true)});
    rep.entries.push_back({t, "ngc_r", k, recall_at_k(scenes, k, false)});
    rep.entries.push_back({t, "m_r", k, mean_recall_at_k(scenes, k, true)});
    for (bool constrained : {true, false})
      for (const auto& row : per_predicate_recall(scenes, k, constrained))
        rep.per_predicate.push_back({t, constrained, k, row});
  }
  return rep;
}

inline std::vector<std::size_t> default_ks() { return {1, 3, 5, 10, 20, 50, 100}; }

}  // namespace leo
