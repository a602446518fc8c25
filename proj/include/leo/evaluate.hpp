#pragma once

// Running a trained model over prepared scenes and turning its outputs into
// metric inputs: triplet candidates, link scores and per-class decisions.

#include <chrono>
#include <cstdint>
#include <span>
#include <vector>

#include "leo/metrics.hpp"
#include "leo/model.hpp"

namespace leo {

inline EvalTask eval_task(Task t) { return t == Task::kPredCls ? EvalTask::kPredCls : EvalTask::kSgCls; }

/// Ground-truth triplets of a prepared scene, one per (edge, predicate).
inline std::vector<GtTriplet> gt_triplets(const SceneInputs& in) {
  std::vector<GtTriplet> out;
  for (std::size_t e = 0; e < in.graph.num_edges(); ++e) {
    const auto [i, j] = in.graph.edge(e);
    for (int p : in.edge_predicates[e])
      out.push_back({in.object_ids[i], in.object_ids[j], p, static_cast<int>(in.classes[i]),
                     static_cast<int>(in.classes[j])});
  }
  return out;
}

template <typename T>
SceneScores scene_scores(const PipelineOutputs<T>& out, const SceneInputs& in) {
  SceneScores s;
  s.object_ids = in.object_ids;
  for (auto c : in.classes) s.gt_classes.push_back(static_cast<int>(c));
  s.num_object_classes = out.object_probs.dim(1);
  for (T v : out.object_probs.values()) s.object_probs.push_back(static_cast<double>(v));
  s.edges = in.graph.edges();
  s.num_predicate_columns = out.predicate_probs.dim(1);
  for (T v : out.predicate_probs.values()) s.predicate_probs.push_back(static_cast<double>(v));
  return s;
}

/// Everything evaluation needs from one forward pass over one scene.
struct SceneEvaluation {
  EvalScene triplets;
  std::vector<double> link_scores;
  std::vector<int> link_targets;
  std::vector<int> predicted_predicate;  // argmax per edge, C_pred means "none"
  double seconds = 0;
};

template <typename T>
SceneEvaluation evaluate_scene(const LeoModel<T>& model, const SceneInputs& in, Task task,
                               const IntegrationConfig& integ) {
  SceneEvaluation ev;
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = model.forward(in, task, integ);
  ev.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ev.triplets.predictions = score_triplets(scene_scores(out, in), eval_task(task));
  ev.triplets.gt = gt_triplets(in);
  for (T v : out.link.weight.values()) ev.link_scores.push_back(static_cast<double>(v));
  ev.link_targets = in.link_targets;
  const std::size_t cols = out.predicate_probs.dim(1);
  const auto probs = out.predicate_probs.values();
  for (std::size_t e = 0; e < in.graph.num_edges(); ++e) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (probs[e * cols + c] > probs[e * cols + best]) best = c;
    ev.predicted_predicate.push_back(static_cast<int>(best));
  }
  return ev;
}

template <typename T>
std::vector<SceneEvaluation> evaluate_scenes(const LeoModel<T>& model, std::span<const SceneInputs> scenes, Task task,
                                             const IntegrationConfig& integ) {
  std::vector<SceneEvaluation> out;
  out.reserve(scenes.size());
  for (const auto& in : scenes) out.push_back(evaluate_scene(model, in, task, integ));
  return out;
}

inline std::vector<EvalScene> triplet_scenes(std::span<const SceneEvaluation> evals) {
  std::vector<EvalScene> out;
  for (const auto& e : evals) out.push_back(e.triplets);
  return out;
}

struct LinkSummary {
  double accuracy = 0;  // threshold 0.5
  double auc = 0.5;     // 0.5 when only one target class is present
  std::size_t edges = 0;
};

inline LinkSummary summarize_links(std::span<const SceneEvaluation> evals) {
  std::vector<double> scores;
  std::vector<int> targets;
  for (const auto& e : evals) {
    scores.insert(scores.end(), e.link_scores.begin(), e.link_scores.end());
    targets.insert(targets.end(), e.link_targets.begin(), e.link_targets.end());
  }
  LinkSummary s;
  s.edges = scores.size();
  if (scores.empty()) return s;
  std::size_t correct = 0, positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    correct += ((scores[i] > 0.5) == (targets[i] != 0)) ? 1 : 0;
    positives += targets[i] ? 1 : 0;
  }
  s.accuracy = static_cast<double>(correct) / static_cast<double>(scores.size());
  if (positives > 0 && positives < scores.size()) s.auc = link_auc(scores, targets);
  return s;
}

/// Per-edge decision "argmax predicate == p" against "p is among the edge's
/// ground-truth predicates", scored as balanced accuracy (mean of the
/// true-positive and true-negative rates). Returns the positive rate alone if
/// there are no negatives, and vice versa.
inline double class_balanced_accuracy(std::span<const SceneEvaluation> evals, std::span<const SceneInputs> scenes,
                                      int predicate) {
  if (evals.size() != scenes.size()) throw ShapeError("class accuracy: evaluations and scenes differ in count");
  std::size_t tp = 0, pos = 0, tn = 0, neg = 0;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto& in = scenes[s];
    for (std::size_t e = 0; e < in.graph.num_edges(); ++e) {
      const auto& gt = in.edge_predicates[e];
      const bool truth = std::find(gt.begin(), gt.end(), predicate) != gt.end();
      const bool said = evals[s].predicted_predicate[e] == predicate;
      if (truth) {
        ++pos;
        tp += said ? 1 : 0;
      } else {
        ++neg;
        tn += said ? 0 : 1;
      }
    }
  }
  if (pos == 0 && neg == 0) throw ValidationError("class accuracy: no edges");
  if (pos == 0) return static_cast<double>(tn) / static_cast<double>(neg);
  if (neg == 0) return static_cast<double>(tp) / static_cast<double>(pos);
  return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) + static_cast<double>(tn) / static_cast<double>(neg));
}

}  // namespace leo
