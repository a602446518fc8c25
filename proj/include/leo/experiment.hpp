#pragma once

// Whole-run helpers: prepare scenes, train both stages, evaluate a split.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "leo/evaluate.hpp"
#include "leo/metrics.hpp"
#include "leo/model.hpp"
#include "leo/scene.hpp"
#include "leo/training.hpp"

namespace leo {

/// Copies `base` with class counts taken from the vocabulary.
inline ModelConfig model_config_for(const Vocabulary& vocab, ModelConfig base) {
  base.num_object_classes = vocab.objects.size();
  base.num_predicates = vocab.predicates.size();
  return base;
}

inline std::vector<SceneInputs> prepare_all(std::span<const Scene> scenes, const ModelConfig& mc) {
  std::vector<SceneInputs> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(prepare_inputs(s, mc));
  return out;
}

struct EvalSummary {
  RecallReport report;
  LinkSummary link;
  std::vector<SceneEvaluation> scenes;
};

template <typename T>
EvalSummary evaluate_split(const LeoModel<T>& model, std::span<const SceneInputs> scenes, Task task,
                           const IntegrationConfig& integ, std::span<const std::size_t> ks) {
  EvalSummary s;
  s.scenes = evaluate_scenes(model, scenes, task, integ);
  const auto trip = triplet_scenes(s.scenes);
  s.report = evaluate_recalls(eval_task(task), trip, ks);
  s.link = summarize_links(s.scenes);
  return s;
}

/// Trains a fresh model through both stages (skipping a stage with zero epochs).
template <typename T = float>
LeoModel<T> train_model(const ModelConfig& mc, const TrainConfig& tc, std::span<const SceneInputs> train,
                        std::span<const SceneInputs> val = {},
                        const typename Trainer<T>::EpochHook& hook = {}) {
  LeoModel<T> model(mc, tc.seed);
  Trainer<T> trainer(model, tc, train, val);
  trainer.run_stage(1, hook);
  trainer.run_stage(2, hook);
  return model;
}

}  // namespace leo
