#pragma once

// JSON forms of the configuration structs and the run configuration used by
// the command-line tool. Readers are strict: unknown keys are errors, missing
// keys keep their defaults.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "leo/error.hpp"
#include "leo/model.hpp"
#include "leo/synth.hpp"
#include "leo/training.hpp"

namespace leo {

// ---------------------------------------------------------------------------
// Enum names

inline std::string to_string(Task t) { return t == Task::kPredCls ? "predcls" : "sgcls"; }
inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kPre: return "pre";
    case Strategy::kPost: return "post";
    case Strategy::kNone: return "none";
    case Strategy::kNoneLp: return "none+lp";
  }
  return "?";
}
inline std::string to_string(LinkMode m) {
  switch (m) {
    case LinkMode::kFc: return "fc";
    case LinkMode::kLp: return "lp";
    case LinkMode::kGt: return "gt";
  }
  return "?";
}
inline std::string to_string(Adjacency a) { return a == Adjacency::kSameSource ? "same_source" : "shared_any"; }
inline std::string to_string(Incidence i) { return i == Incidence::kBoth ? "both" : "outgoing"; }

inline Task parse_task(const std::string& s) {
  if (s == "predcls") return Task::kPredCls;
  if (s == "sgcls") return Task::kSgCls;
  throw ValidationError("unknown task '" + s + "' (predcls|sgcls)");
}
inline Strategy parse_strategy(const std::string& s) {
  if (s == "pre") return Strategy::kPre;
  if (s == "post") return Strategy::kPost;
  if (s == "none") return Strategy::kNone;
  if (s == "none+lp") return Strategy::kNoneLp;
  throw ValidationError("unknown strategy '" + s + "' (pre|post|none|none+lp)");
}
inline LinkMode parse_link_mode(const std::string& s) {
  if (s == "fc") return LinkMode::kFc;
  if (s == "lp") return LinkMode::kLp;
  if (s == "gt") return LinkMode::kGt;
  throw ValidationError("unknown link mode '" + s + "' (fc|lp|gt)");
}
inline Adjacency parse_adjacency(const std::string& s) {
  if (s == "same_source") return Adjacency::kSameSource;
  if (s == "shared_any") return Adjacency::kSharedAny;
  throw ValidationError("unknown adjacency '" + s + "' (same_source|shared_any)");
}
inline Incidence parse_incidence(const std::string& s) {
  if (s == "both") return Incidence::kBoth;
  if (s == "outgoing") return Incidence::kOutgoing;
  throw ValidationError("unknown incidence '" + s + "' (both|outgoing)");
}

// ---------------------------------------------------------------------------
// Strict object reader

class JsonReader {
 public:
  JsonReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError(where_ + ": expected an object");
  }

  template <typename V>
  void get(const char* key, V& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<V>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where_ + "." + key + ": " + e.what());
    }
  }

  template <typename V, typename Parse>
  void get_enum(const char* key, V& out, Parse parse) {
    std::string s;
    seen_.insert(key);
    if (!j_.contains(key)) return;
    get(key, s);
    out = parse(s);
  }

  /// Sub-object, or nullptr if absent.
  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ValidationError(where_ + ": unknown key '" + k + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// Model

inline nlohmann::json to_json(const ModelConfig& c) {
  return {
      {"num_object_classes", c.num_object_classes},
      {"num_predicates", c.num_predicates},
      {"feature_dim", c.encoder.feature_dim},
      {"histogram_bins", c.encoder.histogram_bins},
      {"geom_dim", c.link.geom_dim},
      {"link_dim", c.link.link_dim},
      {"linegnn_layers", c.linegnn_layers},
      {"objgnn_layers", c.objgnn_layers},
      {"adjacency", to_string(c.adjacency)},
      {"incidence", to_string(c.incidence)},
  };
}

inline void read_into(const nlohmann::json& j, ModelConfig& c, const std::string& where = "model") {
  JsonReader r(j, where);
  r.get("num_object_classes", c.num_object_classes);
  r.get("num_predicates", c.num_predicates);
  r.get("feature_dim", c.encoder.feature_dim);
  r.get("histogram_bins", c.encoder.histogram_bins);
  r.get("geom_dim", c.link.geom_dim);
  r.get("link_dim", c.link.link_dim);
  r.get("linegnn_layers", c.linegnn_layers);
  r.get("objgnn_layers", c.objgnn_layers);
  r.get_enum("adjacency", c.adjacency, parse_adjacency);
  r.get_enum("incidence", c.incidence, parse_incidence);
  r.finish();
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  read_into(j, c);
  return c;
}

// ---------------------------------------------------------------------------
// Training

inline nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"stage1_epochs", c.stage1_epochs},
      {"stage2_epochs", c.stage2_epochs},
      {"lr", c.lr},
      {"weight_decay", c.weight_decay},
      {"decay_factor", c.decay_factor},
      {"decay_every", c.decay_every},
      {"lr_min", c.lr_min},
      {"seed", c.seed},
      {"task", to_string(c.task)},
      {"strategy", to_string(c.integration.strategy)},
      {"link_mode", to_string(c.integration.link_mode)},
      {"focal_gamma", c.loss.gamma},
      {"focal_alpha", c.loss.alpha},
      {"link_gamma", c.loss.link_gamma},
      {"link_alpha_positive", c.loss.link_alpha_positive},
      {"eval_ks", c.eval_ks},
  };
}

inline void read_into(const nlohmann::json& j, TrainConfig& c, const std::string& where = "train") {
  JsonReader r(j, where);
  r.get("stage1_epochs", c.stage1_epochs);
  r.get("stage2_epochs", c.stage2_epochs);
  r.get("lr", c.lr);
  r.get("weight_decay", c.weight_decay);
  r.get("decay_factor", c.decay_factor);
  r.get("decay_every", c.decay_every);
  r.get("lr_min", c.lr_min);
  r.get("seed", c.seed);
  r.get_enum("task", c.task, parse_task);
  r.get_enum("strategy", c.integration.strategy, parse_strategy);
  r.get_enum("link_mode", c.integration.link_mode, parse_link_mode);
  r.get("focal_gamma", c.loss.gamma);
  r.get("focal_alpha", c.loss.alpha);
  r.get("link_gamma", c.loss.link_gamma);
  r.get("link_alpha_positive", c.loss.link_alpha_positive);
  r.get("eval_ks", c.eval_ks);
  r.finish();
}

// ---------------------------------------------------------------------------
// Synthetic data

inline nlohmann::json to_json(const synth::SynthConfig& c) {
  std::vector<std::string> preds;
  for (auto p : c.predicates) preds.push_back(synth::predicate_name(p));
  return {
      {"num_scenes", c.num_scenes}, {"min_objects", c.min_objects}, {"max_objects", c.max_objects},
      {"room_size", c.room_size},   {"min_points", c.min_points},   {"max_points", c.max_points},
      {"p_stack", c.p_stack},       {"p_attach", c.p_attach},       {"p_align", c.p_align},
      {"max_attempts", c.max_attempts}, {"predicates", preds},      {"scan_prefix", c.scan_prefix},
  };
}

inline void read_into(const nlohmann::json& j, synth::SynthConfig& c, const std::string& where = "data") {
  JsonReader r(j, where);
  r.get("num_scenes", c.num_scenes);
  r.get("min_objects", c.min_objects);
  r.get("max_objects", c.max_objects);
  r.get("room_size", c.room_size);
  r.get("min_points", c.min_points);
  r.get("max_points", c.max_points);
  r.get("p_stack", c.p_stack);
  r.get("p_attach", c.p_attach);
  r.get("p_align", c.p_align);
  r.get("max_attempts", c.max_attempts);
  std::vector<std::string> preds;
  r.get("predicates", preds);
  if (!preds.empty()) {
    c.predicates.clear();
    for (const auto& p : preds) c.predicates.push_back(synth::predicate_from_name(p));
  }
  r.get("scan_prefix", c.scan_prefix);
  r.finish();
}

// ---------------------------------------------------------------------------
// Run configuration

/// A dataset directory produced by gen-data: scenes/, vocab.json, splits.json.
struct RunConfig {
  std::string data_dir = "data";
  std::string output_dir = "run";
  ModelConfig model;
  TrainConfig train;
  synth::SynthConfig synth;  // used by gen-data

  nlohmann::json to_json() const {
    return {
        {"data_dir", data_dir},
        {"output_dir", output_dir},
        {"model", leo::to_json(model)},
        {"train", leo::to_json(train)},
        {"synth", leo::to_json(synth)},
    };
  }

  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig c;
    JsonReader r(j, "config");
    r.get("data_dir", c.data_dir);
    r.get("output_dir", c.output_dir);
    if (const auto* m = r.child("model")) read_into(*m, c.model, "model");
    if (const auto* t = r.child("train")) read_into(*t, c.train, "train");
    if (const auto* s = r.child("synth")) read_into(*s, c.synth, "synth");
    r.finish();
    c.model.encoder.validate();
    c.train.validate();
    return c;
  }
};

}  // namespace leo
