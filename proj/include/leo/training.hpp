#pragma once

// Optimizer, learning-rate schedule and the two-stage training loop.
//
// Stage 1 fits the encoder and link predictor on the link loss alone.
// Stage 2 optimizes the full objective with a fresh optimizer; the link module
// keeps training. One optimizer step per scene, scenes visited in an order
// drawn from the "shuffle" stream.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "leo/error.hpp"
#include "leo/evaluate.hpp"
#include "leo/model.hpp"
#include "leo/rng.hpp"

namespace leo {

struct TrainConfig {
  std::size_t stage1_epochs = 40;
  std::size_t stage2_epochs = 50;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double decay_factor = 0.7;
  std::size_t decay_every = 10;
  double lr_min = 1e-8;
  std::uint64_t seed = 0;
  Task task = Task::kPredCls;
  IntegrationConfig integration;
  LossConfig loss;
  std::vector<std::size_t> eval_ks = {1, 3, 5, 10};

  void validate() const {
    if (!(lr > 0) || !(lr_min > 0) || lr < lr_min) throw ValidationError("train: need lr >= lr_min > 0");
    if (weight_decay < 0) throw ValidationError("train: weight_decay must be >= 0");
    if (!(decay_factor > 0) || decay_factor > 1) throw ValidationError("train: decay_factor must be in (0, 1]");
    if (decay_every == 0) throw ValidationError("train: decay_every must be positive");
    if (!(loss.gamma >= 0) || !(loss.link_gamma >= 0)) throw ValidationError("train: focal gamma must be >= 0");
    if (!(loss.link_alpha_positive > 0 && loss.link_alpha_positive < 1)) {
      throw ValidationError("train: link alpha must be in (0, 1)");
    }
    for (auto k : eval_ks)
      if (k == 0) throw ValidationError("train: eval k must be >= 1");
  }
};

/// lr = max(lr0 * decay^floor(epoch / every), lr_min), epoch counted within the stage.
inline double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  const double steps = static_cast<double>(epoch / cfg.decay_every);
  return std::max(cfg.lr * std::pow(cfg.decay_factor, steps), cfg.lr_min);
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0;
};

template <typename T>
struct AdamState {
  std::uint64_t step = 0;
  std::map<std::string, std::vector<T>> m;
  std::map<std::string, std::vector<T>> v;

  bool operator==(const AdamState&) const = default;
};

/// Adam with bias correction, followed by decoupled decay p -= lr * wd * p.
/// Only parameters whose names are in the optimizer's set are touched.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig cfg, const ParamStore<T>& store, const std::function<bool(const std::string&)>& include)
      : cfg_(cfg) {
    for (const auto& p : store.params()) {
      if (!include(p.name)) continue;
      names_.push_back(p.name);
      state_.m[p.name].assign(p.tensor.numel(), T(0));
      state_.v[p.name].assign(p.tensor.numel(), T(0));
    }
  }

  const std::vector<std::string>& names() const { return names_; }
  const AdamState<T>& state() const { return state_; }
  const AdamConfig& config() const { return cfg_; }

  void set_state(AdamState<T> s) {
    for (const auto& n : names_) {
      if (!s.m.count(n) || !s.v.count(n) || s.m.at(n).size() != state_.m.at(n).size() ||
          s.v.at(n).size() != state_.v.at(n).size()) {
        throw ValidationError("optimizer state does not match parameter " + n);
      }
    }
    if (s.m.size() != names_.size() || s.v.size() != names_.size()) {
      throw ValidationError("optimizer state has parameters this optimizer does not train");
    }
    state_ = std::move(s);
  }

  void step(ParamStore<T>& store, double lr) {
    for (const auto& name : names_) {
      const auto& t = store.get(name);
      if (!t.has_grad()) continue;
      for (T g : t.grad())
        if (!std::isfinite(static_cast<double>(g))) throw NumericError("non-finite gradient in parameter " + name);
    }
    ++state_.step;
    const double t = static_cast<double>(state_.step);
    const double c1 = 1.0 - std::pow(cfg_.beta1, t);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t);
    for (auto& p : store.params()) {
      auto mit = state_.m.find(p.name);
      if (mit == state_.m.end()) continue;
      auto& m = mit->second;
      auto& v = state_.v.at(p.name);
      auto values = p.tensor.mutable_values();
      const bool has = p.tensor.has_grad();
      const auto grad = p.tensor.grad();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = has ? static_cast<double>(grad[i]) : 0.0;
        const double mi = cfg_.beta1 * static_cast<double>(m[i]) + (1 - cfg_.beta1) * g;
        const double vi = cfg_.beta2 * static_cast<double>(v[i]) + (1 - cfg_.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        double x = static_cast<double>(values[i]);
        x -= lr * (mi / c1) / (std::sqrt(vi / c2) + cfg_.eps);
        x -= lr * cfg_.weight_decay * x;
        values[i] = static_cast<T>(x);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<std::string> names_;
  AdamState<T> state_;
};

/// Parameters trained in stage 1: the encoder and the link predictor.
inline bool stage1_param(const std::string& name) {
  return name.rfind("encoder.", 0) == 0 || name.rfind("link.", 0) == 0;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochLog {
  int stage = 0;
  std::size_t epoch = 0;
  double lr = 0;
  double loss = 0;  // means over the epoch's scenes
  double object_loss = 0;
  double predicate_loss = 0;
  double link_loss = 0;
  LinkSummary link;  // on the validation split, or the training split if none
  std::map<std::string, double> metrics;  // validation recalls, stage 2 only

  static std::string csv_header() {
    return "stage,epoch,lr,loss,object_loss,predicate_loss,link_loss,link_accuracy,link_auc,metrics";
  }
  std::string csv_row() const {
    std::ostringstream os;
    os.precision(17);
    os << stage << ',' << epoch << ',' << lr << ',' << loss << ',' << object_loss << ',' << predicate_loss << ','
       << link_loss << ',' << link.accuracy << ',' << link.auc << ',';
    bool first = true;
    for (const auto& [k, v] : metrics) {
      os << (first ? "" : ";") << k << '=' << v;
      first = false;
    }
    return os.str();
  }
};

/// Everything besides parameter values needed to continue a run exactly.
struct TrainState {
  int stage = 1;
  std::size_t epochs_done = 0;  // completed epochs within `stage`
  std::uint64_t shuffle_state = 0;
  AdamState<float> optimizer;
};

template <typename T>
class Trainer {
 public:
  using EpochHook = std::function<void(const EpochLog&, const Trainer&)>;

  Trainer(LeoModel<T>& model, TrainConfig cfg, std::span<const SceneInputs> train,
          std::span<const SceneInputs> val = {})
      : model_(model), cfg_(std::move(cfg)), train_(train), val_(val) {
    cfg_.validate();
    if (train_.empty()) throw ValidationError("training split is empty");
    shuffle_ = make_stream(cfg_.seed, "shuffle");
    start_stage(1);
  }

  const TrainConfig& config() const { return cfg_; }
  LeoModel<T>& model() const { return model_; }
  int stage() const { return stage_; }
  std::size_t epochs_done() const { return epochs_done_; }

  TrainState state() const {
    TrainState s;
    s.stage = stage_;
    s.epochs_done = epochs_done_;
    s.shuffle_state = shuffle_.state();
    for (const auto& [k, v] : opt_.state().m) s.optimizer.m[k].assign(v.begin(), v.end());
    for (const auto& [k, v] : opt_.state().v) s.optimizer.v[k].assign(v.begin(), v.end());
    s.optimizer.step = opt_.state().step;
    return s;
  }

  void restore(const TrainState& s) {
    if (s.stage != 1 && s.stage != 2) throw ValidationError("checkpoint stage must be 1 or 2");
    start_stage(s.stage);
    epochs_done_ = s.epochs_done;
    shuffle_.set_state(s.shuffle_state);
    AdamState<T> a;
    a.step = s.optimizer.step;
    for (const auto& [k, v] : s.optimizer.m) a.m[k].assign(v.begin(), v.end());
    for (const auto& [k, v] : s.optimizer.v) a.v[k].assign(v.begin(), v.end());
    if (a.step > 0 || !a.m.empty()) opt_.set_state(std::move(a));
  }

  /// Runs the remaining epochs of `stage` (entering it fresh if the trainer is
  /// in an earlier stage). `stop_after` caps the total completed epochs of the
  /// stage, for interrupting and resuming.
  void run_stage(int stage, const EpochHook& hook = {}, std::size_t stop_after = SIZE_MAX) {
    if (stage != 1 && stage != 2) throw ValidationError("stage must be 1 or 2");
    if (stage < stage_) throw ValidationError("cannot return to stage 1 after stage 2 has started");
    if (stage > stage_) start_stage(stage);
    const std::size_t total = stage == 1 ? cfg_.stage1_epochs : cfg_.stage2_epochs;
    while (epochs_done_ < total && epochs_done_ < stop_after) {
      auto log = run_epoch();
      if (hook) hook(log, *this);
    }
  }

  /// One pass over the training split in shuffled order.
  EpochLog run_epoch() {
    EpochLog log;
    log.stage = stage_;
    log.epoch = epochs_done_;
    log.lr = lr_schedule(epochs_done_, cfg_);
    std::vector<std::size_t> order(train_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, shuffle_);
    for (std::size_t idx : order) {
      const auto& in = train_[idx];
      model_.params().zero_grad();
      Tape<T> tape;
      typename Tape<T>::Scope scope(tape);
      if (stage_ == 1) {
        const auto links = model_.forward_link(in, cfg_.task);
        auto loss = link_loss(links.probs, in.link_targets, cfg_.loss.link_gamma, cfg_.loss.link_alpha_positive);
        log.link_loss += static_cast<double>(loss.item());
        log.loss += static_cast<double>(loss.item());
        if (loss.requires_grad()) tape.backward(loss);
      } else {
        const auto out = model_.forward(in, cfg_.task, cfg_.integration);
        auto terms = total_loss(out, in, cfg_.task, model_.config().none_class(), cfg_.loss);
        log.object_loss += terms.object;
        log.predicate_loss += terms.predicate;
        log.link_loss += terms.link;
        log.loss += static_cast<double>(terms.total.item());
        if (terms.total.requires_grad()) tape.backward(terms.total);
      }
      opt_.step(model_.params(), log.lr);
    }
    const double n = static_cast<double>(train_.size());
    log.loss /= n;
    log.object_loss /= n;
    log.predicate_loss /= n;
    log.link_loss /= n;
    const auto eval_on = val_.empty() ? train_ : val_;
    const auto evals = evaluate_scenes(model_, eval_on, cfg_.task, cfg_.integration);
    log.link = summarize_links(evals);
    if (stage_ == 2) {
      const auto scenes = triplet_scenes(evals);
      const auto rep = evaluate_recalls(eval_task(cfg_.task), scenes, cfg_.eval_ks);
      for (const auto& e : rep.entries) log.metrics[e.metric + "@" + std::to_string(e.k)] = e.value;
    }
    ++epochs_done_;
    return log;
  }

 private:
  void start_stage(int stage) {
    stage_ = stage;
    epochs_done_ = 0;
    AdamConfig ac;
    ac.weight_decay = cfg_.weight_decay;
    if (stage == 1) {
      opt_ = Adam<T>(ac, model_.params(), stage1_param);
    } else {
      opt_ = Adam<T>(ac, model_.params(), [](const std::string&) { return true; });
    }
  }

  LeoModel<T>& model_;
  TrainConfig cfg_;
  std::span<const SceneInputs> train_;
  std::span<const SceneInputs> val_;
  SplitMix64 shuffle_;
  int stage_ = 1;
  std::size_t epochs_done_ = 0;
  Adam<T> opt_;
};

}  // namespace leo
