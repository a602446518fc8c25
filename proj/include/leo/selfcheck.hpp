#pragma once

// Built-in verification: gradient checks for every differentiable operation
// and the whole pipeline, the line-graph construction against a brute-force
// enumeration, and the ranking metrics against an exhaustive oracle.

#include <chrono>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "leo/gradcheck.hpp"
#include "leo/line_graph.hpp"
#include "leo/metrics.hpp"
#include "leo/model.hpp"
#include "leo/nn.hpp"
#include "leo/rng.hpp"
#include "leo/synth.hpp"
#include "leo/tensor.hpp"

namespace leo {

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0;  // error or mismatch count, depending on the check
  double limit = 0;
  std::string detail;
};

namespace selfcheck {

inline Tensor<double> random_tensor(Shape shape, SplitMix64& rng, double lo = -1, double hi = 1) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>(std::move(shape), std::move(v));
}

/// Values bounded away from zero, for kinked operations.
inline Tensor<double> off_kink_tensor(Shape shape, SplitMix64& rng) {
  auto t = random_tensor(std::move(shape), rng, 0.1, 1.0);
  for (auto& x : t.mutable_values())
    if (rng.uniform() < 0.5) x = -x;
  return t;
}

/// Scalar <out, R> with R drawn from a fixed seed, so every output element
/// contributes with a distinct weight.
inline Tensor<double> project(const Tensor<double>& out, std::uint64_t seed = 99) {
  SplitMix64 rng(seed);
  std::vector<double> w(out.numel());
  for (auto& x : w) x = rng.uniform(-1, 1);
  return sum(mul(out, Tensor<double>(out.shape(), std::move(w))));
}

using LossFn = std::function<Tensor<double>(std::vector<Tensor<double>>&)>;

struct OpCase {
  std::string name;
  std::vector<Tensor<double>> inputs;
  LossFn loss;
};

inline std::vector<OpCase> op_cases(std::uint64_t seed) {
  SplitMix64 rng(seed);
  auto r = [&](Shape s) { return random_tensor(std::move(s), rng); };
  std::vector<OpCase> cases;
  using V = std::vector<Tensor<double>>;
  cases.push_back({"matmul", {r({3, 4}), r({4, 2})}, [](V& x) { return project(matmul(x[0], x[1])); }});
  cases.push_back({"add", {r({3, 4}), r({3, 4})}, [](V& x) { return project(add(x[0], x[1])); }});
  cases.push_back({"sub", {r({3, 4}), r({3, 4})}, [](V& x) { return project(sub(x[0], x[1])); }});
  cases.push_back({"mul", {r({3, 4}), r({3, 4})}, [](V& x) { return project(mul(x[0], x[1])); }});
  cases.push_back({"scale", {r({5})}, [](V& x) { return project(scale(x[0], -1.7)); }});
  cases.push_back({"relu", {off_kink_tensor({3, 4}, rng)}, [](V& x) { return project(relu(x[0])); }});
  cases.push_back({"sigmoid", {r({3, 4})}, [](V& x) { return project(sigmoid(scale(x[0], 3.0))); }});
  cases.push_back({"tanh", {r({3, 4})}, [](V& x) { return project(tanh(scale(x[0], 2.0))); }});
  cases.push_back({"add_row", {r({3, 4}), r({4})}, [](V& x) { return project(add_row(x[0], x[1])); }});
  cases.push_back({"mul_rows", {r({3, 4}), r({3})}, [](V& x) { return project(mul_rows(x[0], x[1])); }});
  cases.push_back({"reshape", {r({3, 4})}, [](V& x) { return project(mul(reshape(x[0], {2, 6}), reshape(x[0], {2, 6}))); }});
  cases.push_back({"concat0", {r({2, 3}), r({1, 3})}, [](V& x) { return project(concat(x[0], x[1], 0)); }});
  cases.push_back({"concat1", {r({2, 3}), r({2, 2})}, [](V& x) { return project(concat(x[0], x[1], 1)); }});
  cases.push_back({"column", {r({4, 3})}, [](V& x) { return project(column(x[0], 2)); }});
  cases.push_back({"sum", {r({3, 4})}, [](V& x) { return mul(sum(x[0]), sum(x[0])); }});
  cases.push_back({"mean", {r({3, 4})}, [](V& x) { return mul(mean(x[0]), sum(x[0])); }});
  cases.push_back({"softmax_rows", {r({3, 4})}, [](V& x) { return project(softmax(x[0], 1)); }});
  cases.push_back({"softmax_cols", {r({3, 4})}, [](V& x) { return project(softmax(x[0], 0)); }});
  cases.push_back({"softmax_3d", {r({2, 3, 2})}, [](V& x) { return project(softmax(x[0], 1)); }});
  cases.push_back({"segment_softmax", {r({6})}, [](V& x) {
                     const std::size_t seg[6] = {0, 2, 0, 1, 2, 0};
                     return project(segment_softmax(x[0], seg, 3));
                   }});
  cases.push_back({"layer_norm", {r({3, 5}), r({5}), r({5})},
                   [](V& x) { return project(layer_norm(x[0], x[1], x[2])); }});
  cases.push_back({"gather_rows", {r({4, 3})}, [](V& x) {
                     const std::size_t idx[5] = {3, 0, 3, 1, 1};
                     return project(gather_rows(x[0], idx));
                   }});
  cases.push_back({"scatter_add_rows", {r({5, 3})}, [](V& x) {
                     const std::size_t idx[5] = {2, 0, 2, 1, 0};
                     return project(scatter_add_rows(x[0], idx, 4));
                   }});
  cases.push_back({"focal_loss", {r({4, 3})}, [](V& x) {
                     const std::size_t t[4] = {0, 2, 1, 2};
                     const double alpha[4] = {0.25, 0.75, 0.5, 1.0};
                     return project(focal_loss<double>(softmax(x[0], 1), t, 2.0, alpha));
                   }});
  cases.push_back({"focal_loss_gamma0", {r({4, 3})}, [](V& x) {
                     const std::size_t t[4] = {1, 0, 2, 2};
                     const double alpha[1] = {1.0};
                     return mean(focal_loss<double>(softmax(x[0], 1), t, 0.0, alpha));
                   }});
  {
    ParamStore<double> store;
    Initializer init(seed + 1);
    GruCell<double> gru(store, init, "gru", 4);
    V in = {r({3, 4}), r({3, 4})};
    for (const auto& p : store.params()) in.push_back(p.tensor);
    cases.push_back({"gru_cell", in, [gru](V& x) { return project(gru(x[0], x[1])); }});
  }
  {
    ParamStore<double> store;
    Initializer init(seed + 2);
    Linear<double> lin(store, init, "lin", 4, 3);
    V in = {r({2, 4})};
    for (const auto& p : store.params()) in.push_back(p.tensor);
    cases.push_back({"linear", in, [lin](V& x) { return project(lin(x[0])); }});
  }
  return cases;
}

/// Small three-object scene used for end-to-end checks.
inline Scene tiny_scene(std::uint64_t seed) {
  synth::SynthConfig cfg;
  cfg.num_scenes = 1;
  cfg.min_objects = 3;
  cfg.max_objects = 3;
  cfg.min_points = 16;
  cfg.max_points = 24;
  cfg.room_size = 1.5;
  return synth::generate(cfg, seed).front();
}

inline ModelConfig tiny_model_config() {
  ModelConfig mc;
  mc.encoder.feature_dim = 8;
  mc.encoder.histogram_bins = 2;
  mc.link.geom_dim = 8;
  mc.link.link_dim = 8;
  return mc;
}

inline GradcheckResult pipeline_gradcheck(Task task, Strategy strategy, std::uint64_t seed, std::size_t stride = 1) {
  const auto mc = tiny_model_config();
  const auto scene = tiny_scene(seed);
  const auto in = prepare_inputs(scene, mc);
  LeoModel<double> model(mc, seed);
  IntegrationConfig integ;
  integ.strategy = strategy;
  std::vector<Tensor<double>> params;
  for (const auto& p : model.params().params()) params.push_back(p.tensor);
  return gradcheck(
      [&](std::vector<Tensor<double>>&) {
        const auto out = model.forward(in, task, integ);
        return total_loss(out, in, task, mc.none_class()).total;
      },
      params, 1e-7, stride);
}

// --- line graph ------------------------------------------------------------

/// Every ordered pair of distinct edges sharing a source object.
inline std::set<std::pair<std::size_t, std::size_t>> brute_force_adjacency(const PrimitiveGraph& g) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t a = 0; a < g.num_edges(); ++a)
    for (std::size_t b = 0; b < g.num_edges(); ++b)
      if (a != b && g.edge(a).first == g.edge(b).first) out.insert({a, b});
  return out;
}

inline std::set<std::pair<std::size_t, std::size_t>> adjacency_set(const LineGraph& lg) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t p = 0; p < lg.num_adjacencies(); ++p) out.insert({lg.receiver()[p], lg.sender()[p]});
  return out;
}

inline PrimitiveGraph random_graph(SplitMix64& rng, std::size_t max_objects) {
  const auto k = static_cast<std::size_t>(rng.range(2, static_cast<std::int64_t>(max_objects)));
  const double keep = rng.uniform(0.2, 0.9);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (i != j && rng.uniform() < keep) edges.push_back({i, j});
  return PrimitiveGraph::from_edges(k, edges);
}

// --- metrics ---------------------------------------------------------------

/// Whether candidate a is ranked ahead of b.
inline bool ahead(const TripletPrediction& a, const TripletPrediction& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
  if (a.object_id != b.object_id) return a.object_id < b.object_id;
  return a.predicate_id < b.predicate_id;
}

/// Recall hits of one scene by counting, for each ground-truth match, how many
/// eligible candidates precede it.
inline std::vector<bool> oracle_hits(const EvalScene& s, std::size_t k, bool constrained) {
  std::vector<bool> eligible(s.predictions.size(), true);
  if (constrained) {
    for (std::size_t a = 0; a < s.predictions.size(); ++a)
      for (std::size_t b = 0; b < s.predictions.size(); ++b) {
        const auto& pa = s.predictions[a];
        const auto& pb = s.predictions[b];
        if (a != b && pa.subject_id == pb.subject_id && pa.object_id == pb.object_id && ahead(pb, pa)) {
          eligible[a] = false;
        }
      }
  }
  std::vector<bool> hits;
  for (const auto& g : s.gt) {
    bool hit = false;
    for (std::size_t a = 0; a < s.predictions.size() && !hit; ++a) {
      if (!eligible[a] || !matches(s.predictions[a], g)) continue;
      std::size_t before = 0;
      for (std::size_t b = 0; b < s.predictions.size(); ++b)
        if (eligible[b] && b != a && ahead(s.predictions[b], s.predictions[a])) ++before;
      hit = before < k;
    }
    hits.push_back(hit);
  }
  return hits;
}

inline EvalScene random_fixture(SplitMix64& rng) {
  EvalScene s;
  const auto k = rng.range(2, 5);
  const auto preds = rng.range(1, 4);
  std::vector<int> cls;
  for (std::int64_t i = 0; i < k; ++i) cls.push_back(static_cast<int>(rng.below(3)));
  for (std::int64_t i = 0; i < k; ++i)
    for (std::int64_t j = 0; j < k; ++j) {
      if (i == j) continue;
      for (std::int64_t p = 0; p < preds; ++p) {
        // Coarse scores so that ties occur.
        const double score = static_cast<double>(rng.below(6)) / 5.0;
        s.predictions.push_back({i, j, static_cast<int>(p), score, cls[i], cls[j]});
        if (rng.uniform() < 0.2) s.gt.push_back({i, j, static_cast<int>(p), cls[i], cls[j]});
      }
    }
  return s;
}

}  // namespace selfcheck

/// Runs all checks. `full` checks every parameter in the end-to-end gradient
/// checks; otherwise a strided subset.
inline std::vector<CheckResult> run_selfcheck(std::uint64_t seed = 1, bool full = false) {
  using namespace selfcheck;
  std::vector<CheckResult> out;

  for (auto& c : op_cases(seed)) {
    const auto r = gradcheck(c.loss, c.inputs);
    out.push_back({"grad:" + c.name, r.max_rel_error <= 1e-4, r.max_rel_error, 1e-4, "worst " + r.worst});
  }
  const std::size_t stride = full ? 1 : 7;
  for (auto task : {Task::kPredCls, Task::kSgCls})
    for (auto strategy : {Strategy::kPre, Strategy::kPost, Strategy::kNone}) {
      const auto r = pipeline_gradcheck(task, strategy, seed, stride);
      const std::string name = std::string("grad:pipeline_") + (task == Task::kPredCls ? "predcls" : "sgcls") + "_" +
                               (strategy == Strategy::kPre ? "pre" : strategy == Strategy::kPost ? "post" : "none");
      out.push_back({name, r.max_rel_error <= 1e-3, r.max_rel_error, 1e-3,
                     std::to_string(r.checked) + " elements, " + std::to_string(r.reprobed) + " reprobed, worst " + r.worst});
    }

  {
    std::size_t bad = 0;
    for (std::size_t k = 2; k <= 12; ++k) {
      const auto g = PrimitiveGraph::complete(k);
      const auto lg = build_line_graph(g);
      if (lg.num_nodes() != k * (k - 1) || lg.num_adjacencies() != k * (k - 1) * (k - 2)) ++bad;
    }
    out.push_back({"line_graph:complete_counts", bad == 0, static_cast<double>(bad), 0, "K = 2..12"});
  }
  {
    SplitMix64 rng(stream_seed(seed, "selfcheck.line_graph"));
    std::size_t bad = 0;
    for (int t = 0; t < 50; ++t) {
      const auto g = random_graph(rng, 8);
      if (adjacency_set(build_line_graph(g)) != brute_force_adjacency(g)) ++bad;
    }
    out.push_back({"line_graph:brute_force", bad == 0, static_cast<double>(bad), 0, "50 random graphs"});
  }
  {
    SplitMix64 rng(stream_seed(seed, "selfcheck.metrics"));
    std::size_t bad = 0;
    for (int t = 0; t < 50; ++t) {
      std::vector<EvalScene> scenes;
      for (int s = 0; s < 3; ++s) scenes.push_back(random_fixture(rng));
      for (std::size_t k : {1, 2, 3, 5, 10, 20})
        for (bool constrained : {true, false}) {
          double acc = 0;
          std::size_t counted = 0;
          std::map<int, std::pair<std::size_t, std::size_t>> per_class;
          for (const auto& s : scenes) {
            const auto hits = oracle_hits(s, k, constrained);
            if (hits.empty()) continue;
            std::size_t h = 0;
            for (std::size_t g = 0; g < hits.size(); ++g) {
              h += hits[g] ? 1 : 0;
              auto& pc = per_class[s.gt[g].predicate_id];
              pc.first += hits[g] ? 1 : 0;
              ++pc.second;
            }
            acc += static_cast<double>(h) / static_cast<double>(hits.size());
            ++counted;
          }
          const double r = counted ? acc / static_cast<double>(counted) : 0.0;
          double mr = 0;
          for (const auto& [c, hv] : per_class) mr += static_cast<double>(hv.first) / static_cast<double>(hv.second);
          if (!per_class.empty()) mr /= static_cast<double>(per_class.size());
          if (r != recall_at_k(scenes, k, constrained) || mr != mean_recall_at_k(scenes, k, constrained)) ++bad;
        }
    }
    out.push_back({"metrics:exhaustive_oracle", bad == 0, static_cast<double>(bad), 0, "50 fixtures x 6 k x 2 modes"});
  }
  return out;
}

}  // namespace leo
