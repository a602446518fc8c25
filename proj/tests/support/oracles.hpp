#pragma once

// Reference implementations the tests compare the library against. They share
// no code with the library: plain loops over std::vector<double>.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "leo/metrics.hpp"
#include "leo/rng.hpp"
#include "leo/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;

template <typename T>
Vec values(const leo::Tensor<T>& t) {
  return Vec(t.values().begin(), t.values().end());
}

inline Vec random_vec(std::size_t n, leo::SplitMix64& rng, double lo = -1, double hi = 1) {
  Vec v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

/// a [m x k] times b [k x n], row-major.
inline Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t k, std::size_t n) {
  Vec out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t t = 0; t < k; ++t) out[i * n + j] += a[i * k + t] * b[t * n + j];
  return out;
}

inline Vec softmax(const Vec& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  Vec out(x.size());
  double z = 0;
  for (std::size_t i = 0; i < x.size(); ++i) z += out[i] = std::exp(x[i] - mx);
  for (auto& v : out) v /= z;
  return out;
}

inline Vec layer_norm(const Vec& x, const Vec& gain, const Vec& bias, double eps = 1e-5) {
  double mu = 0;
  for (double v : x) mu += v;
  mu /= static_cast<double>(x.size());
  double var = 0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= static_cast<double>(x.size());
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gain[i] * (x[i] - mu) / std::sqrt(var + eps) + bias[i];
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double focal(double p_t, double gamma, double alpha) {
  p_t = std::max(p_t, 1e-7);
  return -alpha * std::pow(1.0 - p_t, gamma) * std::log(p_t);
}

/// x [1 x d] times w [d x d] for weights stored input-major.
inline Vec vecmat(const Vec& x, const Vec& w) { return matmul(x, w, 1, x.size(), w.size() / x.size()); }

struct Gru {
  Vec w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h;

  Vec operator()(const Vec& h, const Vec& m) const {
    const std::size_t d = h.size();
    const Vec mz = vecmat(m, w_z), hz = vecmat(h, u_z);
    const Vec mr = vecmat(m, w_r), hr = vecmat(h, u_r);
    Vec z(d), r(d), rh(d);
    for (std::size_t i = 0; i < d; ++i) {
      z[i] = sigmoid(mz[i] + hz[i] + b_z[i]);
      r[i] = sigmoid(mr[i] + hr[i] + b_r[i]);
      rh[i] = r[i] * h[i];
    }
    const Vec mh = vecmat(m, w_h), hh = vecmat(rh, u_h);
    Vec out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = (1 - z[i]) * h[i] + z[i] * std::tanh(mh[i] + hh[i] + b_h[i]);
    return out;
  }
};

/// Central differences of a scalar function of x.
inline Vec numeric_gradient(const std::function<double(const Vec&)>& f, Vec x, double h) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// Ordered pairs (e, f) of distinct edges with the same source and different targets.
inline std::set<std::pair<std::size_t, std::size_t>> same_source_pairs(
    const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t e = 0; e < edges.size(); ++e)
    for (std::size_t f = 0; f < edges.size(); ++f)
      if (e != f && edges[e].first == edges[f].first && edges[e].second != edges[f].second) out.insert({e, f});
  return out;
}

/// ROC-AUC as the fraction of (positive, negative) pairs ordered correctly, ties counting one half.
inline double pairwise_auc(const Vec& scores, const std::vector<int>& targets) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!targets[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (targets[j]) continue;
      pairs += 1;
      if (scores[i] > scores[j]) good += 1;
      if (scores[i] == scores[j]) good += 0.5;
    }
  }
  return good / pairs;
}

// --- ranking oracle ----------------------------------------------------------

/// Whether candidate a outranks b: higher score first, then (subject, object, predicate) ascending.
inline bool outranks(const leo::TripletPrediction& a, const leo::TripletPrediction& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
  if (a.object_id != b.object_id) return a.object_id < b.object_id;
  return a.predicate_id < b.predicate_id;
}

/// Candidates eligible for ranking: all, or each pair's single best under `outranks`.
inline std::vector<leo::TripletPrediction> eligible(const std::vector<leo::TripletPrediction>& preds,
                                                    bool constrained) {
  if (!constrained) return preds;
  std::vector<leo::TripletPrediction> out;
  for (const auto& p : preds) {
    bool best = true;
    for (const auto& q : preds)
      if (q.subject_id == p.subject_id && q.object_id == p.object_id && outranks(q, p)) best = false;
    if (best) out.push_back(p);
  }
  return out;
}

/// A ground-truth triplet is hit when a matching candidate has fewer than k eligible candidates ahead of it.
inline std::vector<bool> hits(const leo::EvalScene& scene, std::size_t k, bool constrained) {
  const auto pool = eligible(scene.predictions, constrained);
  std::vector<bool> out;
  for (const auto& g : scene.gt) {
    bool hit = false;
    for (const auto& p : pool) {
      if (p.subject_id != g.subject_id || p.object_id != g.object_id || p.predicate_id != g.predicate_id ||
          p.subject_class != g.subject_class || p.object_class != g.object_class) {
        continue;
      }
      std::size_t ahead = 0;
      for (const auto& q : pool) ahead += outranks(q, p) ? 1 : 0;
      hit = hit || ahead < k;
    }
    out.push_back(hit);
  }
  return out;
}

inline double recall(const std::vector<leo::EvalScene>& scenes, std::size_t k, bool constrained) {
  double acc = 0;
  int counted = 0;
  for (const auto& s : scenes) {
    if (s.gt.empty()) continue;
    const auto h = hits(s, k, constrained);
    acc += static_cast<double>(std::count(h.begin(), h.end(), true)) / static_cast<double>(h.size());
    ++counted;
  }
  return counted ? acc / counted : 0.0;
}

inline double mean_recall(const std::vector<leo::EvalScene>& scenes, std::size_t k, bool constrained) {
  std::map<int, std::pair<double, double>> per_class;
  for (const auto& s : scenes) {
    const auto h = hits(s, k, constrained);
    for (std::size_t g = 0; g < h.size(); ++g) {
      per_class[s.gt[g].predicate_id].first += h[g] ? 1 : 0;
      per_class[s.gt[g].predicate_id].second += 1;
    }
  }
  if (per_class.empty()) return 0.0;
  double acc = 0;
  for (const auto& [c, v] : per_class) acc += v.first / v.second;
  return acc / static_cast<double>(per_class.size());
}

/// Random scene fixture: up to 4 objects, 3 predicates, scores drawn from a
/// small grid so that ties occur.
inline leo::EvalScene random_fixture(leo::SplitMix64& rng) {
  leo::EvalScene s;
  const int k = static_cast<int>(rng.range(2, 4));
  const int preds = 3;
  std::vector<int> cls(k);
  for (auto& c : cls) c = static_cast<int>(rng.below(3));
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      for (int p = 0; p < preds; ++p) {
        const double score = static_cast<double>(rng.below(6)) / 5.0;
        s.predictions.push_back({i, j, p, score, cls[i], cls[j]});
        if (rng.uniform() < 0.2) s.gt.push_back({i, j, p, cls[i], cls[j]});
      }
    }
  return s;
}

}  // namespace oracle
