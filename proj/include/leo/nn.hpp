#pragma once

// Parameter registry and the small layer vocabulary the model is built from.

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "leo/error.hpp"
#include "leo/rng.hpp"
#include "leo/tensor.hpp"

namespace leo {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> tensor;  // leaf; gradient accumulates in tensor.grad()
};

/// Named parameters in registration order. Names are unique.
template <typename T>
class ParamStore {
 public:
  Tensor<T> add(const std::string& name, Tensor<T> tensor) {
    if (index_.count(name)) throw ValidationError("duplicate parameter name: " + name);
    tensor.set_requires_grad(true);
    index_.emplace(name, params_.size());
    params_.push_back({name, tensor});
    return tensor;
  }

  std::size_t size() const { return params_.size(); }
  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter: " + name);
    return params_[it->second].tensor;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  /// Copies values from a store with identical names and shapes (any scalar type).
  template <typename U>
  void assign_from(const ParamStore<U>& other) {
    if (other.size() != size()) throw ValidationError("parameter count mismatch");
    for (auto& p : params_) {
      const auto& src = other.get(p.name);
      if (src.shape() != p.tensor.shape()) {
        throw ValidationError("shape mismatch for parameter " + p.name + ": " +
                              shape_str(src.shape()) + " vs " + shape_str(p.tensor.shape()));
      }
      auto dst = p.tensor.mutable_values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
    }
  }

 private:
  std::vector<Param<T>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Draws initial parameter values: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
/// for weight matrices, zeros for biases.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  template <typename T>
  Tensor<T> uniform_fan_in(std::size_t fan_in, std::size_t fan_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<T> v(fan_in * fan_out);
    for (auto& x : v) x = static_cast<T>(rng_.uniform(-bound, bound));
    return Tensor<T>::matrix(fan_in, fan_out, std::move(v));
  }

  template <typename T>
  Tensor<T> uniform(Shape shape, double lo, double hi) {
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng_.uniform(lo, hi));
    return Tensor<T>(std::move(shape), std::move(v));
  }

  SplitMix64& rng() { return rng_; }

 private:
  SplitMix64 rng_;
};

/// y = x W + b with W stored [in x out].
template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;

  Linear() = default;
  Linear(ParamStore<T>& store, Initializer& init, const std::string& name, std::size_t in,
         std::size_t out) {
    weight = store.add(name + ".w", init.uniform_fan_in<T>(in, out));
    bias = store.add(name + ".b", Tensor<T>::zeros({out}));
  }

  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }

  /// x: [n x in] batch or a single [in] vector.
  Tensor<T> operator()(const Tensor<T>& x) const {
    if (x.rank() == 1) return reshape(add_row(matmul(reshape(x, {1, x.numel()}), weight), bias), {out_dim()});
    return add_row(matmul(x, weight), bias);
  }
};

/// linear -> ReLU -> linear
template <typename T>
struct Mlp2 {
  Linear<T> first;
  Linear<T> second;

  Mlp2() = default;
  Mlp2(ParamStore<T>& store, Initializer& init, const std::string& name, std::size_t in,
       std::size_t hidden, std::size_t out)
      : first(store, init, name + ".0", in, hidden), second(store, init, name + ".1", hidden, out) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return second(relu(first(x))); }
};

template <typename T>
struct LayerNorm {
  Tensor<T> gain;
  Tensor<T> bias;

  LayerNorm() = default;
  LayerNorm(ParamStore<T>& store, const std::string& name, std::size_t dim) {
    gain = store.add(name + ".gain", Tensor<T>::full({dim}, T(1)));
    bias = store.add(name + ".bias", Tensor<T>::zeros({dim}));
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias); }
};

/// Gated recurrent unit with hidden state h (current feature) and input m (message):
///   z  = sigmoid(m W_z + h U_z + b_z)
///   r  = sigmoid(m W_r + h U_r + b_r)
///   h~ = tanh(m W_h + (r * h) U_h + b_h)
///   h' = (1 - z) * h + z * h~
template <typename T>
struct GruCell {
  Tensor<T> w_z, w_r, w_h;  // input-to-hidden [d x d]
  Tensor<T> u_z, u_r, u_h;  // hidden-to-hidden [d x d]
  Tensor<T> b_z, b_r, b_h;

  GruCell() = default;
  GruCell(ParamStore<T>& store, Initializer& init, const std::string& name, std::size_t dim) {
    w_z = store.add(name + ".w_z", init.uniform_fan_in<T>(dim, dim));
    w_r = store.add(name + ".w_r", init.uniform_fan_in<T>(dim, dim));
    w_h = store.add(name + ".w_h", init.uniform_fan_in<T>(dim, dim));
    u_z = store.add(name + ".u_z", init.uniform_fan_in<T>(dim, dim));
    u_r = store.add(name + ".u_r", init.uniform_fan_in<T>(dim, dim));
    u_h = store.add(name + ".u_h", init.uniform_fan_in<T>(dim, dim));
    b_z = store.add(name + ".b_z", Tensor<T>::zeros({dim}));
    b_r = store.add(name + ".b_r", Tensor<T>::zeros({dim}));
    b_h = store.add(name + ".b_h", Tensor<T>::zeros({dim}));
  }

  std::size_t dim() const { return w_z.dim(0); }

  /// h, m: [n x d] batches, or single [d] vectors.
  Tensor<T> operator()(const Tensor<T>& h, const Tensor<T>& m) const {
    if (h.shape() != m.shape()) {
      throw ShapeError("gru_cell: state " + shape_str(h.shape()) + " vs message " +
                       shape_str(m.shape()));
    }
    if (h.rank() == 1) {
      const std::size_t d = h.numel();
      auto out = step(reshape(h, {1, d}), reshape(m, {1, d}));
      return reshape(out, {d});
    }
    return step(h, m);
  }

 private:
  Tensor<T> step(const Tensor<T>& h, const Tensor<T>& m) const {
    auto z = sigmoid(add_row(add(matmul(m, w_z), matmul(h, u_z)), b_z));
    auto r = sigmoid(add_row(add(matmul(m, w_r), matmul(h, u_r)), b_r));
    auto cand = tanh(add_row(add(matmul(m, w_h), matmul(mul(r, h), u_h)), b_h));
    return add(h, mul(z, sub(cand, h)));
  }
};

/// Learned lookup table [rows x dim].
template <typename T>
struct Embedding {
  Tensor<T> table;

  Embedding() = default;
  Embedding(ParamStore<T>& store, Initializer& init, const std::string& name, std::size_t rows,
            std::size_t dim) {
    table = store.add(name, init.uniform<T>({rows, dim}, -1.0, 1.0));
  }

  std::size_t rows() const { return table.dim(0); }

  Tensor<T> operator()(std::span<const std::size_t> ids) const {
    for (auto id : ids) {
      if (id >= rows()) {
        throw ValidationError("embedding index " + std::to_string(id) + " out of range (" +
                              std::to_string(rows()) + " rows)");
      }
    }
    return gather_rows(table, ids);
  }
};

}  // namespace leo
