#pragma once

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// Every op is a free function templated on the scalar type, so the whole
// model can be instantiated in float for training and in double for the
// finite-difference shadow path. An op records its backward closure on the
// thread's active Tape when at least one input requires a gradient.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "leo/error.hpp"

namespace leo {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

template <typename T>
struct Storage {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // allocated on first accumulation
  bool requires_grad = false;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(values.size(), T(0));
    return grad;
  }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : data_(std::make_shared<detail::Storage<T>>()) {
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
    }
    data_->shape = std::move(shape);
    data_->values = std::move(values);
    data_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }
  static Tensor full(Shape shape, T value) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value));
  }
  static Tensor scalar(T value) { return Tensor(Shape{}, {value}); }
  static Tensor vector(std::vector<T> values, bool requires_grad = false) {
    const std::size_t n = values.size();
    return Tensor(Shape{n}, std::move(values), requires_grad);
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<T> values,
                       bool requires_grad = false) {
    return Tensor(Shape{rows, cols}, std::move(values), requires_grad);
  }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return data_->shape; }
  std::size_t rank() const { return data_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return data_->shape.at(axis); }
  std::size_t numel() const { return data_->values.size(); }

  std::span<const T> values() const { return data_->values; }
  /// Direct write access. Only for leaves (parameters) outside a recording.
  std::span<T> mutable_values() { return data_->values; }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return data_->values[0];
  }
  T operator[](std::size_t i) const { return data_->values[i]; }
  T at(std::size_t r, std::size_t c) const { return data_->values[r * data_->shape.back() + c]; }

  bool requires_grad() const { return data_ && data_->requires_grad; }
  void set_requires_grad(bool on) { data_->requires_grad = on; }

  /// Accumulated gradient; empty when nothing has flowed into this tensor.
  std::span<const T> grad() const { return data_->grad; }
  std::span<T> mutable_grad() { return data_->grad_buffer(); }
  void zero_grad() { std::fill(data_->grad.begin(), data_->grad.end(), T(0)); }
  bool has_grad() const { return !data_->grad.empty(); }

  /// Identity of the underlying node, stable across copies of the handle.
  const void* id() const { return data_.get(); }

  detail::Storage<T>& storage() const { return *data_; }

 private:
  std::shared_ptr<detail::Storage<T>> data_;
};

/// Ordered record of executed ops. backward() runs the closures in exact
/// reverse order and consumes the record.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Makes a tape the thread's active record for its lifetime.
  class Scope {
   public:
    explicit Scope(Tape& tape) : previous_(active_) { active_ = &tape; }
    ~Scope() { active_ = previous_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active() noexcept { return active_; }

  void record(std::string_view op, std::function<void()> backward) {
    entries_.push_back({op, std::move(backward)});
  }

  std::size_t size() const { return entries_.size(); }
  std::string_view op_name(std::size_t i) const { return entries_.at(i).op; }

  void backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
      throw AutodiffError("backward() needs a scalar loss");
    }
    if (!loss.requires_grad() || entries_.empty()) {
      throw AutodiffError("backward() on a loss that was not recorded");
    }
    auto& g = loss.storage().grad_buffer();
    g[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
    entries_.clear();
  }

  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::string_view op;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
  static inline thread_local Tape* active_ = nullptr;
};

namespace detail {

template <typename T>
bool recording(std::initializer_list<const Tensor<T>*> inputs) {
  if (Tape<T>::active() == nullptr) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename T>
Tensor<T> make_output(std::string_view op, Shape shape, std::vector<T> values, bool record) {
  for (const T v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
  }
  return Tensor<T>(std::move(shape), std::move(values), record);
}

// Output gradient, or nullptr when nothing downstream consumed the output.
template <typename T>
const std::vector<T>* out_grad(const Tensor<T>& out) {
  const auto& g = out.storage().grad;
  return g.empty() ? nullptr : &g;
}

template <typename T>
std::vector<T>* in_grad(const Tensor<T>& in) {
  return in.requires_grad() ? &in.storage().grad_buffer() : nullptr;
}

inline void require(bool cond, std::string_view op, const std::string& what) {
  if (!cond) throw ShapeError(std::string(op) + ": " + what);
}

template <typename T>
std::size_t last_dim(const Tensor<T>& t) {
  return t.rank() == 0 ? 1 : t.shape().back();
}

template <typename T>
std::size_t row_count(const Tensor<T>& t) {
  const std::size_t d = last_dim(t);
  return d == 0 ? 0 : t.numel() / d;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  constexpr std::string_view op = "matmul";
  detail::require(a.rank() == 2 && b.rank() == 2, op, "both operands must be rank 2");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  detail::require(b.dim(0) == k, op,
                  "inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<T> out(m * n, T(0));
  const T* av = a.values().data();
  const T* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T s = av[i * k + p];
      if (s == T(0)) continue;
      const T* brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  const bool rec = detail::recording<T>({&a, &b});
  auto result = detail::make_output(op, Shape{m, n}, std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record(op, [a, b, result, m, k, n]() {
      const auto* g = detail::out_grad(result);
      if (!g) return;
      const T* gv = g->data();
      if (auto* ga = detail::in_grad(a)) {
        const T* bv = b.values().data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            T acc = T(0);
            for (std::size_t j = 0; j < n; ++j) acc += gv[i * n + j] * bv[p * n + j];
            (*ga)[i * k + p] += acc;
          }
      }
      if (auto* gb = detail::in_grad(b)) {
        const T* av = a.values().data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const T s = av[i * k + p];
            if (s == T(0)) continue;
            T* dst = gb->data() + p * n;
            for (std::size_t j = 0; j < n; ++j) dst[j] += s * gv[i * n + j];
          }
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Elementwise binary ops (identical shapes)

namespace detail {

template <typename T, typename Fwd, typename Bwd>
Tensor<T> binary(std::string_view op, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, Bwd bwd) {
  require(a.shape() == b.shape(), op,
          "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t n = a.numel();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(a[i], b[i]);
  const bool rec = recording<T>({&a, &b});
  auto result = make_output(op, a.shape(), std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record(op, [a, b, result, n, bwd]() {
      const auto* g = out_grad(result);
      if (!g) return;
      auto* ga = in_grad(a);
      auto* gb = in_grad(b);
      for (std::size_t i = 0; i < n; ++i) {
        const auto [da, db] = bwd(a[i], b[i], (*g)[i]);
        if (ga) (*ga)[i] += da;
        if (gb) (*gb)[i] += db;
      }
    });
  }
  return result;
}

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary(std::string_view op, const Tensor<T>& x, Fwd fwd, Bwd bwd) {
  const std::size_t n = x.numel();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(x[i]);
  const bool rec = recording<T>({&x});
  auto result = make_output(op, x.shape(), std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record(op, [x, result, n, bwd]() {
      const auto* g = out_grad(result);
      auto* gx = in_grad(x);
      if (!g || !gx) return;
      for (std::size_t i = 0; i < n; ++i) (*gx)[i] += bwd(x[i], result[i], (*g)[i]);
    });
  }
  return result;
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "add", a, b, [](T x, T y) { return x + y; },
      [](T, T, T g) { return std::pair<T, T>{g, g}; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; },
      [](T, T, T g) { return std::pair<T, T>{g, -g}; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; },
      [](T x, T y, T g) { return std::pair<T, T>{g * y, g * x}; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return detail::unary<T>(
      "scale", x, [factor](T v) { return v * factor; },
      [factor](T, T, T g) { return g * factor; });
}

// ---------------------------------------------------------------------------
// Activations

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T, T g) { return v > T(0) ? g : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary<T>(
      "sigmoid", x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y, T g) { return g * y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary<T>(
      "tanh", x, [](T v) { return std::tanh(v); },
      [](T, T y, T g) { return g * (T(1) - y * y); });
}

// ---------------------------------------------------------------------------
// Broadcasting helpers for row-major batches: the last axis is the feature axis.

/// x[..., n] + bias[n]
template <typename T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& bias) {
  constexpr std::string_view op = "add_row";
  const std::size_t n = detail::last_dim(x);
  detail::require(bias.numel() == n, op,
                  "bias " + shape_str(bias.shape()) + " vs input " + shape_str(x.shape()));
  const std::size_t rows = detail::row_count(x);
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = x[r * n + j] + bias[j];
  const bool rec = detail::recording<T>({&x, &bias});
  auto result = detail::make_output(op, x.shape(), std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record(op, [x, bias, result, rows, n]() {
      const auto* g = detail::out_grad(result);
      if (!g) return;
      if (auto* gx = detail::in_grad(x))
        for (std::size_t i = 0; i < g->size(); ++i) (*gx)[i] += (*g)[i];
      if (auto* gb = detail::in_grad(bias))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) (*gb)[j] += (*g)[r * n + j];
    });
  }
  return result;
}

/// x[m, n] * s[m]: every row scaled by its own scalar.
template <typename T>
Tensor<T> mul_rows(const Tensor<T>& x, const Tensor<T>& s) {
  constexpr std::string_view op = "mul_rows";
  const std::size_t n = detail::last_dim(x);
  const std::size_t rows = detail::row_count(x);
  detail::require(s.numel() == rows, op,
                  std::to_string(s.numel()) + " scales for " + std::to_string(rows) + " rows");
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = x[r * n + j] * s[r];
  const bool rec = detail::recording<T>({&x, &s});
  auto result = detail::make_output(op, x.shape(), std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record(op, [x, s, result, rows, n]() {
      const auto* g = detail::out_grad(result);
      if (!g) return;
      auto* gx = detail::in_grad(x);
      auto* gs = detail::in_grad(s);
      for (std::size_t r = 0; r < rows; ++r) {
        T acc = T(0);
        for (std::size_t j = 0; j < n; ++j) {
          const T gi = (*g)[r * n + j];
          if (gx) (*gx)[r * n + j] += gi * s[r];
          acc += gi * x[r * n + j];
        }
        if (gs) (*gs)[r] += acc;
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  constexpr std::string_view op = "reshape";
  detail::require(shape_numel(shape) == x.numel(), op,
                  shape_str(x.shape()) + " -> " + shape_str(shape));
  std::vector<T> out(x.values().begin(), x.values().end());
  const bool rec = detail::recording<T>({&x});
  auto result = detail::make_output(op, std::move(shape), std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record(op, [x, result]() {
      const auto* g = detail::out_grad(result);
      auto* gx = detail::in_grad(x);
      if (!g || !gx) return;
      for (std::size_t i = 0; i < g->size(); ++i) (*gx)[i] += (*g)[i];
    });
  }
  return result;
}

/// Concatenation along `axis`; all other extents must agree.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  constexpr std::string_view op = "concat";
  detail::require(!parts.empty(), op, "no inputs");
  const Shape& first = parts[0].shape();
  detail::require(axis < first.size(), op, "axis out of range");
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> chunk(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Shape& s = parts[p].shape();
    detail::require(s.size() == first.size(), op, "rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis)
        detail::require(s[i] == first[i], op, shape_str(s) + " vs " + shape_str(first));
    out_shape[axis] += s[axis];
    chunk[p] = outer == 0 ? 0 : parts[p].numel() / outer;
  }
  const std::size_t total_chunk = std::accumulate(chunk.begin(), chunk.end(), std::size_t{0});
  std::vector<T> out(outer * total_chunk);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t offset = o * total_chunk;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const auto v = parts[p].values();
      std::copy_n(v.begin() + o * chunk[p], chunk[p], out.begin() + offset);
      offset += chunk[p];
    }
  }
  bool rec = false;
  if (Tape<T>::active())
    for (const auto& p : parts) rec = rec || p.requires_grad();
  auto result = detail::make_output(op, std::move(out_shape), std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record(op, [parts, result, outer, chunk, total_chunk]() {
      const auto* g = detail::out_grad(result);
      if (!g) return;
      for (std::size_t o = 0; o < outer; ++o) {
        std::size_t offset = o * total_chunk;
        for (std::size_t p = 0; p < parts.size(); ++p) {
          if (auto* gp = detail::in_grad(parts[p]))
            for (std::size_t i = 0; i < chunk[p]; ++i) (*gp)[o * chunk[p] + i] += (*g)[offset + i];
          offset += chunk[p];
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis) {
  return concat<T>(std::vector<Tensor<T>>{a, b}, axis);
}

/// Column `col` of a matrix as a vector.
template <typename T>
Tensor<T> column(const Tensor<T>& x, std::size_t col) {
  constexpr std::string_view op = "column";
  detail::require(x.rank() == 2 && col < x.dim(1), op, "column out of range");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<T> out(m);
  for (std::size_t r = 0; r < m; ++r) out[r] = x[r * n + col];
  const bool rec = detail::recording<T>({&x});
  auto result = detail::make_output(op, Shape{m}, std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record(op, [x, result, m, n, col]() {
      const auto* g = detail::out_grad(result);
      auto* gx = detail::in_grad(x);
      if (!g || !gx) return;
      for (std::size_t r = 0; r < m; ++r) (*gx)[r * n + col] += (*g)[r];
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (const T v : x.values()) acc += v;
  const bool rec = detail::recording<T>({&x});
  auto result = detail::make_output<T>("sum", Shape{}, {acc}, rec);
  if (rec) {
    Tape<T>::active()->record("sum", [x, result]() {
      const auto* g = detail::out_grad(result);
      auto* gx = detail::in_grad(x);
      if (!g || !gx) return;
      for (auto& v : *gx) v += (*g)[0];
    });
  }
  return result;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  detail::require(x.numel() > 0, "mean", "empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// ---------------------------------------------------------------------------
// Softmax family

/// Softmax along `axis`, stabilised by subtracting the per-slice maximum.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  constexpr std::string_view op = "softmax";
  detail::require(axis < x.rank(), op, "axis out of range for " + shape_str(x.shape()));
  const std::size_t len = x.dim(axis);
  detail::require(len > 0, op, "empty softmax axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  std::vector<T> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = x[base];
      for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, x[base + l * inner]);
      T z = T(0);
      for (std::size_t l = 0; l < len; ++l) {
        const T e = std::exp(x[base + l * inner] - mx);
        out[base + l * inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= z;
    }
  const bool rec = detail::recording<T>({&x});
  auto result = detail::make_output(op, x.shape(), std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record(op, [x, result, outer, inner, len]() {
      const auto* g = detail::out_grad(result);
      auto* gx = detail::in_grad(x);
      if (!g || !gx) return;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          T dot = T(0);
          for (std::size_t l = 0; l < len; ++l) dot += (*g)[base + l * inner] * result[base + l * inner];
          for (std::size_t l = 0; l < len; ++l) {
            const std::size_t i = base + l * inner;
            (*gx)[i] += result[i] * ((*g)[i] - dot);
          }
        }
    });
  }
  return result;
}

/// Softmax of a flat logit vector within groups: entry i belongs to group
/// segment[i] < num_segments. Entries of a group need not be contiguous.
template <typename T>
Tensor<T> segment_softmax(const Tensor<T>& logits, std::span<const std::size_t> segment,
                          std::size_t num_segments) {
  constexpr std::string_view op = "segment_softmax";
  const std::size_t n = logits.numel();
  detail::require(segment.size() == n, op, "one segment id per logit required");
  std::vector<T> mx(num_segments, -std::numeric_limits<T>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    detail::require(segment[i] < num_segments, op, "segment id out of range");
    mx[segment[i]] = std::max(mx[segment[i]], logits[i]);
  }
  std::vector<T> z(num_segments, T(0));
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(logits[i] - mx[segment[i]]);
    z[segment[i]] += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= z[segment[i]];
  const bool rec = detail::recording<T>({&logits});
  auto result = detail::make_output(op, logits.shape(), std::move(out), rec);
  if (rec) {
    std::vector<std::size_t> seg(segment.begin(), segment.end());
    Tape<T>::active()->record(op, [logits, result, seg = std::move(seg), num_segments, n]() {
      const auto* g = detail::out_grad(result);
      auto* gx = detail::in_grad(logits);
      if (!g || !gx) return;
      std::vector<T> dot(num_segments, T(0));
      for (std::size_t i = 0; i < n; ++i) dot[seg[i]] += (*g)[i] * result[i];
      for (std::size_t i = 0; i < n; ++i) (*gx)[i] += result[i] * ((*g)[i] - dot[seg[i]]);
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Normalisation

inline constexpr double kLayerNormEps = 1e-5;

/// Row-wise layer normalisation over the last axis with affine gain/bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = static_cast<T>(kLayerNormEps)) {
  constexpr std::string_view op = "layer_norm";
  const std::size_t d = detail::last_dim(x);
  detail::require(d >= 1, op, "feature dimension must be >= 1");
  detail::require(gain.numel() == d && bias.numel() == d, op, "gain/bias width mismatch");
  const std::size_t rows = detail::row_count(x);
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.values().data() + r * d;
    T mu = T(0);
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(d);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xr[j] - mu) * inv_std[r];
      out[r * d + j] = xhat[r * d + j] * gain[j] + bias[j];
    }
  }
  const bool rec = detail::recording<T>({&x, &gain, &bias});
  auto result = detail::make_output(op, x.shape(), std::move(out), rec);
  if (rec) {
    Tape<T>::active()->record(
        op, [x, gain, bias, result, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d]() {
          const auto* g = detail::out_grad(result);
          if (!g) return;
          auto* gx = detail::in_grad(x);
          auto* gg = detail::in_grad(gain);
          auto* gb = detail::in_grad(bias);
          std::vector<T> gxhat(d);
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_g = T(0), mean_gx = T(0);
            for (std::size_t j = 0; j < d; ++j) {
              const std::size_t i = r * d + j;
              if (gg) (*gg)[j] += (*g)[i] * xhat[i];
              if (gb) (*gb)[j] += (*g)[i];
              gxhat[j] = (*g)[i] * gain[j];
              mean_g += gxhat[j];
              mean_gx += gxhat[j] * xhat[i];
            }
            if (!gx) continue;
            mean_g /= static_cast<T>(d);
            mean_gx /= static_cast<T>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const std::size_t i = r * d + j;
              (*gx)[i] += inv_std[r] * (gxhat[j] - mean_g - xhat[i] * mean_gx);
            }
          }
        });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Graph aggregation

/// out[r] = x[index[r]] for row-major x with rows along axis 0.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> index) {
  constexpr std::string_view op = "gather_rows";
  detail::require(x.rank() >= 1, op, "input must have rank >= 1");
  const std::size_t n = x.dim(0);
  const std::size_t d = n == 0 ? 0 : x.numel() / n;
  std::vector<T> out(index.size() * d);
  for (std::size_t r = 0; r < index.size(); ++r) {
    detail::require(index[r] < n, op, "index " + std::to_string(index[r]) + " out of range");
    std::copy_n(x.values().begin() + index[r] * d, d, out.begin() + r * d);
  }
  Shape shape = x.shape();
  shape[0] = index.size();
  const bool rec = detail::recording<T>({&x});
  auto result = detail::make_output(op, std::move(shape), std::move(out), rec);
  if (rec) {
    std::vector<std::size_t> idx(index.begin(), index.end());
    Tape<T>::active()->record(op, [x, result, idx = std::move(idx), d]() {
      const auto* g = detail::out_grad(result);
      auto* gx = detail::in_grad(x);
      if (!g || !gx) return;
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < d; ++j) (*gx)[idx[r] * d + j] += (*g)[r * d + j];
    });
  }
  return result;
}

/// out[index[r]] += x[r]; out has `num_rows` rows. Rows accumulate in input order.
template <typename T>
Tensor<T> scatter_add_rows(const Tensor<T>& x, std::span<const std::size_t> index,
                           std::size_t num_rows) {
  constexpr std::string_view op = "scatter_add_rows";
  detail::require(x.rank() >= 1 && x.dim(0) == index.size(), op, "one index per input row required");
  const std::size_t d = x.dim(0) == 0 ? detail::last_dim(x) : x.numel() / x.dim(0);
  std::vector<T> out(num_rows * d, T(0));
  for (std::size_t r = 0; r < index.size(); ++r) {
    detail::require(index[r] < num_rows, op, "index " + std::to_string(index[r]) + " out of range");
    for (std::size_t j = 0; j < d; ++j) out[index[r] * d + j] += x[r * d + j];
  }
  Shape shape = x.shape();
  shape[0] = num_rows;
  const bool rec = detail::recording<T>({&x});
  auto result = detail::make_output(op, std::move(shape), std::move(out), rec);
  if (rec) {
    std::vector<std::size_t> idx(index.begin(), index.end());
    Tape<T>::active()->record(op, [x, result, idx = std::move(idx), d]() {
      const auto* g = detail::out_grad(result);
      auto* gx = detail::in_grad(x);
      if (!g || !gx) return;
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < d; ++j) (*gx)[r * d + j] += (*g)[idx[r] * d + j];
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Losses

inline constexpr double kFocalClamp = 1e-7;

/// Per-row focal loss  -alpha_r (1 - p_t)^gamma log p_t  with p_t = probs[r, target_r]
/// clamped to >= 1e-7. `probs` is [C] (one row) or [m, C]; `alpha` holds one
/// weight per row or a single shared weight. Returns [m] (or a scalar for 1-D input).
template <typename T>
Tensor<T> focal_loss(const Tensor<T>& probs, std::span<const std::size_t> targets, T gamma,
                     std::span<const T> alpha) {
  constexpr std::string_view op = "focal_loss";
  const std::size_t c = detail::last_dim(probs);
  const std::size_t rows = detail::row_count(probs);
  detail::require(targets.size() == rows, op, "one target per row required");
  detail::require(alpha.size() == rows || alpha.size() == 1, op, "alpha must be per-row or shared");
  const auto alpha_of = [&alpha](std::size_t r) { return alpha.size() == 1 ? alpha[0] : alpha[r]; };
  const T clamp = static_cast<T>(kFocalClamp);
  std::vector<T> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= c) {
      throw ShapeError("focal_loss: target class " + std::to_string(targets[r]) +
                       " out of range for " + std::to_string(c) + " classes");
    }
    const T p = std::max(probs[r * c + targets[r]], clamp);
    out[r] = -alpha_of(r) * std::pow(T(1) - p, gamma) * std::log(p);
  }
  const bool rec = detail::recording<T>({&probs});
  Shape shape = probs.rank() <= 1 ? Shape{} : Shape{rows};
  auto result = detail::make_output(op, std::move(shape), std::move(out), rec);
  if (rec) {
    std::vector<std::size_t> tgt(targets.begin(), targets.end());
    std::vector<T> alphas(alpha.begin(), alpha.end());
    Tape<T>::active()->record(op, [probs, result, tgt = std::move(tgt), alphas = std::move(alphas),
                                   gamma, c, clamp]() {
      const auto* g = detail::out_grad(result);
      auto* gp = detail::in_grad(probs);
      if (!g || !gp) return;
      for (std::size_t r = 0; r < tgt.size(); ++r) {
        const std::size_t i = r * c + tgt[r];
        const T p = probs[i];
        if (p < clamp) continue;  // clamped region is flat
        const T a = alphas.size() == 1 ? alphas[0] : alphas[r];
        const T q = T(1) - p;
        T d = -std::pow(q, gamma) / p;
        if (gamma != T(0) && q > T(0)) d += gamma * std::pow(q, gamma - T(1)) * std::log(p);
        (*gp)[i] += (*g)[r] * a * d;
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> focal_loss(const Tensor<T>& probs, std::size_t target, T gamma, T alpha) {
  const std::size_t t[1] = {target};
  const T a[1] = {alpha};
  return focal_loss<T>(probs, std::span<const std::size_t>(t), gamma, std::span<const T>(a));
}

// ---------------------------------------------------------------------------

/// Copy of `x` in another scalar type, detached from any record.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& x, bool requires_grad = false) {
  std::vector<To> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<To>(x[i]);
  return Tensor<To>(x.shape(), std::move(v), requires_grad);
}

}  // namespace leo
