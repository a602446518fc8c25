#include <gtest/gtest.h>

#include <cmath>

#include "leo/gradcheck.hpp"
#include "leo/nn.hpp"
#include "support/oracles.hpp"

using leo::Tensor;
using TD = Tensor<double>;

namespace {

struct GruFixture {
  leo::ParamStore<double> store;
  leo::Initializer init{42};
  leo::GruCell<double> gru{store, init, "gru", 4};

  void fill(double value) {
    for (auto& p : store.params())
      for (auto& v : p.tensor.mutable_values()) v = value;
  }

  oracle::Gru reference() const {
    const auto v = [](const TD& t) { return oracle::values(t); };
    return {v(gru.w_z), v(gru.w_r), v(gru.w_h), v(gru.u_z), v(gru.u_r), v(gru.u_h), v(gru.b_z), v(gru.b_r), v(gru.b_h)};
  }
};

}  // namespace

TEST(ParamStore, RejectsDuplicateNames) {
  leo::ParamStore<float> store;
  store.add("a.w", Tensor<float>::zeros({2}));
  EXPECT_THROW(store.add("a.w", Tensor<float>::zeros({2})), leo::ValidationError);
  EXPECT_TRUE(store.get("a.w").requires_grad());
  EXPECT_THROW(store.get("b"), leo::ValidationError);
}

TEST(ParamStore, GradShapeFollowsTensorShape) {
  leo::ParamStore<double> store;
  leo::Initializer init(1);
  leo::Linear<double> lin(store, init, "lin", 3, 2);
  leo::Tape<double> tape;
  leo::Tape<double>::Scope scope(tape);
  tape.backward(leo::sum(lin(TD::matrix(1, 3, {1, 2, 3}))));
  for (const auto& p : store.params()) EXPECT_EQ(p.tensor.grad().size(), p.tensor.numel()) << p.name;
}

TEST(Initializer, FanInBoundsAndZeroBiases) {
  leo::ParamStore<double> store;
  leo::Initializer init(9);
  leo::Linear<double> lin(store, init, "lin", 16, 8);
  for (double w : lin.weight.values()) EXPECT_LE(std::abs(w), 0.25);
  for (double b : lin.bias.values()) EXPECT_EQ(b, 0.0);
}

TEST(Initializer, SameSeedSameValues) {
  leo::Initializer a(5), b(5), c(6);
  const auto x = oracle::values(a.uniform_fan_in<double>(4, 4));
  EXPECT_EQ(x, oracle::values(b.uniform_fan_in<double>(4, 4)));
  EXPECT_NE(x, oracle::values(c.uniform_fan_in<double>(4, 4)));
}

TEST(Linear, VectorAndBatchAgree) {
  leo::ParamStore<double> store;
  leo::Initializer init(3);
  leo::Linear<double> lin(store, init, "lin", 3, 2);
  const auto single = lin(TD::vector({0.5, -1, 2}));
  const auto batch = lin(TD::matrix(1, 3, {0.5, -1, 2}));
  EXPECT_EQ(single.shape(), (leo::Shape{2}));
  EXPECT_EQ(oracle::values(single), oracle::values(batch));
}

TEST(Gru, ZeroParametersHalveTheState) {
  GruFixture f;
  f.fill(0.0);
  const auto h = TD::vector({1, -2, 0.5, 4});
  const auto out = f.gru(h, TD::vector({3, 3, -1, 0}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(out[i], 0.5 * h[i]);
}

TEST(Gru, SaturatedUpdateGateTakesCandidate) {
  GruFixture f;
  for (auto& v : f.gru.b_z.mutable_values()) v = 50;
  const auto h = TD::vector({0.2, -0.4, 0.6, 0.1});
  const auto m = TD::vector({0.3, 0.1, -0.2, 0.5});
  auto ref = f.reference();
  std::fill(ref.b_z.begin(), ref.b_z.end(), 50.0);
  const auto out = f.gru(h, m);
  // z = sigmoid(~50) so h' is the candidate tanh(...) itself.
  const auto rr = [&] {
    oracle::Vec r(4), rh(4);
    const auto mr = oracle::vecmat(oracle::values(m), ref.w_r), hr = oracle::vecmat(oracle::values(h), ref.u_r);
    for (int i = 0; i < 4; ++i) rh[i] = oracle::sigmoid(mr[i] + hr[i]) * h[i];
    const auto a = oracle::vecmat(oracle::values(m), ref.w_h), b = oracle::vecmat(rh, ref.u_h);
    for (int i = 0; i < 4; ++i) r[i] = std::tanh(a[i] + b[i]);
    return r;
  }();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out[i], rr[i], 1e-12);
}

TEST(Gru, NegativeSaturationHoldsState) {
  GruFixture f;
  for (auto& v : f.gru.b_z.mutable_values()) v = -50;
  const auto h = TD::vector({0.2, -0.4, 0.6, 0.1});
  const auto out = f.gru(h, TD::zeros({4}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out[i], h[i], 1e-12);
}

TEST(Gru, MatchesReferenceOnRandomBatch) {
  GruFixture f;
  leo::SplitMix64 rng(8);
  for (auto& v : f.gru.b_r.mutable_values()) v = rng.uniform(-1, 1);
  const auto h = oracle::random_vec(12, rng), m = oracle::random_vec(12, rng);
  const auto out = f.gru(TD::matrix(3, 4, h), TD::matrix(3, 4, m));
  const auto ref = f.reference();
  for (std::size_t r = 0; r < 3; ++r) {
    const auto want = ref({h.begin() + 4 * r, h.begin() + 4 * r + 4}, {m.begin() + 4 * r, m.begin() + 4 * r + 4});
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(out.at(r, c), want[c], 1e-12);
  }
}

TEST(Gru, ShapeMismatchThrows) {
  GruFixture f;
  EXPECT_THROW(f.gru(TD::zeros({4}), TD::zeros({3})), leo::ShapeError);
}

TEST(Gru, GradientMatchesIndependentDifferences) {
  GruFixture f;
  leo::SplitMix64 rng(12);
  const auto h = oracle::random_vec(4, rng), m = oracle::random_vec(4, rng);
  const auto w = oracle::random_vec(4, rng);
  auto hv = TD::vector(h, true);
  {
    leo::Tape<double> tape;
    leo::Tape<double>::Scope scope(tape);
    tape.backward(leo::sum(leo::mul(f.gru(hv, TD::vector(m)), TD::vector(w))));
  }
  const auto ref = f.reference();
  const auto numeric = oracle::numeric_gradient(
      [&](const oracle::Vec& x) {
        const auto o = ref(x, m);
        double s = 0;
        for (int i = 0; i < 4; ++i) s += o[i] * w[i];
        return s;
      },
      h, 1e-6);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_LE(leo::relative_error(hv.grad()[i], numeric[i]), 1e-4);
  // Parameter gradients through the library's own checker.
  std::vector<TD> inputs = {TD::vector(h), TD::vector(m)};
  for (const auto& p : f.store.params()) inputs.push_back(p.tensor);
  const auto r = leo::gradcheck(
      [&](std::vector<TD>& x) { return leo::sum(leo::mul(f.gru(x[0], x[1]), TD::vector(w))); }, inputs);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Embedding, RowsAndRangeCheck) {
  leo::ParamStore<double> store;
  leo::Initializer init(4);
  leo::Embedding<double> emb(store, init, "emb", 3, 5);
  const std::size_t ids[2] = {1, 1};
  const auto out = emb(ids);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(out.at(0, c), out.at(1, c));
  const std::size_t bad[1] = {3};
  EXPECT_THROW(emb(bad), leo::ValidationError);
}
