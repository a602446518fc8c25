#pragma once

// Central finite-difference gradient checking in 64-bit arithmetic.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "leo/tensor.hpp"

namespace leo {

struct GradcheckResult {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::size_t reprobed = 0;  // elements whose probe straddled a kink
  std::string worst;         // "input[index]" of the largest error
};

/// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares the tape gradient of the scalar `loss(inputs)` with central
/// differences of step `eps` over every element of every input. Inputs are
/// handles, so they may alias model parameters. `stride` > 1 checks every
/// stride-th element only.
///
/// When the two one-sided differences disagree by more than 1% the interval
/// [x - eps, x + eps] contains a kink (a ReLU input near zero), where the
/// central difference estimates nothing. Such elements are probed again with
/// eps / 10, at most twice; the tolerance applied afterwards is unchanged.
template <typename F>
GradcheckResult gradcheck(F&& loss, std::vector<Tensor<double>> inputs, double eps = 1e-6, std::size_t stride = 1) {
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    if (x.has_grad()) x.zero_grad();
  }
  {
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    auto l = loss(inputs);
    tape.backward(l);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& x : inputs) {
    if (x.has_grad()) {
      analytic.emplace_back(x.grad().begin(), x.grad().end());
    } else {
      analytic.emplace_back(x.numel(), 0.0);
    }
  }
  GradcheckResult res;
  const double center = loss(inputs).item();
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto values = inputs[t].mutable_values();
    for (std::size_t i = 0; i < values.size(); i += std::max<std::size_t>(stride, 1)) {
      const double saved = values[i];
      double h = eps, numeric = 0;
      for (int attempt = 0; attempt < 3; ++attempt, h /= 10) {
        values[i] = saved + h;
        const double up = loss(inputs).item();
        values[i] = saved - h;
        const double down = loss(inputs).item();
        values[i] = saved;
        numeric = (up - down) / (2 * h);
        const double fwd = (up - center) / h, bwd = (center - down) / h;
        if (relative_error(fwd, bwd) <= 1e-2) break;
        if (attempt == 0) ++res.reprobed;
      }
      const double err = relative_error(analytic[t][i], numeric);
      ++res.checked;
      if (err > res.max_rel_error || res.worst.empty()) {
        res.max_rel_error = std::max(res.max_rel_error, err);
        if (err >= res.max_rel_error) res.worst = std::to_string(t) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

}  // namespace leo
