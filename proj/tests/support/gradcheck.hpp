// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gazessl/nn/autograd.hpp"
#include "gazessl/nn/ops.hpp"
#include "gazessl/rng.hpp"

namespace gazessl::testing {

struct GradCheckResult {
  double max_rel = 0.0;
  double max_abs = 0.0;
  std::size_t checked = 0;
};

// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps float32
// round-off in near-zero gradients from dominating.
inline constexpr double kGradRelFloor = 1.0;

/// Central differences with step h on every element of every leaf. `f`
/// returns the op output y; the checked scalar is sum(w * y), reduced in
/// double for the numeric side and with weighted_sum for the analytic side.
inline GradCheckResult grad_check(std::vector<nn::Var>& leaves, const std::function<nn::Var()>& f,
                                  const nn::Tensor& w, double h = 1e-3, double floor = kGradRelFloor) {
  auto eval = [&] {
    const auto y = f().value();
    double s = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += static_cast<double>(w[i]) * y[i];
    return s;
  };
  for (auto& v : leaves) v.zero_grad();
  nn::backward(nn::weighted_sum(f(), w));
  std::vector<nn::Tensor> analytic;
  for (auto& v : leaves) analytic.push_back(v.grad());
  GradCheckResult r;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto& val = leaves[l].mutable_value();
    for (std::size_t i = 0; i < val.numel(); ++i) {
      const float orig = val[i];
      const float up = static_cast<float>(orig + h), down = static_cast<float>(orig - h);
      val[i] = up;
      const double fp = eval();
      val[i] = down;
      const double fm = eval();
      val[i] = orig;
      const double num = (fp - fm) / (static_cast<double>(up) - down);
      const double a = analytic[l][i];
      const double abs = std::abs(a - num);
      r.max_abs = std::max(r.max_abs, abs);
      r.max_rel = std::max(r.max_rel, abs / std::max({std::abs(a), std::abs(num), floor}));
      ++r.checked;
    }
  }
  return r;
}

/// Scalar-valued f.
inline GradCheckResult grad_check(std::vector<nn::Var>& leaves, const std::function<nn::Var()>& f, double h = 1e-3,
                                  double floor = kGradRelFloor) {
  return grad_check(leaves, f, nn::Tensor({1}, 1.0f), h, floor);
}

inline nn::Tensor random_tensor(const nn::Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  nn::Tensor t(shape);
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

/// Uniform values whose magnitude is at least `gap`, for ops with a kink at 0.
inline nn::Tensor away_from_zero(const nn::Shape& shape, Rng& rng, double gap) {
  nn::Tensor t(shape);
  for (auto& v : t.data()) {
    const double m = rng.uniform(gap, 1.0);
    v = static_cast<float>(rng.uniform() < 0.5 ? -m : m);
  }
  return t;
}

}  // namespace gazessl::testing
