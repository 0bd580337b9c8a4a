// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "gazessl/nn/autograd.hpp"

namespace gazessl::nn {

/// x: [N,C,H,W], weight: [O,C,k,k], bias: [O]. Zero padding of `pad` pixels.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride = 1, int pad = -1);
Var relu(const Var& x);
/// Non-overlapping k x k max pooling; trailing rows/columns that do not fill
/// a window are dropped.
Var max_pool2d(const Var& x, int k = 2);
/// [N,C,H,W] -> [N,C]
Var global_avg_pool(const Var& x);
/// x: [N,in], weight: [out,in], bias: [out]
Var linear(const Var& x, const Var& weight, const Var& bias);
/// x: [N,C,...]; statistics per sample over each of `groups` channel groups.
Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, float eps = 1e-5f);
/// Row-wise unit norm of [N,D]. Throws std::domain_error on a zero row.
Var l2_normalize(const Var& x);

Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var sum(const Var& x);
/// sum(x * w) for a constant tensor w of the same shape.
Var weighted_sum(const Var& x, const Tensor& w);
/// Mean softmax cross-entropy of logits [N,K] against class indices.
Var cross_entropy(const Var& logits, std::span<const int> labels);

}  // namespace gazessl::nn
