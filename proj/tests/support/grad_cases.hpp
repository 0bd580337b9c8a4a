// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gazessl/ssl_train.hpp"
#include "gradcheck.hpp"

namespace gazessl::testing {

struct GradCase {
  std::string name;
  std::function<GradCheckResult(int instance)> run;
};

/// One finite-difference case per differentiable op and per SSL loss.
inline std::vector<GradCase> grad_cases() {
  using namespace nn;
  auto param = [](Tensor t) { return Var::leaf(std::move(t), true); };
  std::vector<GradCase> cases;
  cases.push_back({"conv2d", [=](int i) {
                     Rng rng(100 + i);
                     std::vector<Var> l{param(random_tensor({2, 2, 5, 5}, rng)), param(random_tensor({3, 2, 3, 3}, rng)),
                                        param(random_tensor({3}, rng))};
                     const int stride = 1 + i % 2;
                     const auto w = random_tensor(conv2d(l[0], l[1], l[2], stride).shape(), rng);
                     return grad_check(l, [&] { return conv2d(l[0], l[1], l[2], stride); }, w);
                   }});
  cases.push_back({"relu", [=](int i) {
                     Rng rng(200 + i);
                     std::vector<Var> l{param(away_from_zero({3, 7}, rng, 0.01))};
                     const auto w = random_tensor({3, 7}, rng);
                     return grad_check(l, [&] { return relu(l[0]); }, w);
                   }});
  cases.push_back({"max_pool2d", [=](int i) {
                     Rng rng(300 + i);
                     Tensor x({2, 2, 4, 4});
                     std::vector<int> perm(x.numel());
                     for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = static_cast<int>(k);
                     for (std::size_t k = perm.size() - 1; k > 0; --k) std::swap(perm[k], perm[rng.below(k + 1)]);
                     for (std::size_t k = 0; k < perm.size(); ++k) x[k] = 0.05f * perm[k] - 1.0f;
                     std::vector<Var> l{param(x)};
                     const auto w = random_tensor({2, 2, 2, 2}, rng);
                     return grad_check(l, [&] { return max_pool2d(l[0]); }, w);
                   }});
  cases.push_back({"global_avg_pool", [=](int i) {
                     Rng rng(400 + i);
                     std::vector<Var> l{param(random_tensor({2, 3, 3, 4}, rng))};
                     const auto w = random_tensor({2, 3}, rng);
                     return grad_check(l, [&] { return global_avg_pool(l[0]); }, w);
                   }});
  cases.push_back({"linear", [=](int i) {
                     Rng rng(500 + i);
                     std::vector<Var> l{param(random_tensor({4, 5}, rng)), param(random_tensor({3, 5}, rng)),
                                        param(random_tensor({3}, rng))};
                     const auto w = random_tensor({4, 3}, rng);
                     return grad_check(l, [&] { return linear(l[0], l[1], l[2]); }, w);
                   }});
  cases.push_back({"group_norm", [=](int i) {
                     Rng rng(600 + i);
                     std::vector<Var> l{param(random_tensor({2, 4, 3, 3}, rng)), param(random_tensor({4}, rng, 0.5, 1.5)),
                                        param(random_tensor({4}, rng))};
                     const auto w = random_tensor({2, 4, 3, 3}, rng);
                     return grad_check(l, [&] { return group_norm(l[0], 2, l[1], l[2]); }, w);
                   }});
  cases.push_back({"l2_normalize", [=](int i) {
                     Rng rng(700 + i);
                     std::vector<Var> l{param(random_tensor({3, 6}, rng))};
                     const auto w = random_tensor({3, 6}, rng);
                     return grad_check(l, [&] { return l2_normalize(l[0]); }, w);
                   }});
  cases.push_back({"add_mul", [=](int i) {
                     Rng rng(800 + i);
                     std::vector<Var> l{param(random_tensor({3, 4}, rng)), param(random_tensor({3, 4}, rng))};
                     const auto w = random_tensor({3, 4}, rng);
                     return grad_check(l, [&] { return mul(add(l[0], l[1]), l[1]); }, w);
                   }});
  cases.push_back({"sum_weighted_sum", [=](int i) {
                     Rng rng(850 + i);
                     std::vector<Var> l{param(random_tensor({3, 4}, rng))};
                     const auto w = random_tensor({3, 4}, rng);
                     return grad_check(l, [&] { return add(sum(l[0]), weighted_sum(l[0], w)); });
                   }});
  cases.push_back({"cross_entropy", [=](int i) {
                     Rng rng(900 + i);
                     std::vector<Var> l{param(random_tensor({5, 4}, rng, -2, 2))};
                     const std::vector<int> labels{0, 3, 1, 2, 3};
                     return grad_check(l, [&] { return cross_entropy(l[0], labels); });
                   }});
  cases.push_back({"concat_rows", [=](int i) {
                     Rng rng(950 + i);
                     std::vector<Var> l{param(random_tensor({2, 3}, rng)), param(random_tensor({2, 3}, rng))};
                     const auto w = random_tensor({4, 3}, rng);
                     return grad_check(l, [&] { return concat_rows(l[0], l[1]); }, w);
                   }});
  cases.push_back({"simclr_tt_loss", [=](int i) {
                     Rng rng(1100 + i);
                     const std::size_t B = 2 * (2 + rng.below(5)), D = 2 + rng.below(8);
                     const double tau = rng.uniform(0.1, 1.0);
                     std::vector<Var> l{param(random_tensor({B, D}, rng))};
                     return grad_check(l, [&] { return simclr_tt_loss(l2_normalize(l[0]), tau); });
                   }});
  cases.push_back({"byol_tt_loss", [=](int i) {
                     Rng rng(1200 + i);
                     const std::size_t N = 1 + rng.below(6), D = 2 + rng.below(8);
                     std::vector<Var> l{param(away_from_zero({N, D}, rng, 0.2))};
                     const auto target = Var::leaf(random_tensor({N, D}, rng));
                     return grad_check(l, [&] { return byol_tt_loss(l[0], target); });
                   }});
  return cases;
}

}  // namespace gazessl::testing
