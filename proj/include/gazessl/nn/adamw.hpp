// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gazessl/nn/model.hpp"

namespace gazessl::nn {

struct AdamWConfig {
  float lr = 1e-2f;
  float weight_decay = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// AdamW with decoupled weight decay: p <- p - lr*wd*p, then the
/// bias-corrected Adam step.
class AdamW {
 public:
  AdamW(ParamList params, AdamWConfig cfg = {});

  /// Throws std::runtime_error naming the parameter if a gradient is not finite.
  void step();
  void zero_grad();

  long step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }
  const Tensor& first_moment(std::size_t i) const { return m_.at(i); }
  const Tensor& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  ParamList params_;
  AdamWConfig cfg_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

/// xi <- m*xi + (1-m)*theta, elementwise.
void ema_update(const ParamList& theta, ParamList& xi, float momentum);

}  // namespace gazessl::nn
