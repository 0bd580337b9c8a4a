// SPDX-License-Identifier: Apache-2.0
#include "gazessl/nn/adamw.hpp"

#include <cmath>
#include <stdexcept>

namespace gazessl::nn {

AdamW::AdamW(ParamList params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr > 0.0f) || cfg_.weight_decay < 0.0f) throw std::invalid_argument("AdamW: bad lr/weight_decay");
  if (!(cfg_.beta1 >= 0.0f && cfg_.beta1 < 1.0f && cfg_.beta2 >= 0.0f && cfg_.beta2 < 1.0f)) {
    throw std::invalid_argument("AdamW: betas must be in [0,1)");
  }
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros_like(p.var.value()));
    v_.push_back(Tensor::zeros_like(p.var.value()));
  }
}

void AdamW::step() {
  for (auto& p : params_) {
    if (!p.var.grad().all_finite()) throw std::runtime_error("AdamW: non-finite gradient in " + p.name);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
  const float decay = 1.0f - cfg_.lr * cfg_.weight_decay;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& w = params_[i].var.mutable_value();
    const Tensor& g = params_[i].var.grad();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < w.numel(); ++k) {
      w[k] *= decay;
      m[k] = cfg_.beta1 * m[k] + (1.0f - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0f - cfg_.beta2) * g[k] * g[k];
      const double mh = m[k] / bc1;
      const double vh = v[k] / bc2;
      w[k] -= static_cast<float>(cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

void ema_update(const ParamList& theta, ParamList& xi, float momentum) {
  if (!(momentum >= 0.0f && momentum <= 1.0f)) throw std::invalid_argument("ema_update: momentum outside [0,1]");
  if (theta.size() != xi.size()) throw std::invalid_argument("ema_update: parameter count mismatch");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const Tensor& t = theta[i].var.value();
    Tensor& x = xi[i].var.mutable_value();
    if (t.shape() != x.shape()) throw std::invalid_argument("ema_update: shape mismatch for " + theta[i].name);
    if (momentum == 1.0f) continue;
    for (std::size_t k = 0; k < x.numel(); ++k) x[k] = momentum * x[k] + (1.0f - momentum) * t[k];
  }
}

}  // namespace gazessl::nn
