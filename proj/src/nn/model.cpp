// SPDX-License-Identifier: Apache-2.0
#include "gazessl/nn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "gazessl/nn/ops.hpp"

namespace gazessl::nn {

std::uint64_t param_hash(const ParamList& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : params) {
    feed(p.name.data(), p.name.size());
    for (auto d : p.var.shape()) feed(&d, sizeof d);
    feed(p.var.value().ptr(), p.var.value().numel() * sizeof(float));
  }
  return h;
}

void copy_values(const ParamList& from, ParamList& to) {
  if (from.size() != to.size()) throw std::invalid_argument("copy_values: parameter count mismatch");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].var.shape() != to[i].var.shape()) {
      throw std::invalid_argument("copy_values: shape mismatch for " + from[i].name);
    }
    to[i].var.mutable_value() = from[i].var.value();
  }
}

Tensor kaiming_uniform(const Shape& shape, std::size_t fan_in, Rng& rng) {
  Tensor t(shape);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

Encoder::Encoder(std::vector<int> widths, int in_channels, std::uint64_t seed) : widths_(std::move(widths)) {
  if (widths_.empty()) throw std::invalid_argument("Encoder: need at least one block");
  Rng rng(mix_seed(seed ^ 0xE5C0DE5ULL));
  int c = in_channels;
  for (int w : widths_) {
    if (w < 1) throw std::invalid_argument("Encoder: width must be positive");
    Block b;
    const auto W = static_cast<std::size_t>(w), C = static_cast<std::size_t>(c);
    b.weight = Var::leaf(kaiming_uniform({W, C, 3, 3}, C * 9, rng), true);
    b.bias = Var::leaf(Tensor({W}), true);
    b.gamma = Var::leaf(Tensor({W}, 1.0f), true);
    b.beta = Var::leaf(Tensor({W}), true);
    b.groups = std::gcd(8, w);
    blocks_.push_back(std::move(b));
    c = w;
  }
}

Var Encoder::forward(const Var& x) const {
  Var h = x;
  for (const auto& b : blocks_) {
    h = conv2d(h, b.weight, b.bias, 1, 1);
    h = group_norm(h, b.groups, b.gamma, b.beta);
    h = relu(h);
    h = max_pool2d(h, 2);
  }
  return global_avg_pool(h);
}

ParamList Encoder::params(const std::string& prefix) const {
  ParamList out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = prefix + ".block" + std::to_string(i) + ".";
    out.push_back({p + "conv.weight", blocks_[i].weight});
    out.push_back({p + "conv.bias", blocks_[i].bias});
    out.push_back({p + "norm.gamma", blocks_[i].gamma});
    out.push_back({p + "norm.beta", blocks_[i].beta});
  }
  return out;
}

void Encoder::set_requires_grad(bool on) {
  for (auto& b : blocks_) {
    for (Var* v : {&b.weight, &b.bias, &b.gamma, &b.beta}) v->node().requires_grad = on;
  }
}

Encoder Encoder::frozen_copy() const {
  Encoder out = *this;
  for (auto& b : out.blocks_) {
    for (Var* v : {&b.weight, &b.bias, &b.gamma, &b.beta}) *v = Var::leaf(v->value(), false);
  }
  return out;
}

Mlp::Mlp(int in, int hidden, int out, std::uint64_t seed) : out_(out) {
  if (in < 1 || hidden < 1 || out < 1) throw std::invalid_argument("Mlp: sizes must be positive");
  Rng rng(mix_seed(seed ^ 0x3A1FULL));
  const auto I = static_cast<std::size_t>(in), H = static_cast<std::size_t>(hidden),
             O = static_cast<std::size_t>(out);
  w1_ = Var::leaf(kaiming_uniform({H, I}, I, rng), true);
  b1_ = Var::leaf(Tensor({H}), true);
  w2_ = Var::leaf(kaiming_uniform({O, H}, H, rng), true);
  b2_ = Var::leaf(Tensor({O}), true);
}

Var Mlp::forward(const Var& x) const { return linear(relu(linear(x, w1_, b1_)), w2_, b2_); }

ParamList Mlp::params(const std::string& prefix) const {
  return {{prefix + ".fc1.weight", w1_}, {prefix + ".fc1.bias", b1_},
          {prefix + ".fc2.weight", w2_}, {prefix + ".fc2.bias", b2_}};
}

void Mlp::set_requires_grad(bool on) {
  for (Var* v : {&w1_, &b1_, &w2_, &b2_}) v->node().requires_grad = on;
}

SslModel::SslModel(const ModelSpec& spec, bool with_target, std::uint64_t seed)
    : encoder(spec.encoder_widths, 3, mix_seed(seed + 1)),
      projector(spec.encoder_widths.back(), spec.projector_hidden, spec.projection_dim, mix_seed(seed + 2)),
      predictor(spec.projection_dim, spec.predictor_hidden, spec.projection_dim, mix_seed(seed + 3)),
      target_encoder(spec.encoder_widths, 3, mix_seed(seed + 1)),
      target_projector(spec.encoder_widths.back(), spec.projector_hidden, spec.projection_dim, mix_seed(seed + 2)),
      has_target(with_target) {
  target_encoder.set_requires_grad(false);
  target_projector.set_requires_grad(false);
  if (!has_target) predictor.set_requires_grad(false);
}

ParamList SslModel::online_params() const {
  ParamList out = encoder.params("encoder");
  for (auto& p : projector.params("projector")) out.push_back(p);
  if (has_target) {
    for (auto& p : predictor.params("predictor")) out.push_back(p);
  }
  return out;
}

ParamList SslModel::target_params() const {
  if (!has_target) return {};
  ParamList out = target_encoder.params("target_encoder");
  for (auto& p : target_projector.params("target_projector")) out.push_back(p);
  return out;
}

ParamList SslModel::all_params() const {
  ParamList out = online_params();
  for (auto& p : target_params()) out.push_back(p);
  return out;
}

}  // namespace gazessl::nn
