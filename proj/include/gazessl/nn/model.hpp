// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gazessl/nn/autograd.hpp"
#include "gazessl/rng.hpp"

namespace gazessl::nn {

struct NamedParam {
  std::string name;
  Var var;
};
using ParamList = std::vector<NamedParam>;

/// FNV-1a over names, shapes and raw float bytes.
std::uint64_t param_hash(const ParamList& params);
void copy_values(const ParamList& from, ParamList& to);

/// Kaiming-uniform fan-in weight, seeded.
Tensor kaiming_uniform(const Shape& shape, std::size_t fan_in, Rng& rng);

/// conv3x3 -> group_norm -> relu -> maxpool(2), repeated; global average pool.
class Encoder {
 public:
  explicit Encoder(std::vector<int> widths = {16, 32, 64, 128}, int in_channels = 3, std::uint64_t seed = 0);

  /// x: [N,3,H,W] with H, W divisible by 2^blocks -> [N, width]
  Var forward(const Var& x) const;
  int out_dim() const { return widths_.back(); }
  ParamList params(const std::string& prefix = "encoder") const;
  void set_requires_grad(bool on);
  /// Deep copy whose parameters do not require gradients.
  Encoder frozen_copy() const;

 private:
  struct Block {
    Var weight, bias, gamma, beta;
    int groups = 1;
  };
  std::vector<int> widths_;
  std::vector<Block> blocks_;
};

/// linear -> relu -> linear
class Mlp {
 public:
  Mlp(int in, int hidden, int out, std::uint64_t seed = 0);

  Var forward(const Var& x) const;
  int out_dim() const { return out_; }
  ParamList params(const std::string& prefix) const;
  void set_requires_grad(bool on);

 private:
  Var w1_, b1_, w2_, b2_;
  int out_ = 0;
};

struct ModelSpec {
  std::vector<int> encoder_widths{16, 32, 64, 128};
  int projector_hidden = 128;
  int projection_dim = 64;
  int predictor_hidden = 64;
};

/// Online encoder + projector, and for BYOL a predictor plus target copies of
/// encoder and projector that never require gradients.
class SslModel {
 public:
  SslModel(const ModelSpec& spec, bool with_target, std::uint64_t seed);

  Encoder encoder;
  Mlp projector;
  Mlp predictor;
  Encoder target_encoder;
  Mlp target_projector;
  bool has_target = false;

  /// Everything the optimizer updates.
  ParamList online_params() const;
  ParamList target_params() const;
  /// Online plus target parameters, for checkpoints.
  ParamList all_params() const;
};

}  // namespace gazessl::nn
