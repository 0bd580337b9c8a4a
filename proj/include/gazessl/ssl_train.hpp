// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gazessl/nn/model.hpp"
#include "gazessl/rng.hpp"
#include "gazessl/stream_builder.hpp"

namespace gazessl {

enum class SslMethod { SimClrTT, ByolTT };

std::string to_string(SslMethod m);
SslMethod ssl_method_from_string(const std::string& s);

struct SslConfig {
  SslMethod method = SslMethod::SimClrTT;
  double delta_t_s = 1.0 / 30.0;
  double temperature = 0.08;
  int batch_size = 64;
  int epochs = 30;
  double lr = 1e-2;
  double weight_decay = 1e-4;
  double ema_momentum = 0.99;
  std::uint64_t seed = 0;
  bool fixed_offset = false;   // always use round(delta_t_s * fps)
  bool symmetric_byol = false;
  nn::ModelSpec model;

  void validate(double fps) const;
  /// Largest offset in frames, round(delta_t_s * fps).
  int max_offset(double fps) const;
};

struct PairBatch {
  nn::Tensor anchors;    // [N,3,S,S]
  nn::Tensor positives;  // [N,3,S,S]
  std::vector<int> offsets_frames;
  std::vector<std::size_t> manifest_index;
  std::vector<std::size_t> anchor_record;

  std::size_t size() const { return offsets_frames.size(); }
};

/// Draws temporal pairs from decoded crop streams. Anchors are uniform over
/// every record that has a successor in its contiguous run; the offset is
/// uniform over {1..K} with K = round(delta_t_s * fps) cut at the run end.
class PairSampler {
 public:
  PairSampler(std::span<const StreamManifest> manifests, double delta_t_s, bool fixed_offset = false);

  PairBatch sample(int batch_size, Rng& rng) const;
  std::size_t total_frames() const { return total_frames_; }
  std::size_t valid_positions() const { return positions_.size(); }
  int max_offset() const { return max_offset_; }
  int crop_size() const { return crop_; }

 private:
  struct Position {
    std::uint32_t manifest;
    std::uint32_t record;
    std::uint32_t run_end;  // exclusive
  };
  std::vector<std::vector<float>> pixels_;  // per manifest, CHW per record
  std::vector<Position> positions_;
  std::size_t total_frames_ = 0;
  int max_offset_ = 1;
  int crop_ = 0;
  bool fixed_ = false;
};

PairBatch sample_pairs(std::span<const StreamManifest> manifests, double delta_t_s, int batch_size, Rng& rng,
                       bool fixed_offset = false);

/// z: [2N,D] unit rows; row i pairs with row (i+N) mod 2N. Softmax over every
/// k != i (positive included), averaged over all 2N anchors.
nn::Var simclr_tt_loss(const nn::Var& z, double temperature);

/// Mean over rows of 2 - 2 cos(q, z_target).
nn::Var byol_tt_loss(const nn::Var& q, const nn::Var& z_target);

/// Stacks [N,...] and [N,...] into [2N,...] as a recorded op.
nn::Var concat_rows(const nn::Var& a, const nn::Var& b);

struct TrainResult {
  nn::SslModel model;
  std::vector<double> epoch_loss;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Throws std::runtime_error on a non-finite loss naming the epoch and batch.
TrainResult train(std::span<const StreamManifest> manifests, const SslConfig& cfg,
                  const EpochCallback& on_epoch = {});

void write_loss_curve(const std::vector<double>& epoch_loss, const std::filesystem::path& path);
std::vector<double> read_loss_curve(const std::filesystem::path& path);

}  // namespace gazessl
