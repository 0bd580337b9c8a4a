// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gazessl/image.hpp"
#include "gazessl/playroom_sim.hpp"
#include "gazessl/visual_geometry.hpp"

namespace gazessl {

enum class Strategy { HumanGaze, RandomGaze, NoEyeMovement, ObjectsFixation, BlankBackground };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct ManifestRecord {
  int frame_idx = 0;
  double time_s = 0.0;  // frame_idx / fps rounded to 6 decimals
  std::string crop_file;
  double gaze_x = 0.0;
  double gaze_y = 0.0;
  std::optional<int> target_object;
  bool holding = false;

  bool operator==(const ManifestRecord&) const = default;
};

/// One crop stream. `crops` runs parallel to `records` when pixel data is
/// loaded, and is empty for metadata-only manifests.
struct StreamManifest {
  std::string session_id;
  CameraIntrinsics intr;
  Strategy strategy = Strategy::HumanGaze;
  int crop_size_px = 0;
  std::vector<ManifestRecord> records;
  std::vector<Image> crops;

  std::size_t size() const { return records.size(); }
};

/// Half-open [begin, end) index ranges of records whose frame indices are
/// consecutive. Temporal pairs are only formed inside one run.
std::vector<std::pair<std::size_t, std::size_t>> contiguous_runs(const StreamManifest& m);

double manifest_time(int frame_idx, double fps);

/// Visual angle of the Objects Fixation crop before rescaling.
inline constexpr double kObjectsFixationFovDeg = 30.0;

/// Crop stream for one of the gaze-based strategies. `random_seed` drives the
/// RandomGaze redraws. BlankBackground streams come from build_oracle_stream.
StreamManifest build_stream(std::span<const FrameRecord> session, const std::string& session_id,
                            const CameraIntrinsics& intr, Strategy strategy, int crop_size_px,
                            std::uint64_t random_seed = 0);

/// BlankBackground stream: oracle views passed through in order. Each object's
/// views form one contiguous run; a one-frame gap separates objects.
StreamManifest build_oracle_stream(std::span<const LabeledImage> views, const std::string& session_id,
                                   const CameraIntrinsics& intr, int crop_size_px);

/// Writes `dir/manifest.txt` and `dir/crops/NNNNNN.png`.
void write_manifest(const StreamManifest& m, const std::filesystem::path& dir);
StreamManifest read_manifest(const std::filesystem::path& dir, bool load_crops = true);
std::filesystem::path stream_dir(const std::filesystem::path& root, const std::string& session_id, Strategy s);

enum class SplitUnit { Session, FrameBlock };

struct SplitSpec {
  double train_fraction = 0.75;
  std::uint64_t split_seed = 0;
  SplitUnit unit = SplitUnit::FrameBlock;
  double block_s = 10.0;
  double guard_s = 1.0;

  void validate() const;
};

/// Frame-block split of one manifest. Blocks hold equal record counts; test
/// records closer than guard_s to any train record are dropped.
std::pair<StreamManifest, StreamManifest> split(const StreamManifest& m, const SplitSpec& spec);

/// Session-level or frame-block split over several manifests.
std::pair<std::vector<StreamManifest>, std::vector<StreamManifest>> split(
    const std::vector<StreamManifest>& manifests, const SplitSpec& spec);

enum class ResampleMode { Undersample, Oversample };

/// Indices into `labels` forming the rebalanced set. Undersampling trims each
/// of the top_k most frequent classes to the mean count of the others;
/// oversampling tops up every other class, with replacement, to the mean
/// count of the top_k classes. Kept indices stay in input order; oversampled
/// extras follow.
std::vector<std::size_t> resample(std::span<const int> labels, ResampleMode mode, int top_k, std::uint64_t seed);

}  // namespace gazessl
