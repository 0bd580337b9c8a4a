// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "gazessl/eval_stats.hpp"
#include "gazessl/gaze_events.hpp"
#include "gazessl/playroom_sim.hpp"
#include "gazessl/ssl_train.hpp"
#include "gazessl/stream_builder.hpp"

namespace gazessl {

struct SessionSpec {
  std::string id;
  std::string group;  // "toddler", "adult", ...
  SessionConfig config;
};

/// Matrix strategies. ToddlerLike and AdultLike crop at the recorded gaze of
/// the sessions in the matching group; Random, NoEyeMovement and
/// ObjectsFixation are built from the toddler sessions; BlankBackground
/// trains on oracle views.
enum class MatrixStrategy { ToddlerLike, AdultLike, Random, NoEyeMovement, ObjectsFixation, BlankBackground };

std::string to_string(MatrixStrategy s);
MatrixStrategy matrix_strategy_from_string(const std::string& s);

struct CellSpec {
  MatrixStrategy strategy = MatrixStrategy::ToddlerLike;
  int crop_size_px = 32;
  double delta_t_s = 1.0 / 30.0;
  std::uint64_t seed = 0;
  SslMethod method = SslMethod::SimClrTT;
  std::vector<std::string> sessions;  // empty: every session of the default group

  /// e.g. "ToddlerLike_c32_dt0.0333_s0_simclr" plus "_on_<ids>" when sessions are given.
  std::string id() const;
};

struct ExperimentConfig {
  std::filesystem::path output_root = "gaze_ssl_out";
  std::vector<SessionSpec> sessions;
  SessionSpec probe_session;
  std::vector<MatrixStrategy> strategies;
  std::vector<int> crop_sizes;
  std::vector<double> delta_ts;
  std::vector<SslMethod> methods;
  std::vector<std::uint64_t> seeds;
  std::vector<CellSpec> cells;  // explicit cells, run after the grid
  SslConfig ssl;                // method, delta_t and seed are set per cell
  SplitSpec probe_split;
  ProbeConfig probe;
  int oracle_views = 64;
  SaccadeThresholds saccades;

  void validate() const;
  /// Grid cells followed by explicit cells, duplicates removed.
  std::vector<CellSpec> expand_cells() const;
  const SessionSpec& session(const std::string& id) const;
};

ExperimentConfig experiment_from_json_text(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Canonical JSON: every key present, sorted, fixed number formatting.
std::string canonical_json(const ExperimentConfig& cfg);
/// 16 hex digits of FNV-1a over the canonical JSON.
std::string config_hash(const ExperimentConfig& cfg);
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// Content hash of a crop stream: records and decoded pixels.
std::uint64_t stream_hash(const StreamManifest& m);

struct CellResult {
  CellSpec cell;
  std::optional<double> accuracy;
  std::vector<double> epoch_loss;
  std::string cache_key;
  std::string error;
  bool from_cache = false;
  bool ok() const { return error.empty() && accuracy.has_value(); }
};

struct MatrixResult {
  std::string config_hash;
  std::vector<CellResult> cells;
  std::vector<StatsRow> stats;
  bool all_ok() const;
};

struct BehaviorSample {
  std::string session_id;
  std::string group;
  BehaviorMetrics metrics;
  double accuracy = 0.0;
};

struct RunOptions {
  bool force = false;  // ignore the cache
  int jobs = 1;
  std::optional<std::uint64_t> seed_override;
  std::string cell_filter;  // substring of the cell id
  std::function<void(const std::string&)> log;
};

/// Ties simulation, stream building, training and probing together. Sessions
/// are simulated once and shared by every cell.
class ExperimentRunner {
 public:
  ExperimentRunner(ExperimentConfig cfg, RunOptions opts = {});

  const ExperimentConfig& config() const { return cfg_; }
  const std::string& hash() const { return hash_; }
  std::vector<CellSpec> selected_cells() const;

  const std::vector<FrameRecord>& frames(const std::string& session_id);
  const std::vector<FrameRecord>& probe_frames();
  /// Training streams for a cell.
  std::vector<StreamManifest> training_streams(const CellSpec& cell);
  /// Frame-block split of the probe session's Objects Fixation stream at `crop`.
  const std::pair<StreamManifest, StreamManifest>& probe_split(int crop);

  /// Trains the cell (or loads it from the cache) and writes loss curve and
  /// checkpoint into the cell directory. Throws on failure.
  TrainResult train_cell(const CellSpec& cell, std::string* cache_key = nullptr, bool* from_cache = nullptr);
  /// Linear probe on the cell's checkpoint.
  ProbeResult probe_cell(const CellSpec& cell);
  /// Full cell: train + probe with caching. Failures are captured.
  CellResult run_cell(const CellSpec& cell);
  /// Every selected cell over a pool of `jobs` workers, then CSVs under results/.
  MatrixResult run_matrix();

  /// One sample per session that has successful single-session ToddlerLike
  /// or AdultLike cells; accuracy is their mean over seeds.
  std::vector<BehaviorSample> behavior_samples(const std::vector<CellResult>& cells);

  std::filesystem::path cell_dir(const CellSpec& cell) const;
  std::filesystem::path results_dir() const;

 private:
  void log(const std::string& msg) const;
  std::string cell_key(const CellSpec& cell, const std::vector<StreamManifest>& streams, int crop);
  nn::SslModel make_model(const CellSpec& cell) const;
  SslConfig ssl_for(const CellSpec& cell) const;

  ExperimentConfig cfg_;
  RunOptions opts_;
  std::string hash_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<std::vector<FrameRecord>>> frames_;
  std::map<int, std::shared_ptr<std::pair<StreamManifest, StreamManifest>>> probe_splits_;
  std::map<int, std::uint64_t> probe_hashes_;
};

/// t-tests across seeds between every pair of strategies sharing crop size,
/// delta_t and method, each with at least two successful seeds.
std::vector<StatsRow> strategy_ttests(const std::vector<CellResult>& cells);

/// Behaviour metrics of a simulated session from its detected events and
/// ground-truth labels.
BehaviorMetrics session_metrics(std::span<const FrameRecord> frames, const CameraIntrinsics& intr,
                                const SaccadeThresholds& thr = {});

struct CorrelationRow {
  std::string grouping;  // "pooled" or a group name
  std::string metric;
  std::optional<double> r;
  std::optional<double> p_value;
  std::size_t n = 0;
};

inline const std::vector<std::string>& behavior_metric_names() {
  static const std::vector<std::string> names{"mean_fixation_s", "mean_look_bout_s", "mean_hold_look_s",
                                              "cumulative_look_s", "mean_saccade_s"};
  return names;
}

/// Pearson r of accuracy against each metric, pooled and per group. Exactly
/// one row per metric per grouping; r is absent below three samples or when
/// either variable is constant.
std::vector<CorrelationRow> behavior_correlations(const std::vector<BehaviorSample>& samples);

void write_correlations_csv(const std::vector<CorrelationRow>& rows, const std::string& config_hash,
                            const std::filesystem::path& path);

}  // namespace gazessl
