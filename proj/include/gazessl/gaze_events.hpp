// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gazessl/playroom_sim.hpp"
#include "gazessl/visual_geometry.hpp"

namespace gazessl {

struct GazeSample {
  double time_s = 0.0;
  GazePoint point;
};

struct GazeTrace {
  std::vector<GazeSample> samples;
  CameraIntrinsics intr;

  /// Throws unless timestamps strictly increase.
  void validate() const;
  /// True when samples i and i+1 are one frame apart and both inside the frame.
  bool continuous(std::size_t i) const;
};

GazeTrace trace_from_frames(std::span<const FrameRecord> frames, const CameraIntrinsics& intr);

enum class EventKind { Fixation, Saccade };

struct GazeEvent {
  EventKind kind = EventKind::Fixation;
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  std::size_t length() const { return end - start + 1; }
};

struct EventSegmentation {
  std::vector<EventKind> labels;
  std::vector<GazeEvent> events;

  std::size_t saccade_count() const;
};

struct SaccadeThresholds {
  double t1_deg_s = 25.0;
  double t2_deg_s = 10.0;
  double theta_deg = 45.0;
  bool extend_adjacent = true;

  void validate() const;
};

/// Velocity-threshold saccade detector. Runs of samples whose forward velocity
/// reaches t1 are core saccades; each core absorbs at most one neighbouring
/// sample per side whose velocity reaches t2 and whose motion lies within
/// theta of the core's net displacement. Everything else is fixation.
/// Discontinuities (time gaps, out-of-frame samples) split events.
EventSegmentation detect_saccades(const GazeTrace& trace, const SaccadeThresholds& thr = {});

/// Per-sample forward angular velocity in deg/s; 0 across discontinuities and
/// for the last sample.
std::vector<double> angular_velocities(const GazeTrace& trace);

struct FrameLabel {
  std::optional<int> target_object;
  bool holding = false;
};

std::vector<FrameLabel> labels_from_frames(std::span<const FrameRecord> frames);

struct BehaviorMetrics {
  std::optional<double> mean_fixation_s;
  std::optional<double> mean_look_bout_s;  // looking, not holding
  std::optional<double> mean_hold_look_s;  // looking while holding
  double cumulative_look_s = 0.0;
  std::optional<double> mean_saccade_s;
};

/// Bout statistics over a labelled segmentation; absent averages stay absent.
BehaviorMetrics compute_metrics(const EventSegmentation& seg, std::span<const FrameLabel> labels, double fps);

/// Row-major grid of `bins_y` rows by `bins_x` columns; out-of-frame samples
/// land in the nearest edge bin.
std::vector<long> gaze_histogram(const GazeTrace& trace, int bins_x, int bins_y);

struct SessionMetricsRow {
  std::string session_id;
  BehaviorMetrics metrics;
  std::size_t n_samples = 0;
};

/// Columns: session_id,mean_fixation_s,mean_look_bout_s,mean_hold_look_s,
/// cumulative_look_s,mean_saccade_s,n_samples. Absent values are empty.
void write_metrics_csv(const std::filesystem::path& path, std::span<const SessionMetricsRow> rows);
std::vector<SessionMetricsRow> read_metrics_csv(const std::filesystem::path& path);

}  // namespace gazessl
