// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>

#include "gazessl/eval_stats.hpp"
#include "gazessl/gaze_events.hpp"
#include "../support/planted_saccades.hpp"

using namespace gazessl;
using gazessl::testing::planted_trace;

namespace {

const CameraIntrinsics kCam{640, 480, 72.0, 30.0};
const double kPpd = 640.0 / 72.0;

GazeTrace trace_of(const std::vector<GazePoint>& pts, const CameraIntrinsics& intr = kCam) {
  GazeTrace t;
  t.intr = intr;
  for (std::size_t i = 0; i < pts.size(); ++i) t.samples.push_back({i / intr.fps, pts[i]});
  return t;
}

void expect_partition(const EventSegmentation& seg, std::size_t n) {
  ASSERT_EQ(seg.labels.size(), n);
  std::size_t next = 0;
  for (const auto& e : seg.events) {
    ASSERT_EQ(e.start, next);
    ASSERT_LE(e.start, e.end);
    for (std::size_t i = e.start; i <= e.end; ++i) ASSERT_EQ(seg.labels[i], e.kind);
    next = e.end + 1;
  }
  ASSERT_EQ(next, n);
}

}  // namespace

TEST(DetectSaccades, StationaryTrace) {
  const auto seg = detect_saccades(trace_of(std::vector<GazePoint>(50, {320, 240})));
  EXPECT_EQ(seg.saccade_count(), 0u);
  ASSERT_EQ(seg.events.size(), 1u);
  EXPECT_EQ(seg.events[0].kind, EventKind::Fixation);
  EXPECT_EQ(seg.events[0].length(), 50u);
}

TEST(DetectSaccades, SingleJump) {
  std::vector<GazePoint> pts(20, {300, 240});
  for (std::size_t i = 10; i < pts.size(); ++i) pts[i].x += 3 * kPpd;
  const auto t = trace_of(pts);
  const auto v = angular_velocities(t);
  EXPECT_NEAR(v[9], 90.0, 1e-9);
  const auto seg = detect_saccades(t);
  ASSERT_EQ(seg.saccade_count(), 1u);
  EXPECT_EQ(seg.labels[9], EventKind::Saccade);
  EXPECT_EQ(std::count(seg.labels.begin(), seg.labels.end(), EventKind::Saccade), 1);
  expect_partition(seg, pts.size());
}

TEST(DetectSaccades, AdjacentSampleAbsorbed) {
  std::vector<GazePoint> pts(20, {300, 240});
  for (std::size_t i = 9; i < pts.size(); ++i) pts[i].x += 0.5 * kPpd;
  for (std::size_t i = 10; i < pts.size(); ++i) pts[i].x += 3 * kPpd;
  const auto t = trace_of(pts);
  EXPECT_NEAR(angular_velocities(t)[8], 15.0, 1e-9);
  const auto seg = detect_saccades(t);
  ASSERT_EQ(seg.saccade_count(), 1u);
  EXPECT_EQ(seg.labels[8], EventKind::Saccade);
  EXPECT_EQ(seg.labels[9], EventKind::Saccade);
  EXPECT_EQ(seg.labels[7], EventKind::Fixation);
  EXPECT_EQ(seg.labels[10], EventKind::Fixation);

  // opposite direction or below t2 stays fixation
  std::vector<GazePoint> back(pts);
  for (std::size_t i = 9; i < back.size(); ++i) back[i].x -= 1.0 * kPpd;
  EXPECT_EQ(detect_saccades(trace_of(back)).labels[8], EventKind::Fixation);
  SaccadeThresholds off;
  off.extend_adjacent = false;
  EXPECT_EQ(detect_saccades(t, off).labels[8], EventKind::Fixation);
}

TEST(DetectSaccades, Errors) {
  EXPECT_THROW(detect_saccades(trace_of({{1, 1}})), std::invalid_argument);
  SaccadeThresholds bad;
  bad.t2_deg_s = 30;
  EXPECT_THROW(detect_saccades(trace_of({{1, 1}, {2, 2}}), bad), std::invalid_argument);
  bad = {};
  bad.theta_deg = 181;
  EXPECT_THROW(detect_saccades(trace_of({{1, 1}, {2, 2}}), bad), std::invalid_argument);
  auto t = trace_of({{1, 1}, {2, 2}});
  t.samples[1].time_s = 0;
  EXPECT_THROW(detect_saccades(t), std::invalid_argument);
}

TEST(DetectSaccades, GapsSplitEvents) {
  auto t = trace_of(std::vector<GazePoint>(20, {320, 240}));
  for (std::size_t i = 10; i < 20; ++i) t.samples[i].time_s += 1.0;
  const auto seg = detect_saccades(t);
  EXPECT_EQ(seg.events.size(), 2u);
  EXPECT_EQ(seg.saccade_count(), 0u);
  expect_partition(seg, 20);
  // out-of-frame samples carry no velocity
  auto o = trace_of(std::vector<GazePoint>(20, {320, 240}));
  o.samples[5].point = {-50, 240};
  const auto v = angular_velocities(o);
  EXPECT_EQ(v[4], 0.0);
  EXPECT_EQ(v[5], 0.0);
  EXPECT_EQ(detect_saccades(o).saccade_count(), 0u);
}

TEST(DetectSaccades, PlantedOracleExact) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto p = planted_trace(seed);
    const auto seg = detect_saccades(p.trace);
    expect_partition(seg, p.trace.samples.size());
    ASSERT_EQ(seg.saccade_count(), p.saccades.size()) << "seed " << seed;
    std::size_t k = 0;
    for (const auto& e : seg.events) {
      if (e.kind != EventKind::Saccade) continue;
      EXPECT_EQ(e.start, p.saccades[k].first);
      EXPECT_EQ(e.end, p.saccades[k].second);
      ++k;
    }
    const auto sc = gazessl::testing::score_detection(p, seg);
    EXPECT_EQ(sc.precision, 1.0);
    EXPECT_EQ(sc.recall, 1.0);
  }
}

TEST(DetectSaccades, PartitionAndAlternationOnRandomTraces) {
  Rng rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<GazePoint> pts;
    GazePoint p{320, 240};
    const int n = 2 + static_cast<int>(rng.below(200));
    for (int i = 0; i < n; ++i) {
      const double s = rng.uniform() < 0.2 ? 40 : 2;
      p.x = std::clamp(p.x + s * rng.normal(), 0.0, 639.0);
      p.y = std::clamp(p.y + s * rng.normal(), 0.0, 479.0);
      pts.push_back(p);
    }
    const auto seg = detect_saccades(trace_of(pts));
    expect_partition(seg, pts.size());
    for (std::size_t i = 1; i < seg.events.size(); ++i) ASSERT_NE(seg.events[i].kind, seg.events[i - 1].kind);
  }
}

TEST(DetectSaccades, TranslationInvariant) {
  Rng rng(6);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<GazePoint> a, b;
    GazePoint p{300, 200};
    for (int i = 0; i < 120; ++i) {
      const double s = rng.uniform() < 0.15 ? 25 : 1;
      p.x = std::clamp(p.x + s * rng.normal(), 50.0, 500.0);
      p.y = std::clamp(p.y + s * rng.normal(), 50.0, 350.0);
      a.push_back(p);
      b.push_back({p.x + 37.25, p.y + 61.5});
    }
    EXPECT_EQ(detect_saccades(trace_of(a)).labels, detect_saccades(trace_of(b)).labels);
  }
}

TEST(DetectSaccades, RaisingT1NeverAddsSaccades) {
  Rng rng(7);
  SaccadeThresholds lo, hi;
  lo.extend_adjacent = hi.extend_adjacent = false;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<GazePoint> pts;
    GazePoint p{320, 240};
    for (int i = 0; i < 100; ++i) {
      p.x = std::clamp(p.x + 10 * rng.normal(), 0.0, 639.0);
      p.y = std::clamp(p.y + 10 * rng.normal(), 0.0, 479.0);
      pts.push_back(p);
    }
    const auto t = trace_of(pts);
    lo.t1_deg_s = rng.uniform(11, 100);
    hi.t1_deg_s = lo.t1_deg_s + rng.uniform(0, 100);
    const auto cnt = [&](const SaccadeThresholds& th) {
      const auto l = detect_saccades(t, th).labels;
      return std::count(l.begin(), l.end(), EventKind::Saccade);
    };
    ASSERT_LE(cnt(hi), cnt(lo));
  }
}

TEST(ComputeMetrics, SingleFixation) {
  const auto seg = detect_saccades(trace_of(std::vector<GazePoint>(15, {320, 240})));
  const std::vector<FrameLabel> labels(15);
  const auto m = compute_metrics(seg, labels, 30);
  EXPECT_DOUBLE_EQ(*m.mean_fixation_s, 0.5);
  EXPECT_EQ(m.cumulative_look_s, 0.0);
  EXPECT_FALSE(m.mean_look_bout_s);
  EXPECT_FALSE(m.mean_hold_look_s);
  EXPECT_FALSE(m.mean_saccade_s);
}

TEST(ComputeMetrics, BoutArithmetic) {
  std::vector<FrameLabel> labels;
  labels.insert(labels.end(), 60, FrameLabel{0, true});
  labels.insert(labels.end(), 30, FrameLabel{std::nullopt, false});
  labels.insert(labels.end(), 30, FrameLabel{1, false});
  const auto seg = detect_saccades(trace_of(std::vector<GazePoint>(120, {320, 240})));
  const auto m = compute_metrics(seg, labels, 30);
  EXPECT_DOUBLE_EQ(*m.mean_hold_look_s, 2.0);
  EXPECT_DOUBLE_EQ(*m.mean_look_bout_s, 1.0);
  EXPECT_DOUBLE_EQ(m.cumulative_look_s, 3.0);
  EXPECT_THROW(compute_metrics(seg, std::vector<FrameLabel>(10), 30), std::invalid_argument);
}

TEST(ComputeMetrics, AllSaccadeHasNoFixationMean) {
  EventSegmentation seg;
  seg.labels.assign(10, EventKind::Saccade);
  seg.events.push_back({EventKind::Saccade, 0, 9});
  const auto m = compute_metrics(seg, std::vector<FrameLabel>(10), 30);
  EXPECT_FALSE(m.mean_fixation_s.has_value());
  EXPECT_NEAR(*m.mean_saccade_s, 1.0 / 3.0, 1e-12);
}

TEST(ComputeMetrics, BoundsOnSimulatedSessions) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SessionConfig c;
    c.duration_s = 60;
    c.render_images = false;
    c.policy = GazePolicy::toddler_like(seed);
    const auto f = simulate_session(c);
    const auto m = compute_metrics(detect_saccades(trace_from_frames(f, c.intr)), labels_from_frames(f), 30);
    EXPECT_GE(m.cumulative_look_s, 0.0);
    EXPECT_LE(m.cumulative_look_s, c.duration_s + 1e-9);
    for (const auto& v : {m.mean_fixation_s, m.mean_look_bout_s, m.mean_hold_look_s, m.mean_saccade_s}) {
      ASSERT_TRUE(v.has_value());
      EXPECT_GT(*v, 0.0);
    }
  }
}

TEST(ComputeMetrics, FixationDurationTracksConfig) {
  std::vector<double> configured, detected;
  for (int i = 0; i < 10; ++i) {
    SessionConfig c;
    c.duration_s = 300;
    c.render_images = false;
    c.policy = GazePolicy::toddler_like(100 + i);
    c.policy.mean_fixation_s = 0.2 + i * (2.8 / 9);
    const auto f = simulate_session(c);
    const auto m = compute_metrics(detect_saccades(trace_from_frames(f, c.intr)), labels_from_frames(f), 30);
    configured.push_back(c.policy.mean_fixation_s);
    detected.push_back(*m.mean_fixation_s);
  }
  EXPECT_GT(*pearson(configured, detected).statistic, 0.9);
}

TEST(GazeHistogram, Examples) {
  const auto one = gaze_histogram(trace_of(std::vector<GazePoint>(25, {100, 100})), 4, 4);
  EXPECT_EQ(std::count(one.begin(), one.end(), 0L), 15);
  EXPECT_EQ(std::accumulate(one.begin(), one.end(), 0L), 25);

  Rng rng(8);
  std::vector<GazePoint> pts;
  for (int i = 0; i < 100000; ++i) pts.push_back({rng.uniform(0, 640), rng.uniform(0, 480)});
  const auto h = gaze_histogram(trace_of(pts), 2, 2);
  for (long c : h) EXPECT_NEAR(c / 1e5, 0.25, 0.02);
  EXPECT_THROW(gaze_histogram(trace_of(pts), 0, 2), std::invalid_argument);
}

TEST(GazeHistogram, ConservesCounts) {
  Rng rng(9);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<GazePoint> pts;
    const int n = 1 + static_cast<int>(rng.below(500));
    for (int i = 0; i < n; ++i) pts.push_back({rng.uniform(-50, 700), rng.uniform(-50, 530)});
    const int bx = 1 + static_cast<int>(rng.below(20)), by = 1 + static_cast<int>(rng.below(20));
    const auto h = gaze_histogram(trace_of(pts), bx, by);
    ASSERT_EQ(h.size(), static_cast<std::size_t>(bx * by));
    ASSERT_EQ(std::accumulate(h.begin(), h.end(), 0L), n);
  }
}

TEST(MetricsCsv, RoundTripKeepsAbsentValues) {
  std::vector<SessionMetricsRow> rows(2);
  rows[0].session_id = "a";
  rows[0].metrics.mean_fixation_s = 0.25;
  rows[0].metrics.mean_hold_look_s = 3.5;
  rows[0].metrics.cumulative_look_s = 12;
  rows[0].n_samples = 300;
  rows[1].session_id = "b";
  rows[1].metrics.mean_saccade_s = 0.1;
  rows[1].n_samples = 9;
  const auto path = std::filesystem::temp_directory_path() / "gazessl_metrics.csv";
  write_metrics_csv(path, rows);
  const auto back = read_metrics_csv(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].session_id, "a");
  EXPECT_EQ(back[0].metrics.mean_fixation_s, 0.25);
  EXPECT_FALSE(back[0].metrics.mean_look_bout_s);
  EXPECT_EQ(back[0].metrics.mean_hold_look_s, 3.5);
  EXPECT_EQ(back[0].metrics.cumulative_look_s, 12);
  EXPECT_EQ(back[1].n_samples, 9u);
  EXPECT_FALSE(back[1].metrics.mean_fixation_s);
  EXPECT_EQ(back[1].metrics.mean_saccade_s, 0.1);
  std::filesystem::remove(path);
}
