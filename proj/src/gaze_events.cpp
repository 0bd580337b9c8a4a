// SPDX-License-Identifier: Apache-2.0
#include "gazessl/gaze_events.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gazessl {

void GazeTrace::validate() const {
  intr.validate();
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].time_s > samples[i - 1].time_s)) {
      throw std::invalid_argument("gaze trace: timestamps must strictly increase");
    }
  }
}

bool GazeTrace::continuous(std::size_t i) const {
  if (i + 1 >= samples.size()) return false;
  const double dt = samples[i + 1].time_s - samples[i].time_s;
  return dt < 1.5 / intr.fps && in_frame(samples[i].point, intr) && in_frame(samples[i + 1].point, intr);
}

GazeTrace trace_from_frames(std::span<const FrameRecord> frames, const CameraIntrinsics& intr) {
  GazeTrace t;
  t.intr = intr;
  t.samples.reserve(frames.size());
  for (const auto& f : frames) t.samples.push_back({f.frame_idx / intr.fps, f.gaze});
  return t;
}

std::size_t EventSegmentation::saccade_count() const {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(), [](const GazeEvent& e) { return e.kind == EventKind::Saccade; }));
}

void SaccadeThresholds::validate() const {
  if (!(t1_deg_s > t2_deg_s && t2_deg_s > 0.0)) throw std::invalid_argument("saccade thresholds: need t1 > t2 > 0");
  if (!(theta_deg > 0.0 && theta_deg <= 180.0)) throw std::invalid_argument("saccade thresholds: theta in (0, 180]");
}

std::vector<double> angular_velocities(const GazeTrace& trace) {
  const std::size_t n = trace.samples.size();
  std::vector<double> v(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!trace.continuous(i)) continue;
    const double dt = trace.samples[i + 1].time_s - trace.samples[i].time_s;
    v[i] = angular_distance(trace.samples[i].point, trace.samples[i + 1].point, trace.intr) / dt;
  }
  return v;
}

namespace {

double angle_between_deg(double ax, double ay, double bx, double by) {
  const double na = std::hypot(ax, ay);
  const double nb = std::hypot(bx, by);
  if (na == 0.0 || nb == 0.0) return 180.0;
  const double c = std::clamp((ax * bx + ay * by) / (na * nb), -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

}  // namespace

EventSegmentation detect_saccades(const GazeTrace& trace, const SaccadeThresholds& thr) {
  thr.validate();
  trace.validate();
  const std::size_t n = trace.samples.size();
  if (n < 2) throw std::invalid_argument("detect_saccades: need at least 2 samples");
  const auto v = angular_velocities(trace);
  const auto& s = trace.samples;

  EventSegmentation seg;
  seg.labels.assign(n, EventKind::Fixation);
  std::vector<std::pair<std::size_t, std::size_t>> cores;
  for (std::size_t i = 0; i < n;) {
    if (v[i] < thr.t1_deg_s) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && v[j + 1] >= thr.t1_deg_s && trace.continuous(j)) ++j;
    cores.emplace_back(i, j);
    i = j + 1;
  }
  for (const auto& [a, b] : cores) {
    for (std::size_t k = a; k <= b; ++k) seg.labels[k] = EventKind::Saccade;
    if (!thr.extend_adjacent) continue;
    // Net displacement covered by the core's velocities: p[a] -> p[b + 1].
    const double dx = s[b + 1].point.x - s[a].point.x;
    const double dy = s[b + 1].point.y - s[a].point.y;
    auto admit = [&](std::size_t k) {
      if (!trace.continuous(k) || v[k] < thr.t2_deg_s) return false;
      const double mx = s[k + 1].point.x - s[k].point.x;
      const double my = s[k + 1].point.y - s[k].point.y;
      return angle_between_deg(mx, my, dx, dy) <= thr.theta_deg;
    };
    if (a > 0 && trace.continuous(a - 1) && admit(a - 1)) seg.labels[a - 1] = EventKind::Saccade;
    if (b + 1 < n && trace.continuous(b) && admit(b + 1)) seg.labels[b + 1] = EventKind::Saccade;
  }

  std::size_t start = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    const bool boundary = i == n || seg.labels[i] != seg.labels[i - 1] || !trace.continuous(i - 1);
    if (boundary) {
      seg.events.push_back({seg.labels[start], start, i - 1});
      start = i;
    }
  }
  return seg;
}

std::vector<FrameLabel> labels_from_frames(std::span<const FrameRecord> frames) {
  std::vector<FrameLabel> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back({f.target_object, f.holding});
  return out;
}

namespace {

std::optional<double> mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace

BehaviorMetrics compute_metrics(const EventSegmentation& seg, std::span<const FrameLabel> labels, double fps) {
  if (seg.labels.size() != labels.size()) throw std::invalid_argument("compute_metrics: length mismatch");
  if (!(fps > 0)) throw std::invalid_argument("compute_metrics: fps must be positive");
  BehaviorMetrics m;
  std::vector<double> fix, sac, look, hold;
  for (const auto& e : seg.events) (e.kind == EventKind::Fixation ? fix : sac).push_back(e.length() / fps);
  m.mean_fixation_s = mean_of(fix);
  m.mean_saccade_s = mean_of(sac);

  std::size_t looked = 0;
  for (std::size_t i = 0; i < labels.size();) {
    if (!labels[i].target_object) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < labels.size() && labels[j + 1].target_object == labels[i].target_object &&
           labels[j + 1].holding == labels[i].holding) {
      ++j;
    }
    const double d = (j - i + 1) / fps;
    (labels[i].holding ? hold : look).push_back(d);
    looked += j - i + 1;
    i = j + 1;
  }
  m.mean_look_bout_s = mean_of(look);
  m.mean_hold_look_s = mean_of(hold);
  m.cumulative_look_s = looked / fps;
  return m;
}

std::vector<long> gaze_histogram(const GazeTrace& trace, int bins_x, int bins_y) {
  if (bins_x < 1 || bins_y < 1) throw std::invalid_argument("gaze_histogram: need at least one bin per axis");
  std::vector<long> grid(static_cast<std::size_t>(bins_x) * bins_y, 0);
  for (const auto& s : trace.samples) {
    const int bx = std::clamp(static_cast<int>(std::floor(s.point.x / trace.intr.width_px * bins_x)), 0, bins_x - 1);
    const int by = std::clamp(static_cast<int>(std::floor(s.point.y / trace.intr.height_px * bins_y)), 0, bins_y - 1);
    ++grid[static_cast<std::size_t>(by) * bins_x + bx];
  }
  return grid;
}

namespace {

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", *v);
  return buf;
}

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::strtod(s.c_str(), nullptr);
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, std::span<const SessionMetricsRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path.string());
  out << "session_id,mean_fixation_s,mean_look_bout_s,mean_hold_look_s,cumulative_look_s,mean_saccade_s,n_samples\n";
  for (const auto& r : rows) {
    out << r.session_id << ',' << fmt_opt(r.metrics.mean_fixation_s) << ',' << fmt_opt(r.metrics.mean_look_bout_s)
        << ',' << fmt_opt(r.metrics.mean_hold_look_s) << ',' << fmt_opt(r.metrics.cumulative_look_s) << ','
        << fmt_opt(r.metrics.mean_saccade_s) << ',' << r.n_samples << '\n';
  }
}

std::vector<SessionMetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_metrics_csv: cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<SessionMetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    while (true) {
      const auto comma = line.find(',', pos);
      f.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (f.size() != 7) throw std::runtime_error("read_metrics_csv: malformed row '" + line + "'");
    SessionMetricsRow r;
    r.session_id = f[0];
    r.metrics.mean_fixation_s = parse_opt(f[1]);
    r.metrics.mean_look_bout_s = parse_opt(f[2]);
    r.metrics.mean_hold_look_s = parse_opt(f[3]);
    r.metrics.cumulative_look_s = parse_opt(f[4]).value_or(0.0);
    r.metrics.mean_saccade_s = parse_opt(f[5]);
    r.n_samples = std::stoul(f[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace gazessl
