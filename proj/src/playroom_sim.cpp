// SPDX-License-Identifier: Apache-2.0
#include "gazessl/playroom_sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "gazessl/rng.hpp"

namespace gazessl {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;
constexpr double kHoldSpinCyclesPerS = 1.0;
constexpr double kJitterSigmaDeg = 0.3;
constexpr double kJitterRho = 0.99;
constexpr double kFixationRadius = 0.40;  // canonical units; every family contains r < 0.47
constexpr double kHoldProbability = 0.4;
constexpr double kLookProbability = 0.4;
constexpr double kHandXMin = 0.3;
constexpr double kClutterPerSqDeg = 0.009;
constexpr double kHandYMin = 0.55;
constexpr double kHandYMax = 0.7;

constexpr std::array<Rgb, 4> kPalette{{
    {200, 60, 50},   // red
    {60, 150, 70},   // green
    {60, 90, 200},   // blue
    {215, 185, 60},  // yellow
}};

double foreshortening(double view) { return 0.55 + 0.45 * std::abs(std::cos(M_PI * view)); }

double rotation_of(const ObjectPose& pose) { return pose.base_rotation + kTwoPi * pose.view; }

// Pixel -> canonical object coordinates.
void to_canonical(const ObjectPose& pose, double x, double y, double& u, double& w) {
  const double phi = rotation_of(pose);
  const double dx = x - pose.cx;
  const double dy = y - pose.cy;
  const double a = dx * std::cos(phi) + dy * std::sin(phi);
  const double b = -dx * std::sin(phi) + dy * std::cos(phi);
  u = a / (pose.radius_px * foreshortening(pose.view));
  w = b / pose.radius_px;
}

GazePoint from_canonical(const ObjectPose& pose, double u, double w) {
  const double phi = rotation_of(pose);
  const double a = u * pose.radius_px * foreshortening(pose.view);
  const double b = w * pose.radius_px;
  return {pose.cx + a * std::cos(phi) - b * std::sin(phi), pose.cy + a * std::sin(phi) + b * std::cos(phi)};
}

bool canonical_inside(const ObjectSpec& obj, double u, double w) {
  const double r = std::hypot(u, w);
  if (r > 1.0) return false;
  switch (obj.shape_family) {
    case ShapeFamily::Disc:
      return r <= 0.92;
    case ShapeFamily::Bar:
      return std::abs(w) <= 0.5;
    case ShapeFamily::Cross:
      return std::abs(u) <= 0.42 || std::abs(w) <= 0.42;
    case ShapeFamily::Ring:
      return r < 0.55 || r > 0.72;
    case ShapeFamily::Blob: {
      const double s1 = static_cast<double>(obj.texture_seed % 97) / 97.0 * kTwoPi;
      const double s2 = static_cast<double>(obj.texture_seed % 89) / 89.0 * kTwoPi;
      const double theta = std::atan2(w, u);
      return r <= 0.75 + 0.2 * std::sin(3 * theta + s1) + 0.08 * std::sin(5 * theta + s2);
    }
    case ShapeFamily::Polygon: {
      const int n = std::max(3, obj.polygon_sides);
      const double apothem = std::cos(M_PI / n);
      for (int k = 0; k < n; ++k) {
        const double a = kTwoPi * (k + 0.5) / n;
        if (u * std::cos(a) + w * std::sin(a) > apothem) return false;
      }
      return true;
    }
  }
  return false;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

Rgb scale_rgb(const Rgb& c, double s) { return {to_byte(c.r * s), to_byte(c.g * s), to_byte(c.b * s)}; }

void put(Image& img, int x, int y, const Rgb& c) {
  auto* p = img.at(x, y);
  p[0] = c.r;
  p[1] = c.g;
  p[2] = c.b;
}

int sensor_noise(std::uint64_t seed, int frame, int x, int y) {
  const auto h = mix_seed(seed ^ 0x5E45u, (static_cast<std::uint64_t>(frame) << 32) ^
                                              (static_cast<std::uint64_t>(y) << 16) ^
                                              static_cast<std::uint64_t>(x));
  return static_cast<int>(h % 5) - 2;
}

}  // namespace

std::vector<ObjectSpec> make_objects(int n_objects, std::uint64_t object_seed, double size_px) {
  if (n_objects < 1) throw std::invalid_argument("make_objects: need at least one object");
  constexpr int kFamilies = 6;
  if (n_objects > kFamilies * static_cast<int>(kPalette.size())) {
    throw std::invalid_argument("make_objects: not enough distinct (shape, colour) pairs");
  }
  std::vector<ObjectSpec> out;
  out.reserve(n_objects);
  for (int i = 0; i < n_objects; ++i) {
    ObjectSpec o;
    o.object_id = i;
    o.shape_family = static_cast<ShapeFamily>(i % kFamilies);
    const int round = i / kFamilies;
    // For a fixed family the colour index walks (family + 3*round) mod 4,
    // so no (family, colour) pair repeats while colours are shared.
    o.base_color = kPalette[(i + round) % kPalette.size()];
    o.polygon_sides = o.shape_family == ShapeFamily::Polygon ? 3 + round % 4 : 0;
    o.texture_seed = mix_seed(object_seed, static_cast<std::uint64_t>(i));
    o.size_px = size_px;
    out.push_back(o);
  }
  return out;
}

bool object_covers(const ObjectSpec& obj, const ObjectPose& pose, double x, double y) {
  const double dx = x - pose.cx;
  const double dy = y - pose.cy;
  if (dx * dx + dy * dy > pose.radius_px * pose.radius_px) return false;
  double u, w;
  to_canonical(pose, x, y, u, w);
  return canonical_inside(obj, u, w);
}

Rgb object_color(const ObjectSpec& obj, const ObjectPose& pose, double x, double y) {
  double u, w;
  to_canonical(pose, x, y, u, w);
  const double light = kTwoPi * pose.view;
  const double shade = 0.75 + 0.25 * std::clamp(u * std::cos(light) + w * std::sin(light), -1.0, 1.0);
  const auto ts = obj.texture_seed;
  const double freq = 2.0 + static_cast<double>((ts >> 8) % 3);
  const double alpha = static_cast<double>((ts >> 16) % 360) * M_PI / 180.0;
  double tex = 1.0;
  switch (ts % 3) {
    case 0:  // stripes
      tex = std::sin(M_PI * freq * (u * std::cos(alpha) + w * std::sin(alpha))) > 0 ? 1.0 : 0.65;
      break;
    case 1: {  // dots
      const double fu = u * freq - std::floor(u * freq) - 0.5;
      const double fw = w * freq - std::floor(w * freq) - 0.5;
      tex = fu * fu + fw * fw < 0.09 ? 0.6 : 1.0;
      break;
    }
    default:  // checks
      tex = (static_cast<long>(std::floor((u + 1) * freq)) + static_cast<long>(std::floor((w + 1) * freq))) % 2
                ? 0.7
                : 1.0;
      break;
  }
  return scale_rgb(obj.base_color, shade * tex);
}

GazePolicy GazePolicy::toddler_like(std::uint64_t seed) {
  GazePolicy p;
  p.kind = PolicyKind::ToddlerLike;
  p.mean_fixation_s = 0.5;
  p.mean_look_bout_s = 1.2;
  p.mean_hold_look_s = 3.0;
  p.policy_seed = seed;
  return p;
}

GazePolicy GazePolicy::adult_like(std::uint64_t seed) {
  GazePolicy p;
  p.kind = PolicyKind::AdultLike;
  p.mean_fixation_s = 0.45;
  p.mean_look_bout_s = 1.1;
  p.mean_hold_look_s = 1.2;
  p.policy_seed = seed;
  return p;
}

void GazePolicy::validate() const {
  if (!(mean_fixation_s > 0 && mean_look_bout_s > 0 && mean_hold_look_s > 0)) {
    throw std::invalid_argument("gaze policy: durations must be positive");
  }
  if (!(saccade_amplitude_deg > 0)) throw std::invalid_argument("gaze policy: saccade amplitude must be positive");
}

int SessionConfig::frame_count() const { return static_cast<int>(std::lround(duration_s * intr.fps)); }

void SessionConfig::validate() const {
  intr.validate();
  policy.validate();
  if (frame_count() < 2) throw std::invalid_argument("session config: fewer than 2 frames");
  if (n_objects < 2) throw std::invalid_argument("session config: need at least 2 objects");
  if (!(object_size_deg > 0)) throw std::invalid_argument("session config: object size must be positive");
  if (!(table_spacing >= 1.0) || !(held_scale > 0)) throw std::invalid_argument("session config: bad layout");
  if (head_motion.amplitude_deg < 0 || !(head_motion.period_s > 0)) {
    throw std::invalid_argument("session config: invalid head motion");
  }
}

// ---------------------------------------------------------------------------
// Playroom

Playroom::Playroom(const SessionConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const double ppd = cfg_.intr.px_per_deg();
  table_radius_px_ = 0.5 * cfg_.object_size_deg * ppd;
  objects_ = make_objects(cfg_.n_objects, cfg_.object_seed, cfg_.object_size_deg * ppd);

  Rng rng(mix_seed(cfg_.render_seed, 0x7AB1E));
  const int grid = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg_.n_objects))));
  const double spacing = cfg_.table_spacing * cfg_.object_size_deg;
  const double jitter = 0.15 * cfg_.object_size_deg;
  std::vector<int> cells(static_cast<std::size_t>(grid * grid));
  for (int i = 0; i < grid * grid; ++i) cells[i] = i;
  for (int i = grid * grid - 1; i > 0; --i) std::swap(cells[i], cells[rng.below(i + 1)]);
  for (int i = 0; i < cfg_.n_objects; ++i) {
    const int gx = cells[i] % grid;
    const int gy = cells[i] / grid;
    world_x_.push_back((gx - 0.5 * (grid - 1)) * spacing + rng.uniform(-jitter, jitter));
    world_y_.push_back((gy - 0.5 * (grid - 1)) * spacing + rng.uniform(-jitter, jitter));
  }
  table_half_deg_ = 0.5 * (grid - 1) * spacing + jitter;

  if (cfg_.background == Background::Clutter) {
    const double hx = 0.5 * cfg_.intr.hfov_deg + cfg_.head_motion.amplitude_deg + 6.0;
    const double hy = 0.5 * cfg_.intr.height_px * cfg_.intr.deg_per_px() + cfg_.head_motion.amplitude_deg + 6.0;
    const int n_rects = static_cast<int>(std::lround(kClutterPerSqDeg * 4.0 * hx * hy));
    for (int i = 0; i < n_rects; ++i) {
      ClutterRect r;
      const double cx = rng.uniform(-hx, hx);
      const double cy = rng.uniform(-hy, hy);
      const double w = rng.uniform(3.0, 12.0);
      const double h = rng.uniform(3.0, 12.0);
      r.x0 = cx - w / 2;
      r.x1 = cx + w / 2;
      r.y0 = cy - h / 2;
      r.y1 = cy + h / 2;
      const double g = rng.uniform(50, 150);
      r.color = {to_byte(g + rng.uniform(-25, 25)), to_byte(g + rng.uniform(-25, 25)),
                 to_byte(g + rng.uniform(-25, 25))};
      clutter_.push_back(r);
    }
  }
}

ObjectPose Playroom::table_pose(int id, double yaw_deg, double pitch_deg, double view) const {
  const auto& intr = cfg_.intr;
  const double ppd = intr.px_per_deg();
  ObjectPose p;
  p.cx = 0.5 * intr.width_px + (world_x_.at(id) - yaw_deg) * ppd;
  p.cy = 0.5 * intr.height_px + (world_y_.at(id) - pitch_deg) * ppd;
  p.radius_px = table_radius_px_;
  p.view = view;
  p.base_rotation = 0.0;
  return p;
}

Rgb Playroom::background_at(double wx, double wy) const {
  for (auto it = clutter_.rbegin(); it != clutter_.rend(); ++it) {
    if (wx >= it->x0 && wx < it->x1 && wy >= it->y0 && wy < it->y1) return it->color;
  }
  return cfg_.background == Background::Clutter ? Rgb{110, 88, 66} : Rgb{0, 0, 0};
}

Image Playroom::render(const WorldState& s) const {
  const auto& intr = cfg_.intr;
  const double dpp = intr.deg_per_px();
  const bool clutter = cfg_.background == Background::Clutter;
  Image img(intr.width_px, intr.height_px);
  for (int y = 0; y < intr.height_px; ++y) {
    for (int x = 0; x < intr.width_px; ++x) {
      const double px = x + 0.5;
      const double py = y + 0.5;
      Rgb c;
      bool done = false;
      if (s.held && object_covers(objects_[*s.held], s.held_pose, px, py)) {
        c = object_color(objects_[*s.held], s.held_pose, px, py);
        done = true;
      }
      for (auto it = s.occluders.rbegin(); !done && it != s.occluders.rend(); ++it) {
        if (px >= it->x0 && px < it->x1 && py >= it->y0 && py < it->y1) {
          c = scale_rgb(it->color, 0.85 + 0.15 * (py - it->y0) / std::max(1.0, it->y1 - it->y0));
          done = true;
        }
      }
      for (int id = static_cast<int>(s.table.size()) - 1; !done && id >= 0; --id) {
        if (s.held && *s.held == id) continue;
        if (object_covers(objects_[id], s.table[id], px, py)) {
          c = object_color(objects_[id], s.table[id], px, py);
          done = true;
        }
      }
      if (!done) {
        c = background_at(s.yaw_deg + (px - 0.5 * intr.width_px) * dpp,
                          s.pitch_deg + (py - 0.5 * intr.height_px) * dpp);
      }
      if (clutter) {
        const int n = sensor_noise(cfg_.render_seed, s.frame_idx, x, y);
        c = {to_byte(c.r + n), to_byte(c.g + n), to_byte(c.b + n)};
      }
      put(img, x, y, c);
    }
  }
  return img;
}

std::optional<int> Playroom::object_at(const WorldState& s, const GazePoint& p) const {
  if (!in_frame(p, cfg_.intr)) return std::nullopt;
  const double px = std::floor(p.x) + 0.5;
  const double py = std::floor(p.y) + 0.5;
  if (s.held && object_covers(objects_[*s.held], s.held_pose, px, py)) return s.held;
  for (const auto& o : s.occluders) {
    if (px >= o.x0 && px < o.x1 && py >= o.y0 && py < o.y1) return std::nullopt;
  }
  for (int id = static_cast<int>(s.table.size()) - 1; id >= 0; --id) {
    if (s.held && *s.held == id) continue;
    if (object_covers(objects_[id], s.table[id], px, py)) return id;
  }
  return std::nullopt;
}

FrameRecord render_frame(const Playroom& room, const WorldState& state) {
  const double limit = room.table_half_deg() + 2 * room.config().object_size_deg +
                       room.config().head_motion.amplitude_deg + room.config().intr.hfov_deg;
  if (std::abs(state.yaw_deg) > limit || std::abs(state.pitch_deg) > limit ||
      state.table.size() != room.objects().size()) {
    throw std::invalid_argument("render_frame: world state outside the tabletop region");
  }
  FrameRecord rec;
  rec.frame_idx = state.frame_idx;
  rec.image = room.render(state);
  rec.held_object = state.held;
  return rec;
}

// ---------------------------------------------------------------------------
// Behaviour simulation

namespace {

struct Target {
  int object = -1;        // -1: a point on the background
  double u = 0, w = 0;    // canonical point on the object
  double wx = 0, wy = 0;  // world degrees for background points
};

struct Segment {
  int start = 0;
  int length = 0;
  bool saccade = false;
  Target target;  // fixation target, or landing target for a saccade
};

struct HoldInterval {
  int object = 0;
  int start = 0;  // first frame in hand
  int end = 0;    // exclusive
  double view0 = 0;
  double direction = 1;
  double rotation = 0;
  double hx = 0.5, hy = 0.62;  // hand position, fractions of the frame
  double phase = 0;
};

class SessionSimulator {
 public:
  explicit SessionSimulator(const SessionConfig& cfg)
      : cfg_(cfg), room_(cfg), n_(cfg.frame_count()), rng_(mix_seed(cfg.policy.policy_seed, cfg.render_seed)) {
    const auto& hm = cfg_.head_motion;
    Rng phase(mix_seed(cfg_.render_seed, 0x4EAD));
    yaw_phase_ = phase.uniform(0, kTwoPi);
    pitch_phase_ = phase.uniform(0, kTwoPi);
    (void)hm;
    rest_view_.resize(cfg_.n_objects);
    Rng views(mix_seed(cfg_.render_seed, 0x71E3));
    for (auto& v : rest_view_) v = views.uniform();
    if (cfg_.background == Background::Clutter) plan_occluders();
  }

  SimulationTrace run() {
    plan_behaviour();
    build_states();
    std::vector<GazePoint> gaze = gaze_trace();
    switch (cfg_.policy.kind) {
      case PolicyKind::Random: {
        Rng g(mix_seed(cfg_.policy.policy_seed, 0xA4D0));
        for (auto& p : gaze) {
          p.x = g.uniform(0.0, cfg_.intr.width_px);
          p.y = g.uniform(0.0, cfg_.intr.height_px);
        }
        break;
      }
      case PolicyKind::NoEyeMovement: {
        double sx = 0, sy = 0;
        for (const auto& p : gaze) {
          sx += p.x;
          sy += p.y;
        }
        const GazePoint c{sx / gaze.size(), sy / gaze.size()};
        std::fill(gaze.begin(), gaze.end(), c);
        break;
      }
      default:
        break;
    }

    SimulationTrace trace;
    trace.frames.reserve(n_);
    for (int f = 0; f < n_; ++f) {
      const auto& st = states_[f];
      FrameRecord rec;
      if (cfg_.render_images) {
        rec = render_frame(room_, st);
      } else {
        rec.frame_idx = f;
        rec.held_object = st.held;
      }
      rec.gaze = gaze[f];
      rec.target_object = room_.object_at(st, gaze[f]);
      rec.holding = st.held && rec.target_object == st.held;
      rec.held_view = st.held ? held_view_[f] : 0.0;
      trace.frames.push_back(std::move(rec));
    }
    trace.states = std::move(states_);
    return trace;
  }

 private:
  double time_of(int f) const { return f / cfg_.intr.fps; }
  double yaw(int f) const {
    const auto& hm = cfg_.head_motion;
    return hm.amplitude_deg * std::sin(kTwoPi * time_of(f) / hm.period_s + yaw_phase_);
  }
  double pitch(int f) const {
    const auto& hm = cfg_.head_motion;
    return 0.5 * hm.amplitude_deg * std::sin(kTwoPi * time_of(f) / (1.37 * hm.period_s) + pitch_phase_);
  }
  int frames(double seconds) const {
    return std::max(2, static_cast<int>(std::lround(seconds * cfg_.intr.fps)));
  }

  ObjectPose held_pose_at(const HoldInterval& h, int f) const {
    const auto& intr = cfg_.intr;
    const double t = time_of(f);
    ObjectPose p;
    p.cx = (h.hx + 0.06 * std::sin(kTwoPi * 0.8 * t + h.phase)) * intr.width_px;
    p.cy = (h.hy + 0.04 * std::sin(kTwoPi * 1.1 * t + h.phase)) * intr.height_px;
    p.radius_px = room_.held_radius_px() * (1.0 + 0.15 * std::sin(kTwoPi * t / 2.5 + h.phase));
    p.view = h.view0 + h.direction * kHoldSpinCyclesPerS * (f - h.start) / intr.fps;
    p.base_rotation = h.rotation;
    return p;
  }

  // Pose of `object` at frame f according to the plan (held or on the table).
  ObjectPose pose_of(int object, int f) const {
    if (const HoldInterval* h = hold_at(f); h && h->object == object) return held_pose_at(*h, f);
    return room_.table_pose(object, yaw(f), pitch(f), table_view_at(object, f));
  }

  const HoldInterval* hold_at(int f) const {
    for (auto it = holds_.rbegin(); it != holds_.rend(); ++it) {
      if (f >= it->start && f < it->end) return &*it;
      if (it->end <= f) break;
    }
    return nullptr;
  }

  double table_view_at(int object, int f) const {
    double v = rest_view_[object];
    for (const auto& r : releases_) {
      if (r.frame > f) break;
      if (r.object == object) v = r.view;
    }
    return v;
  }

  GazePoint project(const Target& t, int f) const {
    if (t.object >= 0) return from_canonical(pose_of(t.object, f), t.u, t.w);
    const auto& intr = cfg_.intr;
    const double ppd = intr.px_per_deg();
    return {0.5 * intr.width_px + (t.wx - yaw(f)) * ppd, 0.5 * intr.height_px + (t.wy - pitch(f)) * ppd};
  }

  bool visible(int object, int f) const {
    const auto p = pose_of(object, f);
    const auto& intr = cfg_.intr;
    return p.cx >= p.radius_px && p.cy >= p.radius_px && p.cx <= intr.width_px - p.radius_px &&
           p.cy <= intr.height_px - p.radius_px;
  }

  Target point_on(int object) {
    const double r = kFixationRadius * std::sqrt(rng_.uniform());
    const double a = rng_.uniform(0, kTwoPi);
    return {object, r * std::cos(a), r * std::sin(a), 0, 0};
  }

  // Picks a target whose projection at frame f is at least the saccade
  // amplitude away from `from`; falls back to the farthest candidate.
  Target far_target(const GazePoint& from, int f, const std::function<Target()>& draw) {
    Target best = draw();
    double best_d = angular_distance(from, project(best, f), cfg_.intr);
    for (int i = 0; i < 30 && best_d < cfg_.policy.saccade_amplitude_deg; ++i) {
      Target t = draw();
      const double d = angular_distance(from, project(t, f), cfg_.intr);
      if (d > best_d) {
        best = t;
        best_d = d;
      }
    }
    return best;
  }

  int saccade_frames(double amplitude_deg) const { return amplitude_deg < 6.0 ? 2 : 3; }

  void plan_behaviour() {
    const auto& pol = cfg_.policy;
    const auto& intr = cfg_.intr;
    int f = 0;
    int prev_object = -1;
    GazePoint last{0.5 * intr.width_px, 0.5 * intr.height_px};
    bool first = true;
    bool prev_hold = false;  // holds never abut, so every holding run has one object
    while (f < n_) {
      const double u = rng_.uniform();
      enum class Kind { Hold, Look, Glance } kind = Kind::Glance;
      int object = -1;
      if (u < kHoldProbability && !prev_hold) {
        kind = Kind::Hold;
        object = static_cast<int>(rng_.below(cfg_.n_objects - (prev_object >= 0 ? 1 : 0)));
        if (prev_object >= 0 && object >= prev_object) ++object;
      } else if (u < kHoldProbability + kLookProbability) {
        std::vector<int> cands;
        for (int o = 0; o < cfg_.n_objects; ++o) {
          if (o != prev_object && visible(o, f)) cands.push_back(o);
        }
        if (!cands.empty()) {
          kind = Kind::Look;
          object = cands[rng_.below(cands.size())];
        }
      }
      int duration = 0;
      switch (kind) {
        case Kind::Hold: duration = frames(rng_.exponential(pol.mean_hold_look_s)); break;
        case Kind::Look: duration = frames(rng_.exponential(pol.mean_look_bout_s)); break;
        case Kind::Glance: duration = frames(rng_.exponential(pol.mean_fixation_s)); break;
      }

      // Saccade into the bout. Its length depends on the landing target,
      // which for a held object depends on the pose at the landing frame.
      int sac_len = first ? 0 : 2;
      if (kind == Kind::Hold) {
        HoldInterval h;
        h.object = object;
        h.start = f;
        h.view0 = table_view_at(object, f);
        h.direction = rng_.uniform() < 0.5 ? -1.0 : 1.0;
        h.rotation = rng_.uniform(0, kTwoPi);
        h.hx = rng_.uniform(kHandXMin, 1.0 - kHandXMin);
        h.hy = rng_.uniform(kHandYMin, kHandYMax);
        h.phase = rng_.uniform(0, kTwoPi);
        h.end = std::min(n_, f + sac_len + 1 + duration);
        holds_.push_back(h);
      }
      Target landing;
      const int land_guess = std::min(n_ - 1, f + sac_len);
      if (kind == Kind::Glance) {
        const auto& in = intr;
        const double dpp = in.deg_per_px();
        const double m = 0.1;
        landing = far_target(last, land_guess, [&] {
          const double px = rng_.uniform(m, 1 - m) * in.width_px;
          const double py = rng_.uniform(m, 1 - m) * in.height_px;
          return Target{-1, 0, 0, yaw(land_guess) + (px - 0.5 * in.width_px) * dpp,
                        pitch(land_guess) + (py - 0.5 * in.height_px) * dpp};
        });
      } else {
        landing = far_target(last, land_guess, [&] { return point_on(object); });
      }
      if (!first) {
        sac_len = saccade_frames(angular_distance(last, project(landing, land_guess), intr));
        if (kind == Kind::Hold) holds_.back().end = std::min(n_, f + sac_len + duration);
        const int len = std::min(sac_len, n_ - f);
        segments_.push_back({f, len, true, landing});
        f += len;
        if (f >= n_) break;
      }
      first = false;

      // Fixations inside the bout, separated by small within-object saccades.
      const int bout_end = std::min(n_, f + duration);
      Target current = landing;
      while (f < bout_end) {
        int fix = frames(rng_.exponential(pol.mean_fixation_s));
        const bool can_refixate = kind != Kind::Glance && bout_end - f > fix + 3 + 2;
        if (!can_refixate) fix = bout_end - f;
        segments_.push_back({f, fix, false, current});
        f += fix;
        if (f >= bout_end) break;
        const GazePoint from = project(current, f - 1);
        Target next = far_target(from, f + 2, [&] { return point_on(object); });
        const double amp = angular_distance(from, project(next, f + 2), intr);
        if (amp < pol.saccade_amplitude_deg) {
          // Object too small for a detectable refixation: keep fixating.
          segments_.back().length += std::min(3, bout_end - f);
          f += std::min(3, bout_end - f);
          continue;
        }
        const int len = std::min(saccade_frames(amp), bout_end - f);
        segments_.push_back({f, len, true, next});
        f += len;
        current = next;
      }
      if (kind == Kind::Hold) {
        releases_.push_back({holds_.back().end, object, rng_.uniform()});
      }
      last = project(current, std::max(0, f - 1));
      prev_object = object;
      prev_hold = kind == Kind::Hold;
    }
  }

  void build_states() {
    states_.resize(n_);
    held_view_.assign(n_, 0.0);
    std::vector<double> views = rest_view_;
    std::size_t next_release = 0;
    for (int f = 0; f < n_; ++f) {
      while (next_release < releases_.size() && releases_[next_release].frame <= f) {
        views[releases_[next_release].object] = releases_[next_release].view;
        ++next_release;
      }
      WorldState& s = states_[f];
      s.frame_idx = f;
      s.yaw_deg = yaw(f);
      s.pitch_deg = pitch(f);
      s.table.resize(cfg_.n_objects);
      for (int o = 0; o < cfg_.n_objects; ++o) s.table[o] = room_.table_pose(o, s.yaw_deg, s.pitch_deg, views[o]);
      if (const HoldInterval* h = hold_at(f)) {
        s.held = h->object;
        s.held_pose = held_pose_at(*h, f);
        held_view_[f] = s.held_pose.view;
      }
      for (const auto& occ : occluder_plan_) {
        const double t = time_of(f);
        if (t < occ.t0 || t >= occ.t0 + occ.duration) continue;
        const double phase = std::sin(M_PI * (t - occ.t0) / occ.duration);
        const double w = occ.width;
        Occluder o;
        if (occ.from_left) {
          o.x0 = -w + (w + occ.depth) * phase;
        } else {
          o.x0 = cfg_.intr.width_px - occ.depth * phase;
        }
        o.x1 = o.x0 + w;
        o.y0 = occ.y;
        o.y1 = occ.y + occ.height;
        o.color = {214, 164, 132};
        s.occluders.push_back(o);
      }
    }
  }

  std::vector<GazePoint> gaze_trace() const {
    std::vector<GazePoint> g(n_);
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const Segment& seg = segments_[i];
      if (!seg.saccade) {
        for (int f = seg.start; f < seg.start + seg.length; ++f) g[f] = project(seg.target, f);
      }
    }
    // Saccades interpolate between the last fixation sample and the landing
    // sample, which has been filled in by the pass above.
    for (const Segment& seg : segments_) {
      if (!seg.saccade) continue;
      const int land = seg.start + seg.length;
      const GazePoint a = seg.start > 0 ? g[seg.start - 1] : project(seg.target, 0);
      const GazePoint b = land < n_ ? g[land] : project(seg.target, n_ - 1);
      for (int k = 0; k < seg.length; ++k) {
        const double s = static_cast<double>(k + 1) / (seg.length + 1);
        g[seg.start + k] = {a.x + s * (b.x - a.x), a.y + s * (b.y - a.y)};
      }
    }
    Rng jitter(mix_seed(cfg_.policy.policy_seed, 0x11773));
    const double ppd = cfg_.intr.px_per_deg();
    const double innov = kJitterSigmaDeg * std::sqrt(1.0 - kJitterRho * kJitterRho);
    double jx = kJitterSigmaDeg * jitter.normal();
    double jy = kJitterSigmaDeg * jitter.normal();
    const double max_x = std::nextafter(static_cast<double>(cfg_.intr.width_px), 0.0);
    const double max_y = std::nextafter(static_cast<double>(cfg_.intr.height_px), 0.0);
    for (int f = 0; f < n_; ++f) {
      g[f].x = std::clamp(g[f].x + jx * ppd, 0.0, max_x);
      g[f].y = std::clamp(g[f].y + jy * ppd, 0.0, max_y);
      jx = kJitterRho * jx + innov * jitter.normal();
      jy = kJitterRho * jy + innov * jitter.normal();
    }
    return g;
  }

  void plan_occluders() {
    Rng r(mix_seed(cfg_.render_seed, 0x0CC1));
    const double total = n_ / cfg_.intr.fps;
    double t = r.exponential(8.0);
    while (t < total) {
      OccluderEvent e;
      e.t0 = t;
      e.duration = r.uniform(1.0, 2.0);
      e.from_left = r.uniform() < 0.5;
      e.width = 0.22 * cfg_.intr.width_px;
      e.height = 0.16 * cfg_.intr.height_px;
      e.y = r.uniform(0.3, 0.9) * cfg_.intr.height_px - 0.5 * e.height;
      e.depth = r.uniform(0.25, 0.4) * cfg_.intr.width_px;
      occluder_plan_.push_back(e);
      t += e.duration + r.exponential(8.0);
    }
  }

  struct Release {
    int frame;
    int object;
    double view;
  };
  struct OccluderEvent {
    double t0, duration;
    bool from_left;
    double width, height, y, depth;
  };

  SessionConfig cfg_;
  Playroom room_;
  int n_;
  Rng rng_;
  double yaw_phase_ = 0, pitch_phase_ = 0;
  std::vector<double> rest_view_;
  std::vector<Segment> segments_;
  std::vector<HoldInterval> holds_;
  std::vector<Release> releases_;
  std::vector<OccluderEvent> occluder_plan_;
  std::vector<WorldState> states_;
  std::vector<double> held_view_;
};

}  // namespace

SimulationTrace simulate_session_with_states(const SessionConfig& cfg) {
  cfg.validate();
  SessionSimulator sim(cfg);
  return sim.run();
}

std::vector<FrameRecord> simulate_session(const SessionConfig& cfg) {
  return simulate_session_with_states(cfg).frames;
}

std::vector<LabeledImage> generate_oracle_views(const std::vector<ObjectSpec>& objects, int n_views,
                                                Background background, int image_size_px,
                                                std::uint64_t seed) {
  if (n_views < 1) throw std::invalid_argument("generate_oracle_views: n_views must be >= 1");
  if (image_size_px < 4) throw std::invalid_argument("generate_oracle_views: image too small");
  const int n_scales = (n_views % 4 == 0 && n_views >= 8) ? 4 : (n_views % 2 == 0 ? 2 : 1);
  const int n_angles = n_views / n_scales;
  const double half = 0.5 * image_size_px;
  std::vector<LabeledImage> out;
  out.reserve(objects.size() * n_views);
  Rng rng(mix_seed(seed, 0x0AC1E));
  for (const auto& obj : objects) {
    for (int a = 0; a < n_angles; ++a) {
      for (int s = 0; s < n_scales; ++s) {
        LabeledImage li;
        li.label = obj.object_id;
        li.view = static_cast<double>(a) / n_angles;
        li.scale = n_scales > 1 ? 0.6 + 0.35 * s / (n_scales - 1) : 0.95;
        ObjectPose pose;
        pose.cx = half;
        pose.cy = half;
        pose.radius_px = li.scale * half;
        pose.view = li.view;
        Image img(image_size_px, image_size_px, 0);
        if (background == Background::Clutter) {
          for (int y = 0; y < image_size_px; ++y)
            for (int x = 0; x < image_size_px; ++x) put(img, x, y, {110, 88, 66});
          for (int k = 0; k < 6; ++k) {
            const int x0 = static_cast<int>(rng.below(image_size_px));
            const int y0 = static_cast<int>(rng.below(image_size_px));
            const int w = 2 + static_cast<int>(rng.below(image_size_px / 2));
            const int h = 2 + static_cast<int>(rng.below(image_size_px / 2));
            const double g = rng.uniform(50, 150);
            const Rgb c{to_byte(g + rng.uniform(-25, 25)), to_byte(g + rng.uniform(-25, 25)),
                        to_byte(g + rng.uniform(-25, 25))};
            for (int y = y0; y < std::min(image_size_px, y0 + h); ++y)
              for (int x = x0; x < std::min(image_size_px, x0 + w); ++x) put(img, x, y, c);
          }
        }
        for (int y = 0; y < image_size_px; ++y) {
          for (int x = 0; x < image_size_px; ++x) {
            if (object_covers(obj, pose, x + 0.5, y + 0.5)) put(img, x, y, object_color(obj, pose, x + 0.5, y + 0.5));
          }
        }
        li.image = std::move(img);
        out.push_back(std::move(li));
      }
    }
  }
  return out;
}

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::ToddlerLike: return "ToddlerLike";
    case PolicyKind::AdultLike: return "AdultLike";
    case PolicyKind::Random: return "Random";
    case PolicyKind::NoEyeMovement: return "NoEyeMovement";
  }
  return "?";
}

PolicyKind policy_kind_from_string(const std::string& s) {
  for (auto k : {PolicyKind::ToddlerLike, PolicyKind::AdultLike, PolicyKind::Random, PolicyKind::NoEyeMovement}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown gaze policy: " + s);
}

std::string to_string(Background b) { return b == Background::Clutter ? "clutter" : "blank"; }

Background background_from_string(const std::string& s) {
  if (s == "clutter") return Background::Clutter;
  if (s == "blank") return Background::Blank;
  throw std::invalid_argument("unknown background: " + s);
}

}  // namespace gazessl
