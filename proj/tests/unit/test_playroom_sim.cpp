// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "gazessl/eval_stats.hpp"
#include "gazessl/gaze_events.hpp"
#include "gazessl/playroom_sim.hpp"

using namespace gazessl;

namespace {

SessionConfig quick(double duration_s, GazePolicy policy, bool images = false) {
  SessionConfig c;
  c.duration_s = duration_s;
  c.policy = policy;
  c.render_images = images;
  return c;
}

// Mean length in seconds of maximal runs where `pred` holds with a constant target.
template <class Pred>
double mean_run_s(const std::vector<FrameRecord>& frames, double fps, Pred pred) {
  double total = 0;
  int runs = 0;
  std::size_t i = 0;
  while (i < frames.size()) {
    if (!pred(frames[i])) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < frames.size() && pred(frames[j]) && frames[j].target_object == frames[i].target_object) ++j;
    total += static_cast<double>(j - i) / fps;
    ++runs;
    i = j;
  }
  return runs ? total / runs : 0.0;
}

}  // namespace

TEST(Objects, DistinctShapeColourPairs) {
  const auto objs = make_objects(24, 7, 20.0);
  std::set<std::tuple<int, int, int, int>> seen;
  for (const auto& o : objs) {
    seen.insert({static_cast<int>(o.shape_family), o.base_color.r, o.base_color.g, o.base_color.b});
  }
  EXPECT_EQ(seen.size(), 24u);
  EXPECT_THROW(make_objects(25, 7, 20.0), std::invalid_argument);
}

TEST(RenderFrame, SingleObjectOnBlank) {
  SessionConfig c;
  c.background = Background::Blank;
  c.n_objects = 2;
  Playroom room(c);
  WorldState st;
  ObjectPose centre{32, 32, 12, 0.1, 0.0};
  ObjectPose away{-500, -500, 12, 0.0, 0.0};
  st.table = {centre, away};
  const auto rec = render_frame(room, st);
  int coloured = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      const auto* p = rec.image.at(x, y);
      const bool lit = p[0] || p[1] || p[2];
      EXPECT_EQ(lit, object_covers(room.objects()[0], centre, x + 0.5, y + 0.5)) << x << "," << y;
      coloured += lit;
    }
  }
  EXPECT_GT(coloured, 100);
}

TEST(RenderFrame, Deterministic) {
  SessionConfig c;
  c.duration_s = 1;
  const auto a = simulate_session_with_states(c);
  Playroom room(c);
  for (std::size_t i = 0; i < a.frames.size(); i += 7) {
    const auto r1 = render_frame(room, a.states[i]);
    const auto r2 = render_frame(room, a.states[i]);
    EXPECT_EQ(r1.image, r2.image);
    EXPECT_EQ(r1.image, a.frames[i].image);
  }
}

TEST(RenderFrame, HeldObjectSweepsViews) {
  auto c = quick(300, GazePolicy::toddler_like(3));
  const auto frames = simulate_session(c);
  int checked = 0;
  for (std::size_t i = 0; i + 30 <= frames.size(); ++i) {
    bool bout = true;
    for (std::size_t k = i; k < i + 30 && bout; ++k) {
      bout = frames[k].held_object.has_value() && frames[k].held_object == frames[i].held_object;
    }
    if (!bout) continue;
    const double dir = frames[i + 29].held_view - frames[i].held_view;
    for (std::size_t k = i; k + 1 < i + 30; ++k) {
      EXPECT_GT((frames[k + 1].held_view - frames[k].held_view) * dir, 0.0);
    }
    EXPECT_GE(std::abs(dir), 0.25);
    ++checked;
    i += 29;
  }
  EXPECT_GT(checked, 10);
}

TEST(SimulateSession, FrameCountConservation) {
  for (double d : {10.0, 3.3, 0.1}) {
    auto c = quick(d, GazePolicy::toddler_like());
    EXPECT_EQ(simulate_session(c).size(), static_cast<std::size_t>(std::lround(d * 30)));
  }
  auto c = quick(10, GazePolicy::toddler_like(), true);
  const auto f = simulate_session(c);
  ASSERT_EQ(f.size(), 300u);
  EXPECT_EQ(f.front().image.width(), 64);
}

TEST(SimulateSession, RejectsInvalidConfig) {
  auto c = quick(1.0 / 30, GazePolicy::toddler_like());
  EXPECT_THROW(simulate_session(c), std::invalid_argument);
  c = quick(10, GazePolicy::toddler_like());
  c.n_objects = 1;
  EXPECT_THROW(simulate_session(c), std::invalid_argument);
  c = quick(10, GazePolicy::toddler_like());
  c.policy.mean_hold_look_s = 0;
  EXPECT_THROW(simulate_session(c), std::invalid_argument);
}

TEST(SimulateSession, GazeInsideFrameAndBoutsConsistent) {
  for (auto kind : {PolicyKind::ToddlerLike, PolicyKind::AdultLike, PolicyKind::Random, PolicyKind::NoEyeMovement}) {
    auto p = GazePolicy::toddler_like(5);
    p.kind = kind;
    const auto frames = simulate_session(quick(120, p));
    for (const auto& f : frames) {
      ASSERT_TRUE(in_frame(f.gaze, SessionConfig{}.intr));
      if (f.holding) {
        ASSERT_TRUE(f.target_object.has_value());
        ASSERT_EQ(f.target_object, f.held_object);
      }
    }
    // every holding run carries one target
    for (std::size_t i = 1; i < frames.size(); ++i) {
      if (frames[i].holding && frames[i - 1].holding) {
        ASSERT_EQ(frames[i].target_object, frames[i - 1].target_object);
      }
    }
  }
}

TEST(SimulateSession, Deterministic) {
  SessionConfig c;
  c.duration_s = 5;
  const auto a = simulate_session(c), b = simulate_session(c);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].image, b[i].image);
    ASSERT_EQ(a[i].gaze.x, b[i].gaze.x);
    ASSERT_EQ(a[i].gaze.y, b[i].gaze.y);
    ASSERT_EQ(a[i].target_object, b[i].target_object);
  }
}

TEST(SimulateSession, HoldLookMeanRecovered) {
  auto p = GazePolicy::toddler_like(11);
  p.mean_hold_look_s = 3.0;
  const auto frames = simulate_session(quick(600, p));
  const double m = mean_run_s(frames, 30.0, [](const FrameRecord& f) { return f.holding; });
  EXPECT_NEAR(m, 3.0, 0.6);
}

TEST(SimulateSession, RandomGazeHitRateMatchesCoverage) {
  auto p = GazePolicy::toddler_like(13);
  p.kind = PolicyKind::Random;
  auto c = quick(600, p);
  const auto trace = simulate_session_with_states(c);
  Playroom room(c);
  double hits = 0, coverage = 0;
  int n = 0;
  for (std::size_t f = 0; f < trace.frames.size(); f += 5) {
    hits += trace.frames[f].target_object.has_value();
    int covered = 0;
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) covered += room.object_at(trace.states[f], {x + 0.5, y + 0.5}).has_value();
    }
    coverage += covered / 4096.0;
    ++n;
  }
  EXPECT_NEAR(hits / n, coverage / n, 0.05);
}

TEST(SimulateSession, NoEyeMovementUsesToddlerCentroid) {
  auto p = GazePolicy::toddler_like(17);
  const auto tod = simulate_session(quick(60, p));
  p.kind = PolicyKind::NoEyeMovement;
  const auto fixed = simulate_session(quick(60, p));
  double cx = 0, cy = 0;
  for (const auto& f : tod) {
    cx += f.gaze.x;
    cy += f.gaze.y;
  }
  cx /= tod.size();
  cy /= tod.size();
  for (const auto& f : fixed) {
    ASSERT_NEAR(f.gaze.x, cx, 1e-9);
    ASSERT_NEAR(f.gaze.y, cy, 1e-9);
  }
}

TEST(SimulateSession, ToddlerHoldsLongerThanAdult) {
  std::vector<double> tod, adu;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (bool toddler : {true, false}) {
      auto c = quick(300, toddler ? GazePolicy::toddler_like(seed + 1) : GazePolicy::adult_like(seed + 1));
      c.render_seed = seed + 1;
      const auto frames = simulate_session(c);
      const auto m = compute_metrics(detect_saccades(trace_from_frames(frames, c.intr)), labels_from_frames(frames),
                                     c.intr.fps);
      ASSERT_TRUE(m.mean_hold_look_s.has_value());
      (toddler ? tod : adu).push_back(*m.mean_hold_look_s);
    }
  }
  const auto t = ttest_ind(tod, adu);
  EXPECT_GT(*t.statistic, 0.0);
  EXPECT_LT(*t.p_value, 0.01);
}

TEST(OracleViews, CountsAndDeterminism) {
  const auto objs = make_objects(24, 7, 20.0);
  const auto views = generate_oracle_views(objs, 64, Background::Blank, 32, 1);
  EXPECT_EQ(views.size(), 1536u);
  const auto again = generate_oracle_views(objs, 64, Background::Blank, 32, 1);
  for (std::size_t i = 0; i < views.size(); ++i) {
    ASSERT_EQ(views[i].image, again[i].image);
    ASSERT_EQ(views[i].label, again[i].label);
  }
  EXPECT_EQ(views[0].label, 0);
  EXPECT_EQ(views.back().label, 23);
  EXPECT_THROW(generate_oracle_views(objs, 0, Background::Blank, 32, 1), std::invalid_argument);
}

TEST(OracleViews, SingleViewShowsOnlyThatObject) {
  const auto objs = make_objects(3, 7, 20.0);
  const std::vector<ObjectSpec> one{objs[1]};
  const auto views = generate_oracle_views(one, 1, Background::Blank, 32, 1);
  ASSERT_EQ(views.size(), 1u);
  const auto& img = views[0].image;
  const auto base = objs[1].base_color;
  int lit = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const auto* p = img.at(x, y);
      if (!(p[0] || p[1] || p[2])) continue;
      ++lit;
      // object pixels are the base colour under a scalar shading factor
      const double f = double(p[0] + p[1] + p[2]) / (base.r + base.g + base.b);
      EXPECT_NEAR(p[0], base.r * f, 2.0);
      EXPECT_NEAR(p[1], base.g * f, 2.0);
      EXPECT_NEAR(p[2], base.b * f, 2.0);
    }
  }
  EXPECT_GT(lit, 50);
}
