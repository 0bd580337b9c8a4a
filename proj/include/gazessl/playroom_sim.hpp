// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gazessl/image.hpp"
#include "gazessl/visual_geometry.hpp"

namespace gazessl {

enum class ShapeFamily { Disc, Bar, Cross, Ring, Blob, Polygon };

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// One toy. Objects are 2-D glyphs in a canonical frame of radius 1; the
/// `view` parameter of an ObjectPose (period 1) morphs the silhouette and
/// shading the way a rotation in depth would.
struct ObjectSpec {
  int object_id = 0;
  ShapeFamily shape_family = ShapeFamily::Disc;
  int polygon_sides = 0;  // Polygon only
  Rgb base_color;
  std::uint64_t texture_seed = 0;
  double size_px = 0.0;  // nominal diameter on the session frame
};

/// Deterministic toy set; every (shape_family, base_color) pair is unique.
std::vector<ObjectSpec> make_objects(int n_objects, std::uint64_t object_seed, double size_px);

/// Placement of an object in frame pixel coordinates.
struct ObjectPose {
  double cx = 0.0, cy = 0.0;
  double radius_px = 1.0;
  double view = 0.0;
  double base_rotation = 0.0;  // radians
};

bool object_covers(const ObjectSpec& obj, const ObjectPose& pose, double x, double y);
/// Colour of the object surface at (x, y); only meaningful when covered.
Rgb object_color(const ObjectSpec& obj, const ObjectPose& pose, double x, double y);

enum class PolicyKind { ToddlerLike, AdultLike, Random, NoEyeMovement };

struct GazePolicy {
  PolicyKind kind = PolicyKind::ToddlerLike;
  double mean_fixation_s = 0.5;
  double mean_look_bout_s = 1.2;
  double mean_hold_look_s = 3.0;
  double saccade_amplitude_deg = 3.5;
  std::uint64_t policy_seed = 1;

  static GazePolicy toddler_like(std::uint64_t seed = 1);
  static GazePolicy adult_like(std::uint64_t seed = 1);
  void validate() const;
};

struct HeadMotion {
  double amplitude_deg = 8.0;
  double period_s = 5.0;
};

enum class Background { Clutter, Blank };

struct SessionConfig {
  CameraIntrinsics intr{64, 64, 72.0, 30.0};
  double duration_s = 60.0;
  int n_objects = 8;
  GazePolicy policy;
  HeadMotion head_motion;
  Background background = Background::Clutter;
  std::uint64_t render_seed = 1;
  std::uint64_t object_seed = 7;   // shared by sessions that play with the same toys
  double object_size_deg = 20.0;   // diameter of a toy on the table
  double table_spacing = 1.9;      // grid pitch in object diameters
  double held_scale = 1.7;         // held size relative to the table size
  bool render_images = true;       // false: labels and gaze only

  int frame_count() const;
  void validate() const;
};

struct FrameRecord {
  int frame_idx = 0;
  Image image;
  GazePoint gaze;
  std::optional<int> target_object;
  bool holding = false;
  std::optional<int> held_object;  // held regardless of where the gaze is
  double held_view = 0.0;          // unwrapped view parameter of the held object
};

/// Hand of the play partner entering the field of view.
struct Occluder {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  Rgb color;
};

/// Everything needed to render one frame.
struct WorldState {
  int frame_idx = 0;
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  std::vector<ObjectPose> table;   // pixel-space pose of every object on the table
  std::optional<int> held;         // object in hand; not drawn on the table
  ObjectPose held_pose;
  std::vector<Occluder> occluders;
};

/// Static part of a session: the toy set, table layout and background.
class Playroom {
 public:
  explicit Playroom(const SessionConfig& cfg);

  const SessionConfig& config() const { return cfg_; }
  const std::vector<ObjectSpec>& objects() const { return objects_; }

  /// Pixel-space pose of table object `id` given the head orientation.
  ObjectPose table_pose(int id, double yaw_deg, double pitch_deg, double view) const;
  double table_radius_px() const { return table_radius_px_; }
  double held_radius_px() const { return cfg_.held_scale * table_radius_px_; }
  /// Half-extent of the tabletop region in degrees around the table centre.
  double table_half_deg() const { return table_half_deg_; }

  Image render(const WorldState& state) const;
  /// Topmost object drawn at the pixel containing `p`, if any.
  std::optional<int> object_at(const WorldState& state, const GazePoint& p) const;

 private:
  struct ClutterRect {
    double x0, y0, x1, y1;  // world degrees
    Rgb color;
  };

  Rgb background_at(double wx, double wy) const;

  SessionConfig cfg_;
  std::vector<ObjectSpec> objects_;
  std::vector<double> world_x_, world_y_;  // table positions, degrees
  std::vector<ClutterRect> clutter_;
  double table_radius_px_ = 1.0;
  double table_half_deg_ = 0.0;
};

/// Renders the frame for `state`; deterministic in (render_seed, frame_idx).
FrameRecord render_frame(const Playroom& room, const WorldState& state);

/// Full session: round(duration_s * fps) frames with gaze and ground truth.
std::vector<FrameRecord> simulate_session(const SessionConfig& cfg);

/// Simulator-side trace used by tests; the world states are not stored by
/// simulate_session.
struct SimulationTrace {
  std::vector<FrameRecord> frames;
  std::vector<WorldState> states;
};
SimulationTrace simulate_session_with_states(const SessionConfig& cfg);

struct LabeledImage {
  Image image;
  int label = 0;
  double view = 0.0;
  double scale = 1.0;
};

/// `n_views` renderings of each object spanning its view family (view x scale
/// grid), ordered object-major then by view so that neighbours in the list
/// are neighbouring viewpoints.
std::vector<LabeledImage> generate_oracle_views(const std::vector<ObjectSpec>& objects, int n_views,
                                                Background background, int image_size_px,
                                                std::uint64_t seed);

std::string to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& s);
std::string to_string(Background b);
Background background_from_string(const std::string& s);

}  // namespace gazessl
