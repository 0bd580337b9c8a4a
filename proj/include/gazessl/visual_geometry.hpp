// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace gazessl {

/// Pinhole camera description with an isotropic pixel pitch.
struct CameraIntrinsics {
  int width_px = 640;
  int height_px = 480;
  double hfov_deg = 72.0;
  double fps = 30.0;

  /// Throws std::invalid_argument when any field is out of range.
  void validate() const;
  double px_per_deg() const { return width_px / hfov_deg; }
  double deg_per_px() const { return hfov_deg / width_px; }
};

struct GazePoint {
  double x = 0.0;
  double y = 0.0;
};

/// Square pixel window; (x0, y0) is the inclusive top-left corner.
struct CropWindow {
  int x0 = 0;
  int y0 = 0;
  int size_px = 0;

  bool contains(const GazePoint& p) const;
  bool operator==(const CropWindow&) const = default;
};

bool in_frame(const GazePoint& p, const CameraIntrinsics& intr);

/// Linear small-angle conversion: deg * width / hfov.
double deg_to_px(double deg, const CameraIntrinsics& intr);

/// Square window of `size_px` centred on the gaze pixel. When the window
/// would cross a border it is shifted orthogonally away from that border by
/// the minimum number of pixels, so it always fits in the frame and still
/// contains the gaze point.
CropWindow compute_crop(const GazePoint& gaze, int size_px, const CameraIntrinsics& intr);

/// Visual angle between two frame points, using the horizontal pixel pitch on
/// both axes.
double angular_distance(const GazePoint& a, const GazePoint& b, const CameraIntrinsics& intr);

}  // namespace gazessl
