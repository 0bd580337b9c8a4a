// SPDX-License-Identifier: Apache-2.0
#include "gazessl/visual_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gazessl {

void CameraIntrinsics::validate() const {
  if (width_px < 1 || height_px < 1) {
    throw std::invalid_argument("camera intrinsics: frame dimensions must be >= 1");
  }
  if (!(hfov_deg > 0.0 && hfov_deg < 180.0)) {
    throw std::invalid_argument("camera intrinsics: hfov_deg must lie in (0, 180)");
  }
  if (!(fps > 0.0)) {
    throw std::invalid_argument("camera intrinsics: fps must be positive");
  }
}

bool CropWindow::contains(const GazePoint& p) const {
  const double px = std::floor(p.x);
  const double py = std::floor(p.y);
  return px >= x0 && px < x0 + size_px && py >= y0 && py < y0 + size_px;
}

bool in_frame(const GazePoint& p, const CameraIntrinsics& intr) {
  return p.x >= 0.0 && p.y >= 0.0 && p.x < intr.width_px && p.y < intr.height_px;
}

double deg_to_px(double deg, const CameraIntrinsics& intr) {
  if (!(deg > 0.0)) {
    throw std::domain_error("deg_to_px: visual angle must be positive");
  }
  return deg * intr.px_per_deg();
}

CropWindow compute_crop(const GazePoint& gaze, int size_px, const CameraIntrinsics& intr) {
  if (size_px < 1 || size_px > std::min(intr.width_px, intr.height_px)) {
    throw std::domain_error("compute_crop: crop size does not fit in the frame");
  }
  // Centre on the gaze pixel; identical to floor(gaze - size/2) for even sizes.
  const int gx = static_cast<int>(std::floor(gaze.x));
  const int gy = static_cast<int>(std::floor(gaze.y));
  const int half = size_px / 2;
  CropWindow w;
  w.size_px = size_px;
  w.x0 = std::clamp(gx - half, 0, intr.width_px - size_px);
  w.y0 = std::clamp(gy - half, 0, intr.height_px - size_px);
  return w;
}

double angular_distance(const GazePoint& a, const GazePoint& b, const CameraIntrinsics& intr) {
  return std::hypot(a.x - b.x, a.y - b.y) * intr.deg_per_px();
}

}  // namespace gazessl
