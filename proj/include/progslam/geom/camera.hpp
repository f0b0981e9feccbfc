#pragma once

#include "progslam/core/types.hpp"

namespace progslam {

struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const {
    PROGSLAM_CHECK(fx > 0 && fy > 0, ErrorCode::ValidationError,
                   "focal lengths must be positive");
    PROGSLAM_CHECK(cx > 0 && cx < width && cy > 0 && cy < height,
                   ErrorCode::ValidationError,
                   "principal point must lie inside the image");
  }

  bool pixel_in_bounds(const Vec2& px) const {
    return px.x() >= 0.0 && px.x() < width && px.y() >= 0.0 && px.y() < height;
  }
};

// Pinhole projection of a camera-frame point to continuous pixel coordinates.
inline Vec2 project(const CameraIntrinsics& intr, const Vec3& p_cam) {
  PROGSLAM_CHECK(p_cam.z() > 1e-9, ErrorCode::NonPositiveDepth,
                 "projection requires z > 0");
  double inv_z = 1.0 / p_cam.z();
  return {intr.fx * p_cam.x() * inv_z + intr.cx,
          intr.fy * p_cam.y() * inv_z + intr.cy};
}

// 2x3 Jacobian of project() w.r.t. the camera-frame point.
inline Mat23 project_jacobian(const CameraIntrinsics& intr, const Vec3& p_cam) {
  double inv_z = 1.0 / p_cam.z();
  double inv_z2 = inv_z * inv_z;
  Mat23 j;
  j << intr.fx * inv_z, 0.0, -intr.fx * p_cam.x() * inv_z2,
       0.0, intr.fy * inv_z, -intr.fy * p_cam.y() * inv_z2;
  return j;
}

// Camera-frame direction with unit z for a pixel; scale by z-depth to
// recover the 3D point.
inline Vec3 backproject_dir(const CameraIntrinsics& intr, const Vec2& px) {
  return {(px.x() - intr.cx) / intr.fx, (px.y() - intr.cy) / intr.fy, 1.0};
}

inline Vec3 backproject(const CameraIntrinsics& intr, const Vec2& px,
                        double depth) {
  PROGSLAM_CHECK(depth > 0.0, ErrorCode::NonPositiveDepth,
                 "backprojection requires depth > 0");
  return backproject_dir(intr, px) * depth;
}

// Factor converting a z-depth at this pixel into distance along the unit
// viewing ray.
inline double depth_to_range(const CameraIntrinsics& intr, const Vec2& px) {
  return backproject_dir(intr, px).norm();
}

}  // namespace progslam
