#pragma once

#include "progslam/core/types.hpp"
#include "progslam/geom/camera.hpp"

#include <cmath>

namespace progslam {

// Twist ordering: translational components first, then rotational
// (axis-angle) components.
using Twist = Vec6;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(),
       v.z(), 0, -v.x(),
       -v.y(), v.x(), 0;
  return m;
}

// Camera-to-world rigid transform: world = R * cam + t.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static Pose identity() { return {}; }

  static Pose translation(const Vec3& offset) {
    Pose p;
    p.t = offset;
    return p;
  }

  Vec3 apply(const Vec3& p_cam) const { return R * p_cam + t; }
  Vec3 apply_inverse(const Vec3& p_world) const {
    return R.transpose() * (p_world - t);
  }

  Pose inverse() const { return {R.transpose(), -(R.transpose() * t)}; }

  Pose operator*(const Pose& rhs) const { return {R * rhs.R, R * rhs.t + t}; }

  bool is_valid(double tol = 1e-9) const {
    Mat3 e = R.transpose() * R - Mat3::Identity();
    return e.cwiseAbs().maxCoeff() < tol &&
           std::abs(R.determinant() - 1.0) < tol && t.allFinite();
  }
};

inline Mat3 so3_exp(const Vec3& phi) {
  double theta2 = phi.squaredNorm();
  double theta = std::sqrt(theta2);
  Mat3 hat = skew(phi);
  double a, b;
  if (theta < 1e-8) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * hat + b * hat * hat;
}

inline Vec3 so3_log(const Mat3& R) {
  double cos_theta = std::min(1.0, std::max(-1.0, (R.trace() - 1.0) * 0.5));
  double theta = std::acos(cos_theta);
  Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  if (theta < 1e-8) {
    return 0.5 * w;
  }
  if (theta > M_PI - 1e-6) {
    // Near pi the off-diagonal differences vanish; recover the axis from
    // the symmetric part instead.
    Mat3 S = 0.5 * (R + Mat3::Identity());
    Vec3 axis(std::sqrt(std::max(0.0, S(0, 0))),
              std::sqrt(std::max(0.0, S(1, 1))),
              std::sqrt(std::max(0.0, S(2, 2))));
    // Fix signs from the largest component.
    int k = 0;
    axis.maxCoeff(&k);
    if (k == 0) {
      axis.y() = std::copysign(axis.y(), S(0, 1));
      axis.z() = std::copysign(axis.z(), S(0, 2));
    } else if (k == 1) {
      axis.x() = std::copysign(axis.x(), S(0, 1));
      axis.z() = std::copysign(axis.z(), S(1, 2));
    } else {
      axis.x() = std::copysign(axis.x(), S(0, 2));
      axis.y() = std::copysign(axis.y(), S(1, 2));
    }
    axis.normalize();
    return theta * axis;
  }
  return (theta / (2.0 * std::sin(theta))) * w;
}

inline Pose se3_exp(const Twist& xi) {
  Vec3 rho = xi.head<3>();
  Vec3 phi = xi.tail<3>();
  double theta2 = phi.squaredNorm();
  double theta = std::sqrt(theta2);
  Mat3 hat = skew(phi);
  double b, c;
  if (theta < 1e-8) {
    b = 0.5 - theta2 / 24.0;
    c = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    b = (1.0 - std::cos(theta)) / theta2;
    c = (theta - std::sin(theta)) / (theta2 * theta);
  }
  Mat3 V = Mat3::Identity() + b * hat + c * hat * hat;
  Pose p;
  p.R = so3_exp(phi);
  p.t = V * rho;
  return p;
}

inline Twist se3_log(const Pose& p) {
  Vec3 phi = so3_log(p.R);
  double theta2 = phi.squaredNorm();
  double theta = std::sqrt(theta2);
  Mat3 hat = skew(phi);
  Mat3 v_inv;
  if (theta < 1e-8) {
    v_inv = Mat3::Identity() - 0.5 * hat + (1.0 / 12.0) * hat * hat;
  } else {
    double k = (1.0 / theta2) -
               (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
    v_inv = Mat3::Identity() - 0.5 * hat + k * hat * hat;
  }
  Twist xi;
  xi.head<3>() = v_inv * p.t;
  xi.tail<3>() = phi;
  return xi;
}

// Relative transform taking camera-i coordinates to camera-j coordinates.
inline Pose relative_pose(const Pose& pose_i, const Pose& pose_j) {
  return pose_j.inverse() * pose_i;
}

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit norm
};

// Ray through a pixel, in world coordinates. The pixel argument uses
// continuous image coordinates (integer pixel (i,j) is sampled at
// (i + 0.5, j + 0.5)).
inline Ray pixel_ray(const Pose& pose, const CameraIntrinsics& intr,
                     const Vec2& px) {
  PROGSLAM_CHECK(intr.pixel_in_bounds(px), ErrorCode::PixelOutOfBounds,
                 "pixel outside the image");
  Vec3 dir_cam = backproject_dir(intr, px).normalized();
  return {pose.t, pose.R * dir_cam};
}

// 3x6 Jacobian of a world point under a left-multiplied twist perturbation
// of its camera-to-world pose: x(delta) = exp(delta) * x.
inline Mat36 point_twist_jacobian(const Vec3& x_world) {
  Mat36 j;
  j.leftCols<3>() = Mat3::Identity();
  j.rightCols<3>() = -skew(x_world);
  return j;
}

}  // namespace progslam
