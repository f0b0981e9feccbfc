#pragma once

#include "progslam/core/rng.hpp"
#include "progslam/io/dataset.hpp"
#include "progslam/sim/scene.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace progslam {

struct SensorNoise {
  double depth_sigma = 0.0;  // meters
  bool depth_proportional = false;
  double color_sigma = 0.0;
  double depth_dropout = 0.0;
  double landmark_pixel_sigma = 0.0;

  void validate() const {
    PROGSLAM_CHECK(depth_sigma >= 0 && color_sigma >= 0 &&
                       landmark_pixel_sigma >= 0,
                   ErrorCode::ValidationError, "noise sigmas must be >= 0");
    PROGSLAM_CHECK(depth_dropout >= 0 && depth_dropout <= 1,
                   ErrorCode::ValidationError, "dropout must be in [0,1]");
  }
};

struct TrajectorySpec {
  enum class Kind { Circle, Lemniscate, MultiRoomCorridor, Static };
  Kind kind = Kind::Circle;
  int frames = 100;
  double radius = 0.8;
  double height = 1.3;
  Vec3 center = Vec3(0, 0, 1.25);   // scene center / orbit center
  Vec3 look_at = Vec3(0, 0, 1.1);
  std::vector<Vec3> waypoints;      // corridor room centers
  double angle_span = 2.0 * M_PI;

  void validate() const {
    PROGSLAM_CHECK(frames >= 1, ErrorCode::ValidationError,
                   "trajectory needs frames >= 1");
    if (kind == Kind::MultiRoomCorridor)
      PROGSLAM_CHECK(waypoints.size() >= 2, ErrorCode::ValidationError,
                     "corridor needs at least two waypoints");
  }
};

// Camera pose looking from `eye` toward `target`, world z up, image v
// axis pointing down.
inline Pose look_at_pose(const Vec3& eye, const Vec3& target,
                         const Vec3& world_up = Vec3::UnitZ()) {
  Vec3 fwd = (target - eye).normalized();
  Vec3 right = fwd.cross(world_up);
  if (right.norm() < 1e-9) right = fwd.cross(Vec3::UnitX());
  right.normalize();
  Vec3 down = fwd.cross(right).normalized();
  Pose p;
  p.R.col(0) = right;
  p.R.col(1) = down;
  p.R.col(2) = fwd;
  p.t = eye;
  return p;
}

inline std::vector<Pose> make_trajectory(const TrajectorySpec& spec) {
  spec.validate();
  std::vector<Pose> poses;
  poses.reserve(spec.frames);
  switch (spec.kind) {
    case TrajectorySpec::Kind::Static: {
      Vec3 eye = spec.center + Vec3(spec.radius, 0, 0);
      eye.z() = spec.height;
      Pose p = look_at_pose(eye, spec.look_at);
      poses.assign(spec.frames, p);
      break;
    }
    case TrajectorySpec::Kind::Circle: {
      for (int k = 0; k < spec.frames; ++k) {
        double th = spec.angle_span * k / spec.frames;
        Vec3 eye = spec.center +
                   Vec3(spec.radius * std::cos(th), spec.radius * std::sin(th), 0);
        eye.z() = spec.height;
        poses.push_back(look_at_pose(eye, spec.look_at));
      }
      break;
    }
    case TrajectorySpec::Kind::Lemniscate: {
      for (int k = 0; k < spec.frames; ++k) {
        double th = spec.angle_span * k / spec.frames;
        double den = 1.0 + std::sin(th) * std::sin(th);
        Vec3 eye = spec.center + Vec3(spec.radius * std::cos(th) / den,
                                      spec.radius * std::sin(th) * std::cos(th) / den,
                                      0);
        eye.z() = spec.height;
        poses.push_back(look_at_pose(eye, spec.look_at));
      }
      break;
    }
    case TrajectorySpec::Kind::MultiRoomCorridor: {
      // piecewise-linear path through the waypoints, camera looking along
      // the direction of motion
      std::vector<double> seg_len;
      double total = 0.0;
      for (size_t i = 0; i + 1 < spec.waypoints.size(); ++i) {
        seg_len.push_back((spec.waypoints[i + 1] - spec.waypoints[i]).norm());
        total += seg_len.back();
      }
      for (int k = 0; k < spec.frames; ++k) {
        double s = total * k / std::max(1, spec.frames - 1);
        size_t seg = 0;
        while (seg + 1 < seg_len.size() && s > seg_len[seg]) {
          s -= seg_len[seg];
          ++seg;
        }
        Vec3 a = spec.waypoints[seg], b = spec.waypoints[seg + 1];
        Vec3 dir = (b - a).normalized();
        Vec3 eye = a + dir * std::min(s, seg_len[seg]);
        eye.z() = spec.height;
        Vec3 target = eye + dir;
        target.z() = spec.height - 0.05;
        poses.push_back(look_at_pose(eye, target));
      }
      break;
    }
  }
  return poses;
}

struct GtFrame {
  ImageRgb8 rgb;
  ImageDepth16 depth;
  // Unquantized z-depth in meters (NaN where invalid), kept for
  // consistency checks.
  MatX raw_depth;
};

constexpr double kTraceMaxT = 40.0;

// Renders one ground-truth RGB-D frame by sphere tracing each pixel ray:
// Lambertian shading under one fixed directional light plus ambient,
// optional Gaussian noise, and depth dropout.
inline GtFrame render_gt_frame(const PrimitiveScene& scene, const Pose& pose,
                               const CameraIntrinsics& intr,
                               const SensorNoise& noise, Rng& rng) {
  GtFrame out;
  out.rgb = ImageRgb8(intr.width, intr.height);
  out.depth = ImageDepth16(intr.width, intr.height);
  out.raw_depth =
      MatX::Constant(intr.height, intr.width,
                     std::numeric_limits<double>::quiet_NaN());
  const Vec3 light = Vec3(-0.4, 0.25, -0.88).normalized();
  const Vec3 background(0.02, 0.02, 0.03);
  for (int j = 0; j < intr.height; ++j) {
    for (int i = 0; i < intr.width; ++i) {
      Vec2 px(i + 0.5, j + 0.5);
      Ray ray = pixel_ray(pose, intr, px);
      auto t = trace_depth(scene, ray, kTraceMaxT);
      if (!t) {
        out.rgb.set(i, j, background);
        continue;
      }
      Vec3 hit = ray.origin + *t * ray.direction;
      Vec3 n = scene.normal(hit);
      double shade = 0.35 + 0.65 * std::max(0.0, n.dot(-light));
      Vec3 color = scene.albedo(hit) * shade;
      if (noise.color_sigma > 0)
        for (int c = 0; c < 3; ++c) color[c] += rng.normal(0, noise.color_sigma);
      out.rgb.set(i, j, color);

      double dir_z = backproject_dir(intr, px).normalized().z();
      double z = *t * dir_z;
      out.raw_depth(j, i) = z;
      if (noise.depth_dropout > 0 && rng.uniform() < noise.depth_dropout)
        continue;  // invalid depth pixel
      if (noise.depth_sigma > 0)
        z += rng.normal(0, noise.depth_sigma) *
             (noise.depth_proportional ? z : 1.0);
      out.depth.set_meters(i, j, z);
    }
  }
  return out;
}

// Random surface landmarks with per-frame visibility via an occlusion
// trace toward each landmark.
inline std::vector<Vec3> sample_landmarks(const PrimitiveScene& scene,
                                          const std::vector<Pose>& poses,
                                          const CameraIntrinsics& intr,
                                          int count, Rng& rng) {
  std::vector<Vec3> landmarks;
  int guard = 0;
  while (static_cast<int>(landmarks.size()) < count && guard++ < count * 50) {
    const Pose& pose = poses[rng.index(poses.size())];
    Vec2 px(rng.uniform(1.0, intr.width - 1.0),
            rng.uniform(1.0, intr.height - 1.0));
    Ray ray = pixel_ray(pose, intr, px);
    auto t = trace_depth(scene, ray, kTraceMaxT);
    if (!t || *t < 0.2) continue;
    landmarks.push_back(ray.origin + *t * ray.direction);
  }
  return landmarks;
}

inline bool landmark_visible(const PrimitiveScene& scene, const Pose& pose,
                             const CameraIntrinsics& intr, const Vec3& landmark,
                             Vec2* pixel_out = nullptr) {
  Vec3 p_cam = pose.apply_inverse(landmark);
  if (p_cam.z() < 0.05) return false;
  Vec2 px;
  try {
    px = project(intr, p_cam);
  } catch (const Error&) {
    return false;
  }
  if (px.x() < 1.0 || px.x() >= intr.width - 1.0 || px.y() < 1.0 ||
      px.y() >= intr.height - 1.0)
    return false;
  double dist = (landmark - pose.t).norm();
  Ray ray{pose.t, (landmark - pose.t) / dist};
  auto t = trace_depth(scene, ray, kTraceMaxT);
  if (!t || std::abs(*t - dist) > 1e-3) return false;
  if (pixel_out) *pixel_out = px;
  return true;
}

struct SimulationConfig {
  int landmark_count = 120;
  double timestamp_step = 1.0 / 30.0;
};

// Full dataset generation: frames, ground-truth poses, landmarks, and
// noisy observations, all deterministic under the seed.
inline DatasetBundle generate_sequence(const PrimitiveScene& scene,
                                       const TrajectorySpec& traj_spec,
                                       const SensorNoise& noise,
                                       const CameraIntrinsics& intr,
                                       uint64_t seed,
                                       const SimulationConfig& sim_cfg = {}) {
  scene.validate();
  noise.validate();
  DatasetBundle ds;
  ds.intr = intr;
  std::vector<Pose> poses = make_trajectory(traj_spec);
  for (size_t i = 0; i < poses.size(); ++i)
    ds.gt.push_back({sim_cfg.timestamp_step * static_cast<double>(i), poses[i]});

  for (size_t i = 0; i < poses.size(); ++i) {
    Rng rng = Rng::keyed(seed, 0xf7a3e, i);
    GtFrame gt = render_gt_frame(scene, poses[i], intr, noise, rng);
    ds.frames.push_back({std::move(gt.rgb), std::move(gt.depth)});
  }

  Rng lm_rng = Rng::keyed(seed, 0x1a2d3);
  ds.landmarks = sample_landmarks(scene, poses, intr, sim_cfg.landmark_count,
                                  lm_rng);
  for (size_t i = 0; i < poses.size(); ++i) {
    Rng obs_rng = Rng::keyed(seed, 0x0b5e7, i);
    for (size_t k = 0; k < ds.landmarks.size(); ++k) {
      Vec2 px;
      if (!landmark_visible(scene, poses[i], intr, ds.landmarks[k], &px))
        continue;
      if (noise.landmark_pixel_sigma > 0) {
        px.x() += obs_rng.normal(0, noise.landmark_pixel_sigma);
        px.y() += obs_rng.normal(0, noise.landmark_pixel_sigma);
      }
      if (px.x() < 0 || px.x() >= intr.width || px.y() < 0 ||
          px.y() >= intr.height)
        continue;
      ds.observations.push_back(
          {static_cast<int>(i), static_cast<int>(k), px});
    }
  }
  return ds;
}

}  // namespace progslam
