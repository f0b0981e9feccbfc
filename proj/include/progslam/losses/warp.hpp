#pragma once

#include "progslam/geom/camera.hpp"
#include "progslam/geom/pose.hpp"
#include "progslam/io/image.hpp"
#include "progslam/render/pipeline.hpp"

#include <map>
#include <vector>

namespace progslam {

struct FramePose {
  Pose pose;
  int slot = -1;  // pose-gradient slot; -1 = held fixed
};

using PoseTable = std::map<int, FramePose>;

// Target view of a neural warp: the keyframe whose observed images the
// source rays are warped into.
struct WarpTarget {
  const ImageRgb8* rgb = nullptr;
  const ImageDepth16* depth = nullptr;
  CameraIntrinsics intr;
  Pose pose;
  int pose_slot = -1;
};

struct WarpResult {
  double loss_color = 0.0;
  double loss_depth = 0.0;
  int kept = 0;
  int dropped = 0;
};

// Neural warping losses: each rendered surface point of the source
// workspace is lifted with its rendered depth, transported into the
// target frame, and compared against the target's observed color (at the
// projected pixel, bilinear) and observed depth (against the transported
// z). Points that miss the target image, land on invalid depth, or are
// occluded (transported z beyond observed depth + truncation) are
// dropped.
//
// The backward path accumulates the direct pose gradients (source and
// target twists) and the upstream gradients into the source workspace's
// rendered color/depth, through which the source pose and field receive
// the remainder of the chain.
class WarpLoss {
 public:
  struct Term {
    int ray = -1;
    Vec3 point = Vec3::Zero();     // lifted world point
    Vec3 p_cam = Vec3::Zero();     // point in target camera frame
    Vec2 px = Vec2::Zero();        // projected target pixel
    Vec3 res_color = Vec3::Zero();
    double res_depth = 0.0;
    Vec3 color_du = Vec3::Zero(), color_dv = Vec3::Zero();
    double depth_du = 0.0, depth_dv = 0.0;
  };

  WarpResult forward(const RenderWorkspace& ws, const WarpTarget& target,
                     double truncation) {
    ws_ = &ws;
    target_ = target;
    terms_.clear();
    WarpResult res;
    for (int r = 0; r < ws.ray_count(); ++r) {
      if (!ws.ray_hit(r)) {
        ++res.dropped;
        continue;
      }
      Term t;
      t.ray = r;
      t.point = ws.ray(r).ray.origin + ws.depths()[r] * ws.ray(r).ray.direction;
      t.p_cam = target.pose.apply_inverse(t.point);
      if (t.p_cam.z() <= 1e-6) {
        ++res.dropped;
        continue;
      }
      t.px = project(target.intr, t.p_cam);
      Vec3 c;
      double d;
      if (!bilinear_color(*target.rgb, t.px.x(), t.px.y(), c, &t.color_du,
                          &t.color_dv) ||
          !bilinear_depth(*target.depth, t.px.x(), t.px.y(), d, &t.depth_du,
                          &t.depth_dv)) {
        ++res.dropped;
        continue;
      }
      if (t.p_cam.z() > d + truncation) {  // occluded in the target view
        ++res.dropped;
        continue;
      }
      t.res_color = ws.colors().col(r) - c;
      t.res_depth = t.p_cam.z() - d;
      res.loss_color += t.res_color.squaredNorm() / 3.0;
      res.loss_depth += t.res_depth * t.res_depth;
      terms_.push_back(t);
      ++res.kept;
    }
    PROGSLAM_CHECK(res.kept > 0, ErrorCode::NoValidWarps,
                   "every warped point was dropped");
    res.loss_color /= res.kept;
    res.loss_depth /= res.kept;
    result_ = res;
    return res;
  }

  // Adds w_color * d(loss_color) + w_depth * d(loss_depth) into the
  // upstream gradients of the source workspace (d_color, d_depth), the
  // source pose twist (via `source_slot`, for the chain through the
  // lifted point with rendered depth held fixed), and the target pose
  // twist.
  void backward(double w_color, double w_depth, MatX& d_color, VecX& d_depth,
                std::vector<Vec6>* pose_grads) const {
    const double nc = 2.0 / (3.0 * result_.kept);
    const double nd = 2.0 / result_.kept;
    const Mat3 Rt = target_.pose.R;
    for (const Term& t : terms_) {
      int r = t.ray;
      // rendered color enters the color residual directly
      d_color.col(r) += w_color * nc * t.res_color;
      // gradient w.r.t. the projected pixel (image lookups)
      Vec2 g_px = -w_color * nc *
                      Vec2(t.res_color.dot(t.color_du), t.res_color.dot(t.color_dv)) -
                  w_depth * nd * t.res_depth * Vec2(t.depth_du, t.depth_dv);
      // gradient w.r.t. the target-frame point
      Vec3 g_pcam = project_jacobian(target_.intr, t.p_cam).transpose() * g_px;
      g_pcam.z() += w_depth * nd * t.res_depth;
      // chain to the lifted world point
      Vec3 g_point = Rt * g_pcam;
      // source: through the rendered depth (point = o + depth * dir)
      d_depth[r] += g_point.dot(ws_->ray(r).ray.direction);
      if (pose_grads) {
        int src_slot = ws_->ray(r).pose_slot;
        if (src_slot >= 0) {
          // depth held fixed: the lifted point moves rigidly with the
          // source pose
          (*pose_grads)[src_slot] +=
              point_twist_jacobian(t.point).transpose() * g_point;
        }
        if (target_.pose_slot >= 0) {
          // p_cam = R_t^T (exp(-delta) point - t_t)
          Vec6 g;
          g.head<3>() = -Rt * g_pcam;
          g.tail<3>() = skew(t.point).transpose() * (Rt * g_pcam);
          (*pose_grads)[target_.pose_slot] += g;
        }
      }
    }
  }

  const WarpResult& result() const { return result_; }

 private:
  const RenderWorkspace* ws_ = nullptr;
  WarpTarget target_;
  std::vector<Term> terms_;
  WarpResult result_;
};

// --- reprojection -----------------------------------------------------------

struct Correspondence {
  int frame_i = -1, frame_j = -1;
  Vec2 pixel_i = Vec2::Zero();
  Vec2 pixel_j = Vec2::Zero();
  Vec3 point_i = Vec3::Zero();  // measured 3D point in camera-i coordinates

  void validate(const CameraIntrinsics& intr) const {
    PROGSLAM_CHECK(intr.pixel_in_bounds(pixel_i) && intr.pixel_in_bounds(pixel_j),
                   ErrorCode::PixelOutOfBounds,
                   "correspondence pixel outside the image");
    PROGSLAM_CHECK(point_i.z() > 0.0, ErrorCode::NonPositiveDepth,
                   "correspondence point must have positive depth");
  }
};

// Sum over correspondences of the reprojection residual norm, with
// residuals above `clamp_px` clamped (their gradient vanishes).
inline double reprojection_loss(const std::vector<Correspondence>& batch,
                                const PoseTable& poses,
                                const CameraIntrinsics& intr,
                                double clamp_px = 20.0,
                                std::vector<Vec6>* pose_grads = nullptr,
                                double weight = 1.0) {
  PROGSLAM_CHECK(!batch.empty(), ErrorCode::EmptyBatch,
                 "reprojection loss on empty batch");
  double total = 0.0;
  for (const Correspondence& c : batch) {
    const FramePose& fi = poses.at(c.frame_i);
    const FramePose& fj = poses.at(c.frame_j);
    Vec3 p_world = fi.pose.apply(c.point_i);
    Vec3 p_j = fj.pose.apply_inverse(p_world);
    if (p_j.z() <= 1e-9) {
      total += clamp_px;  // behind the target camera: clamped outlier
      continue;
    }
    Vec2 proj = project(intr, p_j);
    Vec2 res = c.pixel_j - proj;
    double n = res.norm();
    if (n > clamp_px) {
      total += clamp_px;
      continue;
    }
    total += n;
    if (pose_grads && n > 1e-12) {
      Vec2 g_res = weight * res / n;
      Vec2 g_proj = -g_res;
      Vec3 g_pj = project_jacobian(intr, p_j).transpose() * g_proj;
      Vec3 g_world = fj.pose.R * g_pj;
      if (fi.slot >= 0)
        (*pose_grads)[fi.slot] +=
            point_twist_jacobian(p_world).transpose() * g_world;
      if (fj.slot >= 0) {
        Vec6 g;
        g.head<3>() = -g_world;
        g.tail<3>() = skew(p_world).transpose() * g_world;
        (*pose_grads)[fj.slot] += g;
      }
    }
  }
  return total;
}

}  // namespace progslam
