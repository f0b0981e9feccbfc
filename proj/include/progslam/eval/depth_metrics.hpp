#pragma once

#include "progslam/io/dataset.hpp"
#include "progslam/render/pipeline.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace progslam {

// Renders one z-depth image from the atlas (NaN where no surface was
// hit). Rays are evaluated in batches through the fused query path.
inline MatX render_depth_image(const FieldAtlas& atlas, const Pose& pose,
                               const CameraIntrinsics& intr,
                               const RenderConfig& cfg, Rng& rng,
                               int batch_size = 4096) {
  MatX out = MatX::Constant(intr.height, intr.width,
                            std::numeric_limits<double>::quiet_NaN());
  PipelineOptions opt;
  opt.test_mode = true;  // deterministic strata for evaluation
  opt.want_param_grad = false;
  std::vector<RayObservation> rays;
  std::vector<std::pair<int, int>> pix;
  RenderWorkspace ws;
  auto flush = [&]() {
    if (rays.empty()) return;
    ws.forward(atlas, rays, cfg, rng, opt);
    for (int r = 0; r < ws.ray_count(); ++r) {
      if (!ws.ray_hit(r)) continue;
      auto [i, j] = pix[r];
      out(j, i) = ws.depths()[r] * rays[r].dir_cam.z();
    }
    rays.clear();
    pix.clear();
  };
  for (int j = 0; j < intr.height; ++j) {
    for (int i = 0; i < intr.width; ++i) {
      Vec2 px(i + 0.5, j + 0.5);
      RayObservation ro;
      ro.ray = pixel_ray(pose, intr, px);
      ro.dir_cam = backproject_dir(intr, px).normalized();
      rays.push_back(ro);
      pix.emplace_back(i, j);
      if (static_cast<int>(rays.size()) >= batch_size) flush();
    }
  }
  flush();
  return out;
}

// Mean absolute difference in cm between rendered and observed depth over
// pixels valid in both, across n_views views evenly spread through the
// trajectory.
inline double depth_l1(const FieldAtlas& atlas, const std::vector<Pose>& poses,
                       const std::vector<const ImageDepth16*>& gt_depths,
                       const CameraIntrinsics& intr, const RenderConfig& cfg,
                       int n_views, Rng& rng) {
  PROGSLAM_CHECK(n_views >= 1 && !poses.empty() &&
                     poses.size() == gt_depths.size(),
                 ErrorCode::ValidationError, "depth_l1 needs views");
  double acc = 0.0;
  long count = 0;
  int stride = std::max<int>(1, static_cast<int>(poses.size()) / n_views);
  for (size_t v = 0; v < poses.size() && static_cast<int>(v / stride) < n_views;
       v += stride) {
    MatX rendered = render_depth_image(atlas, poses[v], intr, cfg, rng);
    const ImageDepth16& gt = *gt_depths[v];
    for (int j = 0; j < intr.height; ++j)
      for (int i = 0; i < intr.width; ++i) {
        if (!gt.valid(i, j) || !std::isfinite(rendered(j, i))) continue;
        acc += std::abs(rendered(j, i) - gt.meters(i, j));
        ++count;
      }
  }
  PROGSLAM_CHECK(count > 0, ErrorCode::NoValidPixels,
                 "no overlapping valid pixels for depth L1");
  return 100.0 * acc / count;
}

}  // namespace progslam
