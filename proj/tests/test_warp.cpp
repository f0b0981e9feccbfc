#include <progslam/losses/warp.hpp>
#include <progslam/losses/terms.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "support/finite_difference.hpp"

using namespace progslam;
using progslam::testing::gradient_rel_error;

namespace {

FieldConfig small_fc() {
  FieldConfig fc;
  fc.coarse_cell = 1.0;
  fc.fine_cell = 0.5;
  fc.channels = 2;
  fc.hidden = 8;
  fc.latent_dim = 4;
  fc.one_blob.bins = 4;
  fc.truncation = 0.2;
  fc.plane_init_scale = 0.02;
  return fc;
}

FieldAtlas one_field_atlas(uint64_t seed) {
  AtlasConfig ac;
  ac.local_side = 4.0;
  ac.margin = 0.5;
  FieldAtlas atlas(ac, small_fc(), seed);
  atlas.allocate_field(Vec3::Zero(), {});
  return atlas;
}

// Teach the field a soft wall in front of the camera so rendered rays
// produce stable hits: pin the sdf head to respond to the fine xy plane.
void make_hitting_field(LocalField& f) {
  auto& last = f.geo_decoder().layer(f.geo_decoder().layer_count() - 1);
  last.W.setZero();
  last.b.setZero();
  last.b[0] = -2.0;  // solid everywhere: every ray saturates quickly
}

struct View {
  CameraIntrinsics intr{30, 30, 15, 12, 30, 24};
  Pose pose;
  ImageRgb8 rgb;
  ImageDepth16 depth;
};

// Renders the atlas into a target view's images (color quantized to
// 8 bits, z-depth to millimeters).
View render_view(const FieldAtlas& atlas, const Pose& pose,
                 const RenderConfig& cfg) {
  View v;
  v.pose = pose;
  v.rgb = ImageRgb8(v.intr.width, v.intr.height);
  v.depth = ImageDepth16(v.intr.width, v.intr.height);
  Rng rng(3);
  for (int j = 0; j < v.intr.height; ++j) {
    for (int i = 0; i < v.intr.width; ++i) {
      Vec2 px(i + 0.5, j + 0.5);
      Ray ray = pixel_ray(pose, v.intr, px);
      RenderedPixel p = render_pixel(atlas, ray, cfg, std::nullopt, rng, true);
      v.rgb.set(i, j, p.color);
      if (p.hit) {
        double z = p.depth * backproject_dir(v.intr, px).normalized().z();
        v.depth.set_meters(i, j, z);
      }
    }
  }
  return v;
}

std::vector<RayObservation> view_rays(const View& v, Rng& rng, int n,
                                      int slot) {
  std::vector<RayObservation> rays;
  for (int i = 0; i < n; ++i) {
    Vec2 px(rng.uniform(4, v.intr.width - 4), rng.uniform(4, v.intr.height - 4));
    RayObservation ro;
    ro.ray = pixel_ray(v.pose, v.intr, px);
    ro.dir_cam = backproject_dir(v.intr, px).normalized();
    ro.obs_color = Vec3::Zero();
    ro.obs_t = -1.0;
    ro.pose_slot = slot;
    rays.push_back(ro);
  }
  return rays;
}

}  // namespace

TEST_CASE("self-warp with exact rendering is zero up to quantization") {
  FieldAtlas atlas = one_field_atlas(5);
  make_hitting_field(atlas.active_field());
  RenderConfig cfg;
  cfg.n_stratified = 12;
  cfg.n_importance = 0;
  cfg.t_near = 0.1;
  cfg.t_far = 1.5;
  cfg.truncation = 0.2;
  View v = render_view(atlas, Pose::identity(), cfg);

  Rng rng(7);
  // rays exactly through pixel centers so the bilinear lookup hits the
  // stored values
  std::vector<RayObservation> rays;
  for (int k = 0; k < 20; ++k) {
    int i = 3 + static_cast<int>(rng.index(v.intr.width - 6));
    int j = 3 + static_cast<int>(rng.index(v.intr.height - 6));
    RayObservation ro;
    Vec2 px(i + 0.5, j + 0.5);
    ro.ray = pixel_ray(v.pose, v.intr, px);
    ro.dir_cam = backproject_dir(v.intr, px).normalized();
    ro.pose_slot = -1;
    rays.push_back(ro);
  }
  RenderWorkspace ws;
  Rng r0(9);
  PipelineOptions opt;
  opt.test_mode = true;
  ws.forward(atlas, rays, cfg, r0, opt);

  WarpTarget tgt;
  tgt.rgb = &v.rgb;
  tgt.depth = &v.depth;
  tgt.intr = v.intr;
  tgt.pose = v.pose;
  WarpLoss warp;
  WarpResult res = warp.forward(ws, tgt, cfg.truncation);
  CHECK(res.kept > 0);
  CHECK(res.loss_color < 2e-5);   // 8-bit color quantization floor
  CHECK(res.loss_depth < 1e-5);   // millimeter depth quantization floor
}

TEST_CASE("warp losses drop occluded and out-of-view points") {
  FieldAtlas atlas = one_field_atlas(11);
  make_hitting_field(atlas.active_field());
  RenderConfig cfg;
  cfg.n_stratified = 12;
  cfg.n_importance = 0;
  cfg.t_near = 0.1;
  cfg.t_far = 1.5;
  cfg.truncation = 0.2;
  View v = render_view(atlas, Pose::identity(), cfg);

  Rng rng(13);
  auto rays = view_rays(v, rng, 10, -1);
  RenderWorkspace ws;
  Rng r0(15);
  PipelineOptions opt;
  opt.test_mode = true;
  ws.forward(atlas, rays, cfg, r0, opt);

  // a target looking the other way sees none of the warped points
  WarpTarget tgt;
  tgt.rgb = &v.rgb;
  tgt.depth = &v.depth;
  tgt.intr = v.intr;
  tgt.pose.R = Eigen::AngleAxisd(M_PI, Vec3::UnitY()).toRotationMatrix();
  tgt.pose.t = Vec3(0, 0, 5);
  WarpLoss warp;
  CHECK_THROWS_AS(warp.forward(ws, tgt, cfg.truncation), Error);
}

TEST_CASE("warp gradients match finite differences") {
  FieldAtlas atlas = one_field_atlas(17);
  make_hitting_field(atlas.active_field());
  // give the color planes some texture so image gradients are nonzero
  Rng tex(19);
  atlas.active_field().planes().for_each_plane([&](FeaturePlane& p) {
    for (Eigen::Index i = 0; i < p.values().size(); ++i)
      p.values().data()[i] += tex.uniform(-0.3, 0.3);
  });
  RenderConfig cfg;
  cfg.n_stratified = 8;
  cfg.n_importance = 0;
  cfg.t_near = 0.1;
  cfg.t_far = 1.5;
  cfg.truncation = 0.2;

  Pose pose_i = se3_exp((Twist() << 0.02, 0.01, -0.03, 0.01, 0.02, -0.01).finished());
  Pose pose_j = se3_exp((Twist() << -0.08, 0.05, 0.04, -0.03, 0.04, 0.02).finished());
  View vj = render_view(atlas, pose_j, cfg);

  const double w_color = 0.7, w_depth = 1.3;
  Rng rng(21);
  std::vector<Vec2> pixels;
  for (int k = 0; k < 6; ++k)
    pixels.emplace_back(rng.uniform(6, 24), rng.uniform(6, 18));

  auto forward_all = [&](const Pose& pi, const Pose& pj, const FieldAtlas& a,
                         RenderWorkspace& ws, WarpLoss& warp) {
    std::vector<RayObservation> rays;
    for (const Vec2& px : pixels) {
      RayObservation ro;
      ro.ray = pixel_ray(pi, vj.intr, px);
      ro.dir_cam = backproject_dir(vj.intr, px).normalized();
      ro.pose_slot = 0;
      rays.push_back(ro);
    }
    Rng r0(1);
    PipelineOptions opt;
    opt.test_mode = true;
    opt.want_param_grad = true;
    opt.want_pose_grad = true;
    ws.forward(a, rays, cfg, r0, opt);
    WarpTarget tgt;
    tgt.rgb = &vj.rgb;
    tgt.depth = &vj.depth;
    tgt.intr = vj.intr;
    tgt.pose = pj;
    tgt.pose_slot = 1;
    WarpResult res = warp.forward(ws, tgt, cfg.truncation);
    return w_color * res.loss_color + w_depth * res.loss_depth;
  };

  RenderWorkspace ws;
  WarpLoss warp;
  double L0 = forward_all(pose_i, pose_j, atlas, ws, warp);
  CHECK(L0 > 0.0);

  MatX d_color = MatX::Zero(3, ws.ray_count());
  VecX d_depth = VecX::Zero(ws.ray_count());
  std::vector<Vec6> pose_grads(2, Vec6::Zero());
  warp.backward(w_color, w_depth, d_color, d_depth, &pose_grads);
  VecX field_grad = VecX::Zero(atlas.active_field().param_count());
  GradSink sink;
  sink.field_grad = &field_grad;
  sink.pose_grads = &pose_grads;
  ws.backward(d_color, d_depth, VecX(), sink);

  double h = 1e-6;
  // pose i
  Vec6 fd_i, fd_j;
  for (int k = 0; k < 6; ++k) {
    Twist d = Twist::Zero();
    d[k] = h;
    RenderWorkspace w1, w2;
    WarpLoss wl1, wl2;
    double lp = forward_all(se3_exp(d) * pose_i, pose_j, atlas, w1, wl1);
    double lm = forward_all(se3_exp(-d) * pose_i, pose_j, atlas, w2, wl2);
    fd_i[k] = (lp - lm) / (2 * h);
    RenderWorkspace w3, w4;
    WarpLoss wl3, wl4;
    lp = forward_all(pose_i, se3_exp(d) * pose_j, atlas, w3, wl3);
    lm = forward_all(pose_i, se3_exp(-d) * pose_j, atlas, w4, wl4);
    fd_j[k] = (lp - lm) / (2 * h);
  }
  CHECK(gradient_rel_error(pose_grads[0], fd_i) < 1e-4);
  CHECK(gradient_rel_error(pose_grads[1], fd_j) < 1e-4);

  // field parameters (subset: finite differences over 60 random indices)
  VecX params = atlas.active_field().param_vector();
  Rng pick(23);
  for (int trial = 0; trial < 60; ++trial) {
    Eigen::Index idx = static_cast<Eigen::Index>(pick.index(params.size()));
    double step = 1e-5 * std::max(1.0, std::abs(params[idx]));
    VecX pp = params, pm = params;
    pp[idx] += step;
    pm[idx] -= step;
    FieldAtlas ap = atlas, am = atlas;
    ap.active_field().set_params(pp);
    am.active_field().set_params(pm);
    RenderWorkspace w1, w2;
    WarpLoss wl1, wl2;
    double fd = (forward_all(pose_i, pose_j, ap, w1, wl1) -
                 forward_all(pose_i, pose_j, am, w2, wl2)) /
                (2 * step);
    CHECK(std::abs(field_grad[idx] - fd) <
          1e-4 * std::max({1.0, std::abs(fd), std::abs(field_grad[idx])}));
  }
}

TEST_CASE("reprojection loss exact poses and trivial geometry") {
  CameraIntrinsics intr{100, 100, 50, 50, 100, 100};
  Rng rng(29);
  PoseTable poses;
  poses[0] = {se3_exp((Twist() << 0.1, -0.2, 0.05, 0.1, -0.05, 0.2).finished()), -1};
  poses[1] = {se3_exp((Twist() << -0.3, 0.1, 0.2, -0.1, 0.2, 0.05).finished()), -1};

  std::vector<Correspondence> batch;
  for (int k = 0; k < 40 && batch.size() < 8; ++k) {
    Correspondence c;
    c.frame_i = 0;
    c.frame_j = 1;
    c.point_i = Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                     rng.uniform(1.0, 2.0));
    Vec3 pj = poses[1].pose.apply_inverse(poses[0].pose.apply(c.point_i));
    if (pj.z() <= 0.1) continue;
    c.pixel_j = project(intr, pj);
    if (!intr.pixel_in_bounds(c.pixel_j)) continue;
    c.pixel_i = project(intr, c.point_i);
    batch.push_back(c);
  }
  REQUIRE(batch.size() >= 5);
  CHECK(reprojection_loss(batch, poses, intr) == Catch::Approx(0.0).margin(1e-9));

  // identity relative pose, point on the optical axis at depth 1
  PoseTable ident;
  ident[0] = {Pose::identity(), -1};
  ident[1] = {Pose::identity(), -1};
  Correspondence c;
  c.frame_i = 0;
  c.frame_j = 1;
  c.point_i = Vec3(0, 0, 1);
  c.pixel_i = c.pixel_j = Vec2(50, 50);
  CHECK(reprojection_loss({c}, ident, intr) == Catch::Approx(0.0).margin(1e-12));

  CHECK_THROWS_AS(reprojection_loss({}, ident, intr), Error);
}

TEST_CASE("reprojection loss equals the analytic displacement sum") {
  CameraIntrinsics intr{100, 100, 50, 50, 100, 100};
  PoseTable poses;
  poses[0] = {Pose::identity(), -1};
  poses[1] = {Pose::identity(), -1};
  std::vector<Correspondence> batch;
  Rng rng(31);
  for (int k = 0; k < 8; ++k) {
    Correspondence c;
    c.frame_i = 0;
    c.frame_j = 1;
    c.point_i = Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2),
                     rng.uniform(1.0, 2.0));
    c.pixel_j = project(intr, c.point_i);
    c.pixel_i = c.pixel_j;
    batch.push_back(c);
  }
  // translate frame j by a known offset and compare against the directly
  // projected displacement
  Vec3 offset(0.05, -0.02, 0.0);
  poses[1].pose.t = offset;
  double expected = 0.0;
  for (const auto& c : batch) {
    Vec2 proj = project(intr, c.point_i - offset);
    expected += (c.pixel_j - proj).norm();
  }
  CHECK(reprojection_loss(batch, poses, intr) == Catch::Approx(expected));
}

TEST_CASE("reprojection is robust to large residuals and keeps gradients finite") {
  CameraIntrinsics intr{100, 100, 50, 50, 100, 100};
  PoseTable poses;
  poses[0] = {Pose::identity(), 0};
  poses[1] = {Pose::identity(), 1};
  Correspondence inlier;
  inlier.frame_i = 0;
  inlier.frame_j = 1;
  inlier.point_i = Vec3(0.05, 0.02, 1.2);
  inlier.pixel_j = project(intr, inlier.point_i) + Vec2(2.0, -1.0);
  inlier.pixel_i = project(intr, inlier.point_i);
  Correspondence outlier = inlier;
  outlier.pixel_j = project(intr, outlier.point_i) + Vec2(60.0, 0.0);

  std::vector<Vec6> grads(2, Vec6::Zero());
  double loss = reprojection_loss({inlier, outlier}, poses, intr, 20.0, &grads);
  CHECK(loss == Catch::Approx(std::hypot(2.0, 1.0) + 20.0));
  // the clamped outlier contributes no gradient; the inlier does
  CHECK(grads[0].norm() > 0.0);
  CHECK(grads[0].allFinite());
}

TEST_CASE("reprojection pose gradients match finite differences") {
  CameraIntrinsics intr{100, 100, 50, 50, 100, 100};
  Pose pi = se3_exp((Twist() << 0.1, -0.05, 0.02, 0.05, 0.1, -0.02).finished());
  Pose pj = se3_exp((Twist() << -0.1, 0.02, 0.05, -0.03, 0.02, 0.08).finished());
  Rng rng(37);
  std::vector<Correspondence> batch;
  for (int k = 0; k < 6; ++k) {
    Correspondence c;
    c.frame_i = 0;
    c.frame_j = 1;
    c.point_i = Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2),
                     rng.uniform(1.0, 2.0));
    Vec3 pjc = pj.apply_inverse(pi.apply(c.point_i));
    c.pixel_j = project(intr, pjc) + Vec2(rng.uniform(-3, 3), rng.uniform(-3, 3));
    c.pixel_i = Vec2(50, 50);
    batch.push_back(c);
  }
  auto loss_at = [&](const Pose& a, const Pose& b) {
    PoseTable t;
    t[0] = {a, -1};
    t[1] = {b, -1};
    return reprojection_loss(batch, t, intr);
  };
  PoseTable t;
  t[0] = {pi, 0};
  t[1] = {pj, 1};
  std::vector<Vec6> grads(2, Vec6::Zero());
  reprojection_loss(batch, t, intr, 20.0, &grads);
  double h = 1e-7;
  Vec6 fd_i, fd_j;
  for (int k = 0; k < 6; ++k) {
    Twist d = Twist::Zero();
    d[k] = h;
    fd_i[k] = (loss_at(se3_exp(d) * pi, pj) - loss_at(se3_exp(-d) * pi, pj)) / (2 * h);
    fd_j[k] = (loss_at(pi, se3_exp(d) * pj) - loss_at(pi, se3_exp(-d) * pj)) / (2 * h);
  }
  CHECK(gradient_rel_error(grads[0], fd_i) < 1e-5);
  CHECK(gradient_rel_error(grads[1], fd_j) < 1e-5);
}
