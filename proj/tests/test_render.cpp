#include <progslam/render/pipeline.hpp>
#include <progslam/render/volume.hpp>
#include <progslam/geom/camera.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "support/finite_difference.hpp"

using namespace progslam;
using progslam::testing::gradient_rel_error;

TEST_CASE("sdf_to_density values and limits") {
  CHECK(sdf_to_density(0.0, 0.1) == Catch::Approx(5.0));
  CHECK(sdf_to_density(-0.1, 0.1) ==
        Catch::Approx(10.0 * 1.0 / (1.0 + std::exp(-1.0))));
  CHECK(sdf_to_density(1e6, 0.1) < 1e-12);
  CHECK(sdf_to_density(-1e6, 0.1) == Catch::Approx(10.0));
}

TEST_CASE("sdf_to_density is strictly decreasing in sdf") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    double beta = rng.uniform(0.01, 1.0);
    double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    CHECK(sdf_to_density(a, beta) > sdf_to_density(b, beta));
  }
}

TEST_CASE("sdf_to_density gradient matches finite differences") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    double s = rng.uniform(-0.5, 0.5), beta = rng.uniform(0.02, 0.5);
    double ds, db;
    sdf_to_density_grad(s, beta, ds, db);
    double h = 1e-7;
    double fd_s = (sdf_to_density(s + h, beta) - sdf_to_density(s - h, beta)) / (2 * h);
    double fd_b = (sdf_to_density(s, beta + h) - sdf_to_density(s, beta - h)) / (2 * h);
    CHECK(ds == Catch::Approx(fd_s).epsilon(1e-5));
    CHECK(db == Catch::Approx(fd_b).epsilon(1e-5));
  }
}

TEST_CASE("sample_ray strata midpoints in test mode") {
  RenderConfig cfg;
  cfg.n_stratified = 4;
  cfg.n_importance = 0;
  cfg.t_near = 0.0;
  cfg.t_far = 4.0;
  Ray ray{Vec3::Zero(), Vec3::UnitZ()};
  Rng rng(1);
  RaySamples s = sample_ray(ray, cfg, std::nullopt, rng, true);
  REQUIRE(s.depths.size() == 4);
  CHECK(s.depths[0] == Catch::Approx(0.5));
  CHECK(s.depths[1] == Catch::Approx(1.5));
  CHECK(s.depths[2] == Catch::Approx(2.5));
  CHECK(s.depths[3] == Catch::Approx(3.5));
}

TEST_CASE("sample_ray importance samples stay near the observed depth") {
  RenderConfig cfg;
  cfg.n_stratified = 4;
  cfg.n_importance = 2;
  cfg.t_near = 0.0;
  cfg.t_far = 4.0;
  cfg.truncation = 0.1;
  Ray ray{Vec3::Zero(), Vec3::UnitZ()};
  Rng rng(1);
  RaySamples s = sample_ray(ray, cfg, 2.0, rng, true);
  REQUIRE(s.depths.size() == 6);
  int inside = 0;
  for (double t : s.depths)
    if (t >= 1.9 && t <= 2.1) ++inside;
  CHECK(inside >= 2);
}

TEST_CASE("sample_ray outputs are strictly increasing") {
  RenderConfig cfg;
  cfg.n_stratified = 16;
  cfg.n_importance = 8;
  cfg.t_near = 0.1;
  cfg.t_far = 5.0;
  Ray ray{Vec3::Zero(), Vec3::UnitZ()};
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    std::optional<double> gt;
    if (rng.uniform() < 0.7) gt = rng.uniform(0.2, 4.8);
    RaySamples s = sample_ray(ray, cfg, gt, rng, false);
    for (size_t k = 1; k < s.depths.size(); ++k) {
      REQUIRE(s.depths[k] > s.depths[k - 1]);
      REQUIRE(s.depths[k] >= cfg.t_near);
      REQUIRE(s.depths[k] <= cfg.t_far + 1e-12);
    }
  }
}

TEST_CASE("integrate of zero densities flags a no-hit pixel") {
  std::vector<double> sigmas(5, 0.0), depths{1, 2, 3, 4, 5};
  std::vector<Vec3> colors(5, Vec3(1, 1, 1));
  RenderedPixel px = integrate(sigmas, colors, depths, true);
  CHECK_FALSE(px.hit);
  CHECK(px.color.norm() == 0.0);
  CHECK(px.depth == 0.0);
  for (double w : px.weights) CHECK(w == 0.0);
}

TEST_CASE("integrate single-sample opacity and saturation") {
  {
    std::vector<double> sigmas{std::log(2.0)}, depths{1.5};
    std::vector<Vec3> colors{Vec3(1, 0, 0)};
    RenderedPixel px = integrate(sigmas, colors, depths, false);
    CHECK(px.weights[0] == Catch::Approx(0.5));
  }
  {
    std::vector<double> sigmas{50.0, 1.0, 1.0}, depths{1.0, 2.0, 3.0};
    std::vector<Vec3> colors{Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    RenderedPixel px = integrate(sigmas, colors, depths, false);
    CHECK(px.weights[0] == Catch::Approx(1.0).margin(1e-12));
    CHECK(px.weights[1] < 1e-12);
    CHECK(px.depth == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("integrate matches an independent cumulative-product oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 8;
    std::vector<double> sigmas(n), depths(n);
    std::vector<Vec3> colors(n);
    double t = 0.5;
    for (int k = 0; k < n; ++k) {
      sigmas[k] = rng.uniform(0.0, 3.0);
      t += rng.uniform(0.05, 0.5);
      depths[k] = t;
      colors[k] = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    }
    for (bool normalize : {false, true}) {
      RenderedPixel px = integrate(sigmas, colors, depths, normalize);
      // oracle: running product of exp(-sigma) for the transmittance
      std::vector<double> w(n);
      double trans = 1.0, wsum = 0.0;
      for (int k = 0; k < n; ++k) {
        w[k] = trans * (1.0 - std::exp(-sigmas[k]));
        trans *= std::exp(-sigmas[k]);
        wsum += w[k];
      }
      Vec3 c = Vec3::Zero();
      double d = 0.0;
      for (int k = 0; k < n; ++k) {
        double wk = normalize && wsum > 1e-8 ? w[k] / wsum : w[k];
        c += wk * colors[k];
        d += wk * depths[k];
      }
      CHECK((px.color - c).norm() < 1e-12);
      CHECK(std::abs(px.depth - d) < 1e-12);
    }
  }
}

TEST_CASE("integrate weight invariants") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 1 + static_cast<int>(rng.index(12));
    std::vector<double> sigmas(n), depths(n);
    std::vector<Vec3> colors(n, Vec3::Zero());
    double t = 0.1;
    for (int k = 0; k < n; ++k) {
      sigmas[k] = rng.uniform(0.0, 5.0);
      t += rng.uniform(0.01, 0.4);
      depths[k] = t;
    }
    RenderedPixel raw = integrate(sigmas, colors, depths, false);
    double sum = 0.0;
    for (double w : raw.weights) {
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      sum += w;
    }
    CHECK(sum <= 1.0 + 1e-12);
    // transmittance is non-increasing
    double trans = 1.0;
    for (int k = 0; k < n; ++k) {
      double next = trans * std::exp(-sigmas[k]);
      CHECK(next <= trans + 1e-15);
      trans = next;
    }
    RenderedPixel norm = integrate(sigmas, colors, depths, true);
    double nsum = 0.0;
    for (double w : norm.weights) nsum += w;
    if (norm.hit) {
      CHECK(std::abs(nsum - 1.0) < 1e-6);
      CHECK(norm.depth >= depths.front() - 1e-12);
      CHECK(norm.depth <= depths.back() + 1e-12);
    } else {
      CHECK(nsum == 0.0);
    }
  }
  CHECK_THROWS_AS(integrate({1.0}, {}, {1.0}, true), Error);
}

namespace {

// Analytic wall at z = 2 facing the origin.
FieldSample wall_query(const Vec3& x) {
  FieldSample s;
  s.sdf = 2.0 - x.z();
  s.color = Vec3(0.5, 0.25, 0.75);
  return s;
}

}  // namespace

TEST_CASE("render_pixel against an analytic wall") {
  RenderConfig cfg;
  cfg.n_stratified = 32;
  cfg.n_importance = 8;
  cfg.t_near = 0.0;
  cfg.t_far = 4.0;
  cfg.truncation = 0.1;
  Ray ray{Vec3::Zero(), Vec3::UnitZ()};
  Rng rng(17);

  // sphere-tracing oracle for the expected hit
  double t_star = 0.0;
  for (int i = 0; i < 100; ++i) {
    double s = wall_query(Vec3(0, 0, t_star)).sdf;
    if (std::abs(s) < 1e-9) break;
    t_star += s;
  }
  CHECK(t_star == Catch::Approx(2.0).margin(1e-6));

  RenderedPixel px = render_pixel(wall_query, 0.005, ray, cfg, 2.0, rng, true);
  double mean_spacing = (cfg.t_far - cfg.t_near) / cfg.n_stratified;
  CHECK(px.hit);
  CHECK(std::abs(px.depth - t_star) < 0.5 * mean_spacing);
}

TEST_CASE("render_pixel far-field sdf yields a no-hit pixel") {
  RenderConfig cfg;
  cfg.n_stratified = 16;
  cfg.n_importance = 0;
  cfg.t_near = 0.0;
  cfg.t_far = 4.0;
  cfg.truncation = 0.1;
  auto far_query = [&](const Vec3&) {
    FieldSample s;
    s.sdf = 10.0 * cfg.truncation;
    s.color = Vec3(1, 1, 1);
    return s;
  };
  Ray ray{Vec3::Zero(), Vec3::UnitZ()};
  Rng rng(19);
  RenderedPixel px = render_pixel(far_query, 0.01, ray, cfg, std::nullopt, rng, true);
  CHECK_FALSE(px.hit);
  CHECK(px.color.norm() == 0.0);
}

TEST_CASE("render_pixel is deterministic for a fixed seed") {
  RenderConfig cfg;
  cfg.n_stratified = 16;
  cfg.n_importance = 4;
  cfg.t_near = 0.0;
  cfg.t_far = 4.0;
  auto q = [](const Vec3& x) { return wall_query(x); };
  Ray ray{Vec3(0.1, -0.2, 0), Vec3(0.05, 0.02, 1.0).normalized()};
  Rng a = Rng::keyed(99, 1, 2, 3), b = Rng::keyed(99, 1, 2, 3);
  RenderedPixel pa = render_pixel(q, 0.05, ray, cfg, 2.0, a);
  RenderedPixel pb = render_pixel(q, 0.05, ray, cfg, 2.0, b);
  CHECK(pa.depth == pb.depth);
  CHECK((pa.color - pb.color).norm() == 0.0);
  REQUIRE(pa.weights.size() == pb.weights.size());
  for (size_t i = 0; i < pa.weights.size(); ++i)
    CHECK(pa.weights[i] == pb.weights[i]);
}

namespace {

FieldConfig small_field_config() {
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

FieldAtlas small_atlas(uint64_t seed) {
  AtlasConfig ac;
  ac.local_side = 4.0;
  ac.margin = 0.5;
  FieldAtlas atlas(ac, small_field_config(), seed);
  atlas.allocate_field(Vec3::Zero(), {});
  return atlas;
}

std::vector<RayObservation> make_rays(const Pose& pose,
                                      const CameraIntrinsics& intr, int n,
                                      Rng& rng) {
  std::vector<RayObservation> rays;
  for (int i = 0; i < n; ++i) {
    Vec2 px(rng.uniform(5, intr.width - 5), rng.uniform(5, intr.height - 5));
    RayObservation ro;
    ro.ray = pixel_ray(pose, intr, px);
    ro.dir_cam = backproject_dir(intr, px).normalized();
    ro.obs_color = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    ro.obs_t = rng.uniform(0.8, 1.6);
    ro.pose_slot = 0;
    rays.push_back(ro);
  }
  return rays;
}

struct BatchLoss {
  double value = 0.0;
  MatX d_color;
  VecX d_depth;
  VecX d_sdf;
};

// Simple composite loss exercising every upstream channel of the
// workspace backward: color + depth + per-sample sdf squared terms.
BatchLoss eval_batch_loss(const RenderWorkspace& ws) {
  BatchLoss out;
  int n = ws.ray_count(), m = ws.sample_count();
  out.d_color = MatX::Zero(3, n);
  out.d_depth = VecX::Zero(n);
  out.d_sdf = VecX::Zero(m);
  for (int r = 0; r < n; ++r) {
    Vec3 cdiff = ws.colors().col(r) - ws.ray(r).obs_color;
    out.value += cdiff.squaredNorm();
    out.d_color.col(r) = 2.0 * cdiff;
    double ddiff = ws.depths()[r] - ws.ray(r).obs_t;
    out.value += ddiff * ddiff;
    out.d_depth[r] = 2.0 * ddiff;
  }
  for (int i = 0; i < m; ++i) {
    out.value += ws.sample_sdf(i) * ws.sample_sdf(i);
    out.d_sdf[i] = 2.0 * ws.sample_sdf(i);
  }
  return out;
}

}  // namespace

TEST_CASE("workspace gradients match finite differences (parameters and beta)") {
  FieldAtlas atlas = small_atlas(31);
  CameraIntrinsics intr{40, 40, 20, 15, 40, 30};
  RenderConfig cfg;
  cfg.n_stratified = 6;
  cfg.n_importance = 2;
  cfg.t_near = 0.2;
  cfg.t_far = 1.8;
  cfg.truncation = 0.2;
  Pose pose;  // identity, inside the field
  Rng ray_rng(33);
  auto rays = make_rays(pose, intr, 3, ray_rng);
  PipelineOptions opt;
  opt.test_mode = true;
  opt.want_param_grad = true;
  opt.want_pose_grad = false;

  RenderWorkspace ws;
  Rng r0(1);
  ws.forward(atlas, rays, cfg, r0, opt);
  BatchLoss loss = eval_batch_loss(ws);
  VecX grad = VecX::Zero(atlas.active_field().param_count());
  GradSink sink;
  sink.field_grad = &grad;
  ws.backward(loss.d_color, loss.d_depth, loss.d_sdf, sink);

  auto loss_at = [&](const VecX& params) {
    FieldAtlas a2 = atlas;
    a2.active_field().set_params(params);
    RenderWorkspace w2;
    Rng r(1);
    w2.forward(a2, rays, cfg, r, opt);
    return eval_batch_loss(w2).value;
  };
  VecX fd = progslam::testing::finite_difference(
      loss_at, atlas.active_field().param_vector(), 1e-5);
  CHECK(gradient_rel_error(grad, fd) < 1e-6);
  // beta gradient present (weights depend on it)
  CHECK(grad[atlas.active_field().log_beta_offset()] != 0.0);
}

TEST_CASE("workspace pose gradients match finite differences") {
  FieldAtlas atlas = small_atlas(37);
  CameraIntrinsics intr{40, 40, 20, 15, 40, 30};
  RenderConfig cfg;
  cfg.n_stratified = 6;
  cfg.n_importance = 2;
  cfg.t_near = 0.2;
  cfg.t_far = 1.8;
  cfg.truncation = 0.2;
  Pose pose = se3_exp((Twist() << 0.05, -0.1, 0.02, 0.03, -0.02, 0.04).finished());
  PipelineOptions opt;
  opt.test_mode = true;
  opt.want_param_grad = false;
  opt.want_pose_grad = true;

  Rng ray_rng(39);
  // rays are regenerated per pose; cache the pixels and observations
  std::vector<Vec2> pixels;
  std::vector<Vec3> obs_colors;
  std::vector<double> obs_ts;
  for (int i = 0; i < 3; ++i) {
    pixels.emplace_back(ray_rng.uniform(5, 35), ray_rng.uniform(5, 25));
    obs_colors.emplace_back(ray_rng.uniform(), ray_rng.uniform(), ray_rng.uniform());
    obs_ts.push_back(ray_rng.uniform(0.8, 1.6));
  }
  auto rays_at = [&](const Pose& p) {
    std::vector<RayObservation> rays;
    for (size_t i = 0; i < pixels.size(); ++i) {
      RayObservation ro;
      ro.ray = pixel_ray(p, intr, pixels[i]);
      ro.dir_cam = backproject_dir(intr, pixels[i]).normalized();
      ro.obs_color = obs_colors[i];
      ro.obs_t = obs_ts[i];
      ro.pose_slot = 0;
      rays.push_back(ro);
    }
    return rays;
  };

  RenderWorkspace ws;
  Rng r0(1);
  ws.forward(atlas, rays_at(pose), cfg, r0, opt);
  BatchLoss loss = eval_batch_loss(ws);
  std::vector<Vec6> pose_grads(1, Vec6::Zero());
  GradSink sink;
  sink.pose_grads = &pose_grads;
  ws.backward(loss.d_color, loss.d_depth, loss.d_sdf, sink);

  Vec6 fd;
  double h = 1e-6;
  for (int k = 0; k < 6; ++k) {
    Twist dp = Twist::Zero(), dm = Twist::Zero();
    dp[k] = h;
    dm[k] = -h;
    RenderWorkspace wp, wm;
    Rng rp(1), rm(1);
    wp.forward(atlas, rays_at(se3_exp(dp) * pose), cfg, rp, opt);
    wm.forward(atlas, rays_at(se3_exp(dm) * pose), cfg, rm, opt);
    fd[k] = (eval_batch_loss(wp).value - eval_batch_loss(wm).value) / (2 * h);
  }
  CHECK(gradient_rel_error(pose_grads[0], fd) < 1e-5);
}

TEST_CASE("workspace matches scalar render_pixel on a single ray") {
  FieldAtlas atlas = small_atlas(41);
  RenderConfig cfg;
  cfg.n_stratified = 8;
  cfg.n_importance = 0;
  cfg.t_near = 0.2;
  cfg.t_far = 1.8;
  cfg.truncation = 0.2;
  RayObservation ro;
  ro.ray = Ray{Vec3(0.1, 0.1, -0.5), Vec3(0.1, -0.05, 1.0).normalized()};
  PipelineOptions opt;
  opt.test_mode = true;
  RenderWorkspace ws;
  Rng r1(5);
  ws.forward(atlas, {ro}, cfg, r1, opt);
  Rng r2(5);
  RenderedPixel px =
      render_pixel(atlas, ro.ray, cfg, std::nullopt, r2, true);
  CHECK((ws.colors().col(0) - px.color).norm() < 1e-14);
  CHECK(std::abs(ws.depths()[0] - px.depth) < 1e-14);
}
