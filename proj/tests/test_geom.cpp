#include <progslam/geom/camera.hpp>
#include <progslam/geom/pose.hpp>
#include <progslam/geom/trajectory.hpp>
#include <progslam/core/rng.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

using namespace progslam;

namespace {

Pose random_pose(Rng& rng, double rot_scale = 1.0, double trans_scale = 2.0) {
  Twist xi;
  for (int i = 0; i < 3; ++i) xi[i] = rng.uniform(-trans_scale, trans_scale);
  for (int i = 3; i < 6; ++i) xi[i] = rng.uniform(-rot_scale, rot_scale);
  return se3_exp(xi);
}

}  // namespace

TEST_CASE("project maps the optical axis to the principal point") {
  CameraIntrinsics intr{100, 100, 50, 50, 100, 100};
  Vec2 px = project(intr, {0, 0, 1});
  CHECK(px.x() == Catch::Approx(50.0));
  CHECK(px.y() == Catch::Approx(50.0));
  px = project(intr, {0.5, 0, 1});
  CHECK(px.x() == Catch::Approx(100.0));
  CHECK(px.y() == Catch::Approx(50.0));
}

TEST_CASE("project matches direct pinhole evaluation") {
  CameraIntrinsics intr{200, 100, 40, 30, 640, 480};
  Vec3 p(0.1, 0.2, 2.0);
  // oracle: direct evaluation of the pinhole formula
  Vec2 expected(intr.fx * p.x() / p.z() + intr.cx,
                intr.fy * p.y() / p.z() + intr.cy);
  CHECK(expected.x() == Catch::Approx(50.0));
  CHECK(expected.y() == Catch::Approx(40.0));
  Vec2 px = project(intr, p);
  CHECK((px - expected).norm() < 1e-12);
}

TEST_CASE("project rejects non-positive depth") {
  CameraIntrinsics intr{100, 100, 50, 50, 100, 100};
  CHECK_THROWS_AS(project(intr, {0, 0, 0}), Error);
  CHECK_THROWS_AS(project(intr, {0, 0, -1}), Error);
  try {
    project(intr, {0, 0, 1e-12});
    FAIL("expected NonPositiveDepth");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonPositiveDepth);
  }
}

TEST_CASE("backproject inverts project") {
  CameraIntrinsics intr{100, 100, 50, 50, 100, 100};
  Vec3 p = backproject(intr, {50, 50}, 1.0);
  CHECK((p - Vec3(0, 0, 1)).norm() < 1e-12);
  CHECK((backproject(intr, {100, 50}, 2.0) - Vec3(1, 0, 2)).norm() < 1e-12);

  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    Vec3 q(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.1, 5));
    Vec2 px = project(intr, q);
    Vec3 back = backproject(intr, px, q.z());
    CHECK((back - q).norm() < 1e-9 * std::max(1.0, q.norm()));
  }
  CHECK_THROWS_AS(backproject(intr, {50, 50}, 0.0), Error);
}

TEST_CASE("pixel_ray origin and direction") {
  CameraIntrinsics intr{100, 100, 50, 50, 100, 100};
  Ray r = pixel_ray(Pose::identity(), intr, {50, 50});
  CHECK(r.origin.norm() < 1e-15);
  CHECK((r.direction - Vec3(0, 0, 1)).norm() < 1e-12);

  Pose p = Pose::translation({1, 2, 3});
  r = pixel_ray(p, intr, {50, 50});
  CHECK((r.origin - Vec3(1, 2, 3)).norm() < 1e-15);
  CHECK((r.direction - Vec3(0, 0, 1)).norm() < 1e-12);

  // 90 degree yaw about the vertical (y) axis
  Pose yaw;
  yaw.R = Eigen::AngleAxisd(M_PI / 2, Vec3::UnitY()).toRotationMatrix();
  r = pixel_ray(yaw, intr, {50, 50});
  CHECK((r.direction - yaw.R * Vec3(0, 0, 1)).norm() < 1e-12);
  CHECK((r.direction - Vec3(1, 0, 0)).norm() < 1e-9);

  CHECK_THROWS_AS(pixel_ray(Pose::identity(), intr, {150, 50}), Error);
}

TEST_CASE("pixel_ray directions have unit norm") {
  CameraIntrinsics intr{80, 120, 40, 30, 80, 60};
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    Vec2 px(rng.uniform(0, 80), rng.uniform(0, 60));
    Ray r = pixel_ray(random_pose(rng), intr, px);
    CHECK(std::abs(r.direction.norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("se3 exp of zero is identity and pure translation passes through") {
  Pose p = se3_exp(Twist::Zero());
  CHECK((p.R - Mat3::Identity()).norm() < 1e-15);
  CHECK(p.t.norm() < 1e-15);

  Twist xi = Twist::Zero();
  xi[0] = 1.0;
  p = se3_exp(xi);
  CHECK((p.R - Mat3::Identity()).norm() < 1e-15);
  CHECK((p.t - Vec3(1, 0, 0)).norm() < 1e-15);
}

TEST_CASE("se3 log/exp round-trip on random twists") {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    Twist xi;
    for (int k = 0; k < 3; ++k) xi[k] = rng.uniform(-3, 3);
    Vec3 axis(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    axis.normalize();
    xi.tail<3>() = axis * rng.uniform(0, 3.0);  // below pi
    Pose p = se3_exp(xi);
    CHECK(p.is_valid(1e-9));
    Twist back = se3_log(p);
    CHECK((back - xi).norm() < 1e-8);
  }
}

TEST_CASE("relative_pose identities") {
  Rng rng(5);
  Pose p = random_pose(rng);
  Pose rel = relative_pose(p, p);
  CHECK((rel.R - Mat3::Identity()).norm() < 1e-12);
  CHECK(rel.t.norm() < 1e-12);

  Pose rel2 = relative_pose(Pose::identity(), Pose::translation({1, 0, 0}));
  CHECK((rel2.t - Vec3(-1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("relative_pose composition on points") {
  Rng rng(13);
  for (int i = 0; i < 20; ++i) {
    Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    Pose ab = relative_pose(a, b), bc = relative_pose(b, c),
         ac = relative_pose(a, c);
    Vec3 x(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    Vec3 via = bc.apply(ab.apply(x));
    Vec3 direct = ac.apply(x);
    CHECK((via - direct).norm() < 1e-9);
    // rel(pose, other) composed with pose equals other^-1 * pose
    Vec3 lhs = relative_pose(a, b).apply(x);
    Vec3 rhs = (b.inverse() * a).apply(x);
    CHECK((lhs - rhs).norm() < 1e-9);
  }
}

TEST_CASE("TUM trajectory round-trip") {
  Rng rng(17);
  Trajectory traj;
  for (int i = 0; i < 10; ++i)
    traj.push_back({0.1 * i, random_pose(rng)});
  std::string path = "test_traj_tmp.txt";
  write_trajectory_tum(path, traj);
  Trajectory back = read_trajectory_tum(path);
  REQUIRE(back.size() == traj.size());
  for (size_t i = 0; i < traj.size(); ++i) {
    CHECK(std::abs(back[i].timestamp - traj[i].timestamp) < 1e-12);
    CHECK((back[i].pose.R - traj[i].pose.R).norm() < 1e-12);
    CHECK((back[i].pose.t - traj[i].pose.t).norm() < 1e-12);
  }
  std::remove(path.c_str());
}
