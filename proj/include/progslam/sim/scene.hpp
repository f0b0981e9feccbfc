#pragma once

#include "progslam/core/types.hpp"
#include "progslam/geom/pose.hpp"

#include <optional>
#include <vector>

namespace progslam {

// Surface albedo: constant color, or a 3D checker between two colors.
struct Albedo {
  Vec3 color_a = Vec3(0.8, 0.8, 0.8);
  Vec3 color_b = Vec3(0.2, 0.2, 0.2);
  double checker_period = 0.0;  // 0 = constant color_a

  Vec3 value(const Vec3& x) const {
    if (checker_period <= 0.0) return color_a;
    long s = static_cast<long>(std::floor(x.x() / checker_period)) +
             static_cast<long>(std::floor(x.y() / checker_period)) +
             static_cast<long>(std::floor(x.z() / checker_period));
    return (s & 1) ? color_b : color_a;
  }
};

struct Primitive {
  enum class Kind { Sphere, Box, Room };
  Kind kind = Kind::Sphere;
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones();  // radius in x for spheres
  Albedo albedo;

  static Primitive sphere(const Vec3& c, double radius, Albedo a = {}) {
    Primitive p;
    p.kind = Kind::Sphere;
    p.center = c;
    p.half_extents = Vec3::Constant(radius);
    p.albedo = a;
    return p;
  }
  static Primitive box(const Vec3& c, const Vec3& half, Albedo a = {}) {
    Primitive p;
    p.kind = Kind::Box;
    p.center = c;
    p.half_extents = half;
    p.albedo = a;
    return p;
  }
  // Inward-facing box shell: the interior is free space, everything
  // beyond the walls is solid.
  static Primitive room(const Vec3& c, const Vec3& half, Albedo a = {}) {
    Primitive p;
    p.kind = Kind::Room;
    p.center = c;
    p.half_extents = half;
    p.albedo = a;
    return p;
  }

  double box_sdf(const Vec3& x) const {
    Vec3 q = (x - center).cwiseAbs() - half_extents;
    double outside = q.cwiseMax(0.0).norm();
    double inside = std::min(q.maxCoeff(), 0.0);
    return outside + inside;
  }

  // Signed distance, positive in free space.
  double sdf(const Vec3& x) const {
    switch (kind) {
      case Kind::Sphere: return (x - center).norm() - half_extents.x();
      case Kind::Box: return box_sdf(x);
      case Kind::Room: return -box_sdf(x);
    }
    return 0.0;
  }
};

// Union scene: solid primitives union through min; room interiors union
// through max among themselves (their free spaces add up), and the two
// groups combine through min. The result is a valid lower bound of the
// true distance, exact away from overlaps.
struct PrimitiveScene {
  std::vector<Primitive> primitives;

  void validate() const {
    PROGSLAM_CHECK(!primitives.empty(), ErrorCode::ValidationError,
                   "scene needs at least one primitive");
    for (const auto& p : primitives)
      PROGSLAM_CHECK((p.half_extents.array() > 0).all(),
                     ErrorCode::ValidationError,
                     "primitive dimensions must be positive");
  }

  double sdf(const Vec3& x) const {
    double rooms = -std::numeric_limits<double>::infinity();
    double solids = std::numeric_limits<double>::infinity();
    bool has_room = false;
    for (const auto& p : primitives) {
      if (p.kind == Primitive::Kind::Room) {
        rooms = std::max(rooms, p.sdf(x));
        has_room = true;
      } else {
        solids = std::min(solids, p.sdf(x));
      }
    }
    if (!has_room) return solids;
    return std::min(rooms, solids);
  }

  // Albedo of the primitive whose surface is closest.
  Vec3 albedo(const Vec3& x) const {
    double best = std::numeric_limits<double>::infinity();
    const Primitive* hit = &primitives.front();
    for (const auto& p : primitives) {
      double d = std::abs(p.sdf(x));
      if (d < best) {
        best = d;
        hit = &p;
      }
    }
    return hit->albedo.value(x);
  }

  Vec3 normal(const Vec3& x, double h = 1e-5) const {
    Vec3 n(sdf(x + Vec3(h, 0, 0)) - sdf(x - Vec3(h, 0, 0)),
           sdf(x + Vec3(0, h, 0)) - sdf(x - Vec3(0, h, 0)),
           sdf(x + Vec3(0, 0, h)) - sdf(x - Vec3(0, 0, h)));
    double len = n.norm();
    return len > 1e-15 ? Vec3(n / len) : Vec3::UnitZ();
  }

  // Extent of the free space (for mesh extraction bounds).
  Aabb bounds() const {
    Aabb b;
    for (const auto& p : primitives) {
      Aabb pb;
      pb.min = p.center - p.half_extents;
      pb.max = p.center + p.half_extents;
      b.expand(pb);
    }
    return b;
  }
};

// Sphere tracing: steps by the current distance value until the surface
// is closer than 1e-6, up to 512 iterations.
inline std::optional<double> trace_depth(const PrimitiveScene& scene,
                                         const Ray& ray, double max_t) {
  PROGSLAM_CHECK(max_t > 0, ErrorCode::ValidationError, "max_t must be > 0");
  double t = 0.0;
  for (int iter = 0; iter < 512; ++iter) {
    double d = scene.sdf(ray.origin + t * ray.direction);
    if (d < 1e-6) return t;
    t += d;
    if (t > max_t) return std::nullopt;
  }
  return std::nullopt;
}

// --- scene presets -----------------------------------------------------

// Single room, 4 x 3 x 2.5 m, checkered walls, two spheres.
inline PrimitiveScene make_room_scene() {
  PrimitiveScene s;
  Albedo walls;
  walls.color_a = Vec3(0.85, 0.8, 0.7);
  walls.color_b = Vec3(0.25, 0.3, 0.4);
  walls.checker_period = 0.5;
  s.primitives.push_back(
      Primitive::room(Vec3(0, 0, 1.25), Vec3(2.0, 1.5, 1.25), walls));
  Albedo red;
  red.color_a = Vec3(0.8, 0.2, 0.15);
  red.color_b = Vec3(0.9, 0.6, 0.2);
  red.checker_period = 0.2;
  s.primitives.push_back(Primitive::sphere(Vec3(1.1, 0.7, 0.45), 0.45, red));
  Albedo green;
  green.color_a = Vec3(0.2, 0.7, 0.3);
  green.color_b = Vec3(0.1, 0.3, 0.6);
  green.checker_period = 0.15;
  s.primitives.push_back(Primitive::sphere(Vec3(-1.2, -0.6, 0.35), 0.35, green));
  return s;
}

// Two rooms `separation` meters apart joined by a corridor along x.
inline PrimitiveScene make_two_room_scene(double separation = 8.0) {
  PrimitiveScene s;
  Albedo walls_a;
  walls_a.color_a = Vec3(0.85, 0.8, 0.7);
  walls_a.color_b = Vec3(0.3, 0.3, 0.45);
  walls_a.checker_period = 0.5;
  Albedo walls_b;
  walls_b.color_a = Vec3(0.7, 0.8, 0.85);
  walls_b.color_b = Vec3(0.45, 0.3, 0.3);
  walls_b.checker_period = 0.5;
  Albedo corridor;
  corridor.color_a = Vec3(0.75, 0.75, 0.75);
  corridor.color_b = Vec3(0.35, 0.4, 0.35);
  corridor.checker_period = 0.5;
  s.primitives.push_back(
      Primitive::room(Vec3(0, 0, 1.25), Vec3(2.0, 1.5, 1.25), walls_a));
  s.primitives.push_back(Primitive::room(Vec3(separation, 0, 1.25),
                                         Vec3(2.0, 1.5, 1.25), walls_b));
  s.primitives.push_back(Primitive::room(Vec3(separation / 2, 0, 1.25),
                                         Vec3(separation / 2, 0.7, 1.0),
                                         corridor));
  Albedo sp;
  sp.color_a = Vec3(0.8, 0.3, 0.2);
  sp.checker_period = 0.0;
  s.primitives.push_back(Primitive::sphere(Vec3(1.0, 0.6, 0.4), 0.4, sp));
  Albedo sp2;
  sp2.color_a = Vec3(0.2, 0.4, 0.8);
  sp2.checker_period = 0.0;
  s.primitives.push_back(
      Primitive::sphere(Vec3(separation - 1.0, -0.6, 0.4), 0.4, sp2));
  return s;
}

// Long single corridor along x (for the growth experiments).
inline PrimitiveScene make_corridor_scene(double length) {
  PrimitiveScene s;
  Albedo walls;
  walls.color_a = Vec3(0.8, 0.78, 0.7);
  walls.color_b = Vec3(0.3, 0.35, 0.4);
  walls.checker_period = 0.5;
  s.primitives.push_back(Primitive::room(Vec3(length / 2, 0, 1.25),
                                         Vec3(length / 2 + 1.5, 1.2, 1.25),
                                         walls));
  return s;
}

}  // namespace progslam
