#pragma once

#include "progslam/core/types.hpp"
#include "progslam/eval/mesh.hpp"

#include <array>
#include <functional>
#include <unordered_map>
#include <vector>

namespace progslam {

namespace mc_detail {

// Cube corners: bit 0 = x, bit 1 = y, bit 2 = z.
// Edges 0..11: x-edges, then y-edges, then z-edges.
inline constexpr int kEdgeCorners[12][2] = {
    {0, 1}, {2, 3}, {4, 5}, {6, 7},  // x axis
    {0, 2}, {1, 3}, {4, 6}, {5, 7},  // y axis
    {0, 4}, {1, 5}, {2, 6}, {3, 7},  // z axis
};

// Faces as cyclic corner quads.
inline constexpr int kFaceQuads[6][4] = {
    {0, 2, 6, 4},  // x = 0
    {1, 3, 7, 5},  // x = 1
    {0, 1, 5, 4},  // y = 0
    {2, 3, 7, 6},  // y = 1
    {0, 1, 3, 2},  // z = 0
    {4, 5, 7, 6},  // z = 1
};

inline int edge_between(int a, int b) {
  for (int e = 0; e < 12; ++e) {
    if ((kEdgeCorners[e][0] == a && kEdgeCorners[e][1] == b) ||
        (kEdgeCorners[e][0] == b && kEdgeCorners[e][1] == a))
      return e;
  }
  return -1;
}

// Builds the per-configuration triangle table (triples of edge ids) by
// tracing the isosurface's closed loops over the cube faces. Ambiguous
// faces (four cut edges) are resolved by separating the inside corners,
// the original marching-cubes convention.
inline std::array<std::vector<std::array<int, 3>>, 256> build_triangle_table() {
  std::array<std::vector<std::array<int, 3>>, 256> table;
  for (int config = 0; config < 256; ++config) {
    auto inside = [&](int corner) { return (config >> corner) & 1; };
    // per-edge segment endpoints (each cut edge touches exactly two faces)
    std::array<std::array<int, 2>, 12> next{};
    std::array<int, 12> degree{};
    degree.fill(0);
    auto add_segment = [&](int ea, int eb) {
      next[ea][degree[ea]++] = eb;
      next[eb][degree[eb]++] = ea;
    };
    for (const auto& quad : kFaceQuads) {
      int cuts[4], n_cuts = 0;
      for (int k = 0; k < 4; ++k) {
        int a = quad[k], b = quad[(k + 1) % 4];
        if (inside(a) != inside(b)) cuts[n_cuts++] = k;
      }
      if (n_cuts == 2) {
        add_segment(edge_between(quad[cuts[0]], quad[(cuts[0] + 1) % 4]),
                    edge_between(quad[cuts[1]], quad[(cuts[1] + 1) % 4]));
      } else if (n_cuts == 4) {
        // corners alternate; pair cut edges around each inside corner
        auto eid = [&](int k) {
          return edge_between(quad[k], quad[(k + 1) % 4]);
        };
        if (inside(quad[1])) {
          add_segment(eid(0), eid(1));
          add_segment(eid(2), eid(3));
        } else {
          add_segment(eid(1), eid(2));
          add_segment(eid(3), eid(0));
        }
      }
    }
    // trace closed loops and fan-triangulate them
    std::array<bool, 12> used{};
    used.fill(false);
    for (int start = 0; start < 12; ++start) {
      if (degree[start] == 0 || used[start]) continue;
      std::vector<int> loop;
      int prev = -1, cur = start;
      while (true) {
        loop.push_back(cur);
        used[cur] = true;
        int nxt = next[cur][0] == prev ? next[cur][1] : next[cur][0];
        prev = cur;
        cur = nxt;
        if (cur == start) break;
      }
      for (size_t k = 1; k + 1 < loop.size(); ++k)
        table[config].push_back({loop[0], loop[k], loop[k + 1]});
    }
  }
  return table;
}

inline const std::array<std::vector<std::array<int, 3>>, 256>&
triangle_table() {
  static const auto table = build_triangle_table();
  return table;
}

}  // namespace mc_detail

// Standard 256-case marching cubes at iso-level zero with linear edge
// interpolation. Triangles are oriented with normals pointing toward
// positive SDF (outward for free-space-positive fields).
inline Mesh marching_cubes(const std::function<double(const Vec3&)>& sdf,
                           const Aabb& bounds, const Eigen::Vector3i& resolution) {
  PROGSLAM_CHECK((resolution.array() >= 2).all(), ErrorCode::ValidationError,
                 "marching cubes needs resolution >= 2 per axis");
  const int nx = resolution.x(), ny = resolution.y(), nz = resolution.z();
  const Vec3 cell = bounds.extent().cwiseQuotient(
      Vec3(nx - 1.0, ny - 1.0, nz - 1.0));
  // sample the grid
  std::vector<double> values(static_cast<size_t>(nx) * ny * nz);
  auto vidx = [&](int i, int j, int k) {
    return (static_cast<size_t>(k) * ny + j) * nx + i;
  };
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        values[vidx(i, j, k)] =
            sdf(bounds.min + Vec3(i * cell.x(), j * cell.y(), k * cell.z()));

  Mesh mesh;
  std::unordered_map<int64_t, int> edge_vertex;
  const auto& table = mc_detail::triangle_table();

  auto corner_offset = [](int c) {
    return Eigen::Vector3i(c & 1, (c >> 1) & 1, (c >> 2) & 1);
  };
  auto edge_key = [&](const Eigen::Vector3i& node, int axis) {
    return ((static_cast<int64_t>(node.z()) * ny + node.y()) * nx + node.x()) *
               3 +
           axis;
  };

  for (int k = 0; k + 1 < nz; ++k) {
    for (int j = 0; j + 1 < ny; ++j) {
      for (int i = 0; i + 1 < nx; ++i) {
        double v[8];
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          Eigen::Vector3i o = corner_offset(c);
          v[c] = values[vidx(i + o.x(), j + o.y(), k + o.z())];
          if (v[c] < 0.0) config |= (1 << c);
        }
        if (config == 0 || config == 255) continue;
        const auto& tris = table[config];
        for (const auto& tri : tris) {
          int idx[3];
          for (int t = 0; t < 3; ++t) {
            int e = tri[t];
            int ca = mc_detail::kEdgeCorners[e][0];
            int cb = mc_detail::kEdgeCorners[e][1];
            int axis = e < 4 ? 0 : (e < 8 ? 1 : 2);
            Eigen::Vector3i node =
                Eigen::Vector3i(i, j, k) + corner_offset(ca);
            int64_t key = edge_key(node, axis);
            auto it = edge_vertex.find(key);
            if (it == edge_vertex.end()) {
              double va = v[ca], vb = v[cb];
              double tt = va / (va - vb);
              Vec3 pa = bounds.min + Vec3((i + corner_offset(ca).x()) * cell.x(),
                                          (j + corner_offset(ca).y()) * cell.y(),
                                          (k + corner_offset(ca).z()) * cell.z());
              Vec3 pb = bounds.min + Vec3((i + corner_offset(cb).x()) * cell.x(),
                                          (j + corner_offset(cb).y()) * cell.y(),
                                          (k + corner_offset(cb).z()) * cell.z());
              mesh.vertices.push_back(pa + tt * (pb - pa));
              it = edge_vertex.emplace(key, static_cast<int>(mesh.vertices.size()) - 1)
                       .first;
            }
            idx[t] = it->second;
          }
          if (idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2]) continue;
          Vec3 a = mesh.vertices[idx[0]], b = mesh.vertices[idx[1]],
               c = mesh.vertices[idx[2]];
          Vec3 normal = (b - a).cross(c - a);
          if (0.5 * normal.norm() <= 1e-12) continue;  // degenerate
          // orient along the trilinear gradient at the centroid
          Vec3 centroid = (a + b + c) / 3.0;
          Vec3 local = (centroid - (bounds.min + Vec3(i * cell.x(), j * cell.y(),
                                                      k * cell.z())))
                           .cwiseQuotient(cell);
          double fx = local.x(), fy = local.y(), fz = local.z();
          Vec3 grad;
          grad.x() = (v[1] - v[0]) * (1 - fy) * (1 - fz) +
                     (v[3] - v[2]) * fy * (1 - fz) +
                     (v[5] - v[4]) * (1 - fy) * fz + (v[7] - v[6]) * fy * fz;
          grad.y() = (v[2] - v[0]) * (1 - fx) * (1 - fz) +
                     (v[3] - v[1]) * fx * (1 - fz) +
                     (v[6] - v[4]) * (1 - fx) * fz + (v[7] - v[5]) * fx * fz;
          grad.z() = (v[4] - v[0]) * (1 - fx) * (1 - fy) +
                     (v[5] - v[1]) * fx * (1 - fy) +
                     (v[6] - v[2]) * (1 - fx) * fy + (v[7] - v[3]) * fx * fy;
          if (normal.dot(grad) < 0.0) std::swap(idx[1], idx[2]);
          mesh.triangles.push_back({idx[0], idx[1], idx[2]});
        }
      }
    }
  }
  return mesh;
}

}  // namespace progslam
