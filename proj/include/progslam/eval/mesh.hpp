#pragma once

#include "progslam/core/rng.hpp"
#include "progslam/core/types.hpp"

#include <array>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

namespace progslam {

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return triangles.empty(); }

  double area() const {
    double a = 0.0;
    for (const auto& t : triangles) {
      a += 0.5 * (vertices[t[1]] - vertices[t[0]])
                     .cross(vertices[t[2]] - vertices[t[0]])
                     .norm();
    }
    return a;
  }

  Aabb bounds() const {
    Aabb b;
    for (const auto& v : vertices) b.expand(v);
    return b;
  }
};

// Binary little-endian PLY with float vertices and int32 face indices.
inline void write_ply(const std::string& path, const Mesh& mesh) {
  std::ofstream out(path, std::ios::binary);
  PROGSLAM_CHECK(out.good(), ErrorCode::IoError, "cannot open " + path);
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  for (const auto& v : mesh.vertices) {
    float f[3] = {static_cast<float>(v.x()), static_cast<float>(v.y()),
                  static_cast<float>(v.z())};
    out.write(reinterpret_cast<const char*>(f), sizeof(f));
  }
  for (const auto& t : mesh.triangles) {
    uint8_t n = 3;
    int32_t idx[3] = {t[0], t[1], t[2]};
    out.write(reinterpret_cast<const char*>(&n), 1);
    out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
  }
}

inline Mesh read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  PROGSLAM_CHECK(in.good(), ErrorCode::IoError, "cannot open " + path);
  std::string line;
  size_t n_vert = 0, n_face = 0;
  bool binary_le = false;
  while (std::getline(in, line)) {
    if (line.rfind("format", 0) == 0)
      binary_le = line.find("binary_little_endian") != std::string::npos;
    else if (line.rfind("element vertex", 0) == 0)
      n_vert = std::stoul(line.substr(15));
    else if (line.rfind("element face", 0) == 0)
      n_face = std::stoul(line.substr(13));
    else if (line == "end_header")
      break;
  }
  PROGSLAM_CHECK(binary_le, ErrorCode::IoError,
                 "expected binary little-endian PLY: " + path);
  Mesh mesh;
  mesh.vertices.resize(n_vert);
  for (auto& v : mesh.vertices) {
    float f[3];
    in.read(reinterpret_cast<char*>(f), sizeof(f));
    v = Vec3(f[0], f[1], f[2]);
  }
  mesh.triangles.resize(n_face);
  for (auto& t : mesh.triangles) {
    uint8_t n;
    in.read(reinterpret_cast<char*>(&n), 1);
    PROGSLAM_CHECK(n == 3, ErrorCode::IoError, "non-triangle face in " + path);
    int32_t idx[3];
    in.read(reinterpret_cast<char*>(idx), sizeof(idx));
    t = {idx[0], idx[1], idx[2]};
  }
  PROGSLAM_CHECK(in.good(), ErrorCode::IoError, "truncated PLY: " + path);
  return mesh;
}

// Exact closest point on a triangle (Ericson's region test).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a,
                                      const Vec3& b, const Vec3& c) {
  Vec3 ab = b - a, ac = c - a, ap = p - a;
  double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  Vec3 bp = p - b;
  double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  Vec3 cp = p - c;
  double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return b + w * (c - b);
  }
  double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

// Bounding-volume hierarchy for point-to-mesh distance queries. The
// exactness of the result is guarded by the brute-force comparison in the
// test suite.
class MeshDistance {
 public:
  explicit MeshDistance(const Mesh& mesh) : mesh_(&mesh) {
    PROGSLAM_CHECK(!mesh.empty(), ErrorCode::EmptyMesh,
                   "distance query on empty mesh");
    tri_order_.resize(mesh.triangles.size());
    std::iota(tri_order_.begin(), tri_order_.end(), 0);
    nodes_.reserve(2 * mesh.triangles.size());
    build(0, static_cast<int>(tri_order_.size()));
  }

  double distance(const Vec3& p) const {
    double best = std::numeric_limits<double>::infinity();
    nearest(0, p, best);
    return std::sqrt(best);
  }

 private:
  struct Node {
    Aabb box;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf triangle range in tri_order_
  };

  Aabb tri_box(int t) const {
    Aabb b;
    for (int k = 0; k < 3; ++k) b.expand(mesh_->vertices[mesh_->triangles[t][k]]);
    return b;
  }

  int build(int begin, int end) {
    Node node;
    node.begin = begin;
    node.end = end;
    for (int i = begin; i < end; ++i) node.box.expand(tri_box(tri_order_[i]));
    int index = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin > 8) {
      Vec3 ext = node.box.extent();
      int axis = 0;
      ext.maxCoeff(&axis);
      int mid = (begin + end) / 2;
      std::nth_element(tri_order_.begin() + begin, tri_order_.begin() + mid,
                       tri_order_.begin() + end, [&](int a, int b) {
                         return tri_box(a).center()[axis] <
                                tri_box(b).center()[axis];
                       });
      int l = build(begin, mid);
      int r = build(mid, end);
      nodes_[index].left = l;
      nodes_[index].right = r;
    }
    return index;
  }

  static double box_dist2(const Aabb& b, const Vec3& p) {
    Vec3 d = (b.min - p).cwiseMax(0.0).cwiseMax(p - b.max);
    return d.squaredNorm();
  }

  void nearest(int node_idx, const Vec3& p, double& best) const {
    const Node& node = nodes_[node_idx];
    if (box_dist2(node.box, p) >= best) return;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const auto& t = mesh_->triangles[tri_order_[i]];
        Vec3 q = closest_point_on_triangle(p, mesh_->vertices[t[0]],
                                           mesh_->vertices[t[1]],
                                           mesh_->vertices[t[2]]);
        best = std::min(best, (p - q).squaredNorm());
      }
      return;
    }
    double dl = box_dist2(nodes_[node.left].box, p);
    double dr = box_dist2(nodes_[node.right].box, p);
    if (dl < dr) {
      nearest(node.left, p, best);
      nearest(node.right, p, best);
    } else {
      nearest(node.right, p, best);
      nearest(node.left, p, best);
    }
  }

  const Mesh* mesh_;
  std::vector<int> tri_order_;
  std::vector<Node> nodes_;
};

// Uniform-area surface samples.
inline std::vector<Vec3> sample_mesh(const Mesh& mesh, int n, Rng& rng) {
  PROGSLAM_CHECK(!mesh.empty(), ErrorCode::EmptyMesh, "sampling empty mesh");
  std::vector<double> cum(mesh.triangles.size());
  double acc = 0.0;
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tr = mesh.triangles[t];
    acc += 0.5 * (mesh.vertices[tr[1]] - mesh.vertices[tr[0]])
                     .cross(mesh.vertices[tr[2]] - mesh.vertices[tr[0]])
                     .norm();
    cum[t] = acc;
  }
  std::vector<Vec3> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    double r = rng.uniform() * acc;
    size_t t = std::lower_bound(cum.begin(), cum.end(), r) - cum.begin();
    if (t >= mesh.triangles.size()) t = mesh.triangles.size() - 1;
    const auto& tr = mesh.triangles[t];
    double s = std::sqrt(rng.uniform());
    double u = 1.0 - s, v = rng.uniform() * s;
    out.push_back(u * mesh.vertices[tr[0]] + v * mesh.vertices[tr[1]] +
                  (1.0 - u - v) * mesh.vertices[tr[2]]);
  }
  return out;
}

struct MeshMetrics {
  double accuracy_cm = 0.0;
  double completion_cm = 0.0;
  double completion_ratio_pct = 0.0;
};

// Accuracy: recon samples -> gt surface. Completion and ratio: gt samples
// -> recon surface; the gt sample set may be pre-filtered (visibility).
inline MeshMetrics mesh_metrics_from_samples(const Mesh& recon,
                                             const std::vector<Vec3>& recon_samples,
                                             const Mesh& gt,
                                             const std::vector<Vec3>& gt_samples,
                                             double threshold_m) {
  PROGSLAM_CHECK(!recon.empty() && !gt.empty(), ErrorCode::EmptyMesh,
                 "mesh metrics need non-empty meshes");
  PROGSLAM_CHECK(!recon_samples.empty() && !gt_samples.empty(),
                 ErrorCode::EmptyBatch, "mesh metrics need samples");
  MeshDistance gt_dist(gt), recon_dist(recon);
  MeshMetrics m;
  for (const auto& p : recon_samples) m.accuracy_cm += gt_dist.distance(p);
  m.accuracy_cm = 100.0 * m.accuracy_cm / recon_samples.size();
  int within = 0;
  for (const auto& p : gt_samples) {
    double d = recon_dist.distance(p);
    m.completion_cm += d;
    if (d <= threshold_m) ++within;
  }
  m.completion_cm = 100.0 * m.completion_cm / gt_samples.size();
  m.completion_ratio_pct = 100.0 * within / gt_samples.size();
  return m;
}

inline MeshMetrics mesh_metrics(const Mesh& recon, const Mesh& gt,
                                double threshold_m, int n_samples, Rng& rng) {
  std::vector<Vec3> rs = sample_mesh(recon, n_samples, rng);
  std::vector<Vec3> gs = sample_mesh(gt, n_samples, rng);
  return mesh_metrics_from_samples(recon, rs, gt, gs, threshold_m);
}

}  // namespace progslam
