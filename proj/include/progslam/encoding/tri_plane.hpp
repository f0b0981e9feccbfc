#pragma once

#include "progslam/core/types.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace progslam {

enum class AxisPair : int32_t { XY = 0, XZ = 1, YZ = 2 };

inline std::pair<int, int> axis_pair_indices(AxisPair p) {
  switch (p) {
    case AxisPair::XY: return {0, 1};
    case AxisPair::XZ: return {0, 2};
    default: return {1, 2};
  }
}

// Bilinear footprint of a query point on one plane: the four surrounding
// cell-center columns, their weights, and the scale factors that turn
// weight derivatives into world-coordinate derivatives (zero where the
// lookup is clamped at the border).
struct BilinearStencil {
  int c00 = 0, c10 = 0, c01 = 0, c11 = 0;
  double fu = 0, fv = 0;
  double dscale_u = 0, dscale_v = 0;
  int axis_u = 0, axis_v = 1;

  double w00() const { return (1 - fu) * (1 - fv); }
  double w10() const { return fu * (1 - fv); }
  double w01() const { return (1 - fu) * fv; }
  double w11() const { return fu * fv; }
};

// One axis-aligned 2D feature grid. Values live at cell centers; queries
// bilinearly interpolate the four nearest centers, clamping within the
// outer half-cell ring. Storage is cell-major (u outer, v inner) with
// channels fastest, matching the checkpoint layout.
class FeaturePlane {
 public:
  FeaturePlane() = default;

  FeaturePlane(AxisPair pair, const Aabb& bounds, double requested_cell_size,
               int channels) {
    PROGSLAM_CHECK(channels >= 1, ErrorCode::ValidationError, "channels >= 1");
    PROGSLAM_CHECK(requested_cell_size > 0, ErrorCode::ValidationError,
                   "cell_size > 0");
    axis_pair_ = pair;
    auto [au, av] = axis_pair_indices(pair);
    axis_u_ = au;
    axis_v_ = av;
    origin_u_ = bounds.min[au];
    origin_v_ = bounds.min[av];
    double ext_u = bounds.extent()[au];
    double ext_v = bounds.extent()[av];
    res_u_ = std::max(2, static_cast<int>(std::lround(ext_u / requested_cell_size)));
    cell_size_ = ext_u / res_u_;
    double rv = ext_v / cell_size_;
    res_v_ = std::max(2, static_cast<int>(std::lround(rv)));
    PROGSLAM_CHECK(std::abs(rv - std::lround(rv)) < 1e-6 || res_v_ == 2,
                   ErrorCode::ValidationError,
                   "plane bounds must be an integer multiple of the cell size "
                   "on both axes");
    channels_ = channels;
    values_ = MatX::Zero(channels_, res_u_ * res_v_);
  }

  AxisPair axis_pair() const { return axis_pair_; }
  int resolution_u() const { return res_u_; }
  int resolution_v() const { return res_v_; }
  double cell_size() const { return cell_size_; }
  int channels() const { return channels_; }
  int cell_count() const { return res_u_ * res_v_; }
  int value_count() const { return channels_ * res_u_ * res_v_; }

  MatX& values() { return values_; }
  const MatX& values() const { return values_; }

  Eigen::Block<MatX, Eigen::Dynamic, 1, true> at(int u, int v) {
    return values_.col(u * res_v_ + v);
  }
  MatX::ConstColXpr at(int u, int v) const {
    return values_.col(u * res_v_ + v);
  }

  bool in_bounds(const Vec3& x) const {
    double pu = x[axis_u_] - origin_u_;
    double pv = x[axis_v_] - origin_v_;
    return pu >= -1e-12 && pu <= res_u_ * cell_size_ + 1e-12 &&
           pv >= -1e-12 && pv <= res_v_ * cell_size_ + 1e-12;
  }

  BilinearStencil stencil(const Vec3& x) const {
    PROGSLAM_CHECK(in_bounds(x), ErrorCode::OutOfBounds,
                   "plane query outside bounds");
    BilinearStencil s;
    s.axis_u = axis_u_;
    s.axis_v = axis_v_;
    int iu0, iu1, iv0, iv1;
    resolve_axis((x[axis_u_] - origin_u_) / cell_size_ - 0.5, res_u_, iu0, iu1,
                 s.fu, s.dscale_u);
    resolve_axis((x[axis_v_] - origin_v_) / cell_size_ - 0.5, res_v_, iv0, iv1,
                 s.fv, s.dscale_v);
    s.dscale_u /= cell_size_;
    s.dscale_v /= cell_size_;
    s.c00 = iu0 * res_v_ + iv0;
    s.c10 = iu1 * res_v_ + iv0;
    s.c01 = iu0 * res_v_ + iv1;
    s.c11 = iu1 * res_v_ + iv1;
    return s;
  }

  // out += weight * bilinear value
  template <typename Dst>
  void interpolate_into(const BilinearStencil& s, double weight,
                        Dst&& out) const {
    out += weight * (s.w00() * values_.col(s.c00) + s.w10() * values_.col(s.c10) +
                     s.w01() * values_.col(s.c01) + s.w11() * values_.col(s.c11));
  }

  VecX interpolate(const Vec3& x) const {
    VecX out = VecX::Zero(channels_);
    interpolate_into(stencil(x), 1.0, out);
    return out;
  }

  // World-coordinate derivative of the interpolated feature along the two
  // in-plane axes.
  void interpolate_grad_x(const BilinearStencil& s, VecX& gu, VecX& gv) const {
    gu = ((values_.col(s.c10) - values_.col(s.c00)) * (1 - s.fv) +
          (values_.col(s.c11) - values_.col(s.c01)) * s.fv) *
         s.dscale_u;
    gv = ((values_.col(s.c01) - values_.col(s.c00)) * (1 - s.fu) +
          (values_.col(s.c11) - values_.col(s.c10)) * s.fu) *
         s.dscale_v;
  }

  // Accumulates d(loss)/d(values) for one query into a flat gradient slab
  // with this plane's layout. `upstream` has `channels` entries and carries
  // any fusion/summation weight already applied.
  template <typename Upstream>
  void scatter_grad(const BilinearStencil& s, const Upstream& upstream,
                    double* grad_base) const {
    auto add = [&](int col, double w) {
      double* dst = grad_base + static_cast<ptrdiff_t>(col) * channels_;
      for (int c = 0; c < channels_; ++c) dst[c] += w * upstream[c];
    };
    add(s.c00, s.w00());
    add(s.c10, s.w10());
    add(s.c01, s.w01());
    add(s.c11, s.w11());
  }

  void serialize(std::ostream& out) const {
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint writer assumes a little-endian host");
    int32_t header[4] = {static_cast<int32_t>(res_u_),
                         static_cast<int32_t>(res_v_),
                         static_cast<int32_t>(channels_),
                         static_cast<int32_t>(axis_pair_)};
    double cs = cell_size_;
    double org[2] = {origin_u_, origin_v_};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(&cs), sizeof(cs));
    out.write(reinterpret_cast<const char*>(org), sizeof(org));
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
      float f = static_cast<float>(values_.data()[i]);
      out.write(reinterpret_cast<const char*>(&f), sizeof(f));
    }
  }

  void deserialize(std::istream& in) {
    int32_t header[4];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    PROGSLAM_CHECK(in.good(), ErrorCode::IoError, "truncated plane header");
    res_u_ = header[0];
    res_v_ = header[1];
    channels_ = header[2];
    axis_pair_ = static_cast<AxisPair>(header[3]);
    auto [au, av] = axis_pair_indices(axis_pair_);
    axis_u_ = au;
    axis_v_ = av;
    in.read(reinterpret_cast<char*>(&cell_size_), sizeof(cell_size_));
    double org[2];
    in.read(reinterpret_cast<char*>(org), sizeof(org));
    origin_u_ = org[0];
    origin_v_ = org[1];
    values_.resize(channels_, res_u_ * res_v_);
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
      float f;
      in.read(reinterpret_cast<char*>(&f), sizeof(f));
      values_.data()[i] = f;
    }
    PROGSLAM_CHECK(in.good(), ErrorCode::IoError, "truncated plane data");
  }

 private:
  // Continuous cell coordinate -> cell pair + fraction. Uses the left-cell
  // convention at exact interior cell centers so the one-sided gradient is
  // deterministic.
  static void resolve_axis(double q, int res, int& i0, int& i1, double& frac,
                           double& dscale) {
    (void)res;
    double qf = std::floor(q);
    i0 = static_cast<int>(qf);
    frac = q - qf;
    if (frac == 0.0 && i0 > 0) {
      i0 -= 1;
      frac = 1.0;
    }
    i1 = i0 + 1;
    dscale = 1.0;
    if (i0 < 0) {
      i0 = i1 = 0;
      frac = 0.0;
      dscale = 0.0;
    } else if (i1 >= res) {
      i0 = i1 = res - 1;
      frac = 0.0;
      dscale = 0.0;
    }
  }

  AxisPair axis_pair_ = AxisPair::XY;
  int axis_u_ = 0, axis_v_ = 1;
  int res_u_ = 0, res_v_ = 0;
  int channels_ = 0;
  double cell_size_ = 0;
  double origin_u_ = 0, origin_v_ = 0;
  MatX values_;
};

// The full set of feature planes of one local field: geometry and
// appearance groups, each at a coarse and a fine scale, three planes per
// scale.
struct TriPlaneSet {
  std::array<FeaturePlane, 3> coarse_geo;
  std::array<FeaturePlane, 3> fine_geo;
  std::array<FeaturePlane, 3> coarse_app;
  std::array<FeaturePlane, 3> fine_app;
  Aabb bounds;

  TriPlaneSet() = default;

  TriPlaneSet(const Aabb& b, double coarse_cell, double fine_cell,
              int channels)
      : bounds(b) {
    for (int i = 0; i < 3; ++i) {
      AxisPair p = static_cast<AxisPair>(i);
      coarse_geo[i] = FeaturePlane(p, b, coarse_cell, channels);
      fine_geo[i] = FeaturePlane(p, b, fine_cell, channels);
      coarse_app[i] = FeaturePlane(p, b, coarse_cell, channels);
      fine_app[i] = FeaturePlane(p, b, fine_cell, channels);
    }
  }

  int channels() const { return coarse_geo[0].channels(); }

  // Feature dimension of one group (coarse and fine concatenated).
  int feature_dim() const { return 2 * channels(); }

  template <typename F>
  void for_each_plane(F&& f) {
    for (auto& p : coarse_geo) f(p);
    for (auto& p : fine_geo) f(p);
    for (auto& p : coarse_app) f(p);
    for (auto& p : fine_app) f(p);
  }

  template <typename F>
  void for_each_plane(F&& f) const {
    for (const auto& p : coarse_geo) f(p);
    for (const auto& p : fine_geo) f(p);
    for (const auto& p : coarse_app) f(p);
    for (const auto& p : fine_app) f(p);
  }

  int value_count() const {
    int n = 0;
    for_each_plane([&](const FeaturePlane& p) { n += p.value_count(); });
    return n;
  }
};

// Concatenated coarse+fine feature of one plane group at x: the sum of the
// three coarse plane interpolations stacked on the sum of the fine ones.
inline VecX group_feature(const std::array<FeaturePlane, 3>& coarse,
                          const std::array<FeaturePlane, 3>& fine,
                          const Vec3& x) {
  int c = coarse[0].channels();
  VecX out = VecX::Zero(2 * c);
  for (int i = 0; i < 3; ++i) {
    coarse[i].interpolate_into(coarse[i].stencil(x), 1.0, out.head(c));
    fine[i].interpolate_into(fine[i].stencil(x), 1.0, out.tail(c));
  }
  return out;
}

inline std::pair<VecX, VecX> triplane_feature(const TriPlaneSet& set,
                                              const Vec3& x) {
  PROGSLAM_CHECK(set.bounds.contains(x), ErrorCode::OutOfBounds,
                 "tri-plane query outside field bounds");
  return {group_feature(set.coarse_geo, set.fine_geo, x),
          group_feature(set.coarse_app, set.fine_app, x)};
}

}  // namespace progslam
