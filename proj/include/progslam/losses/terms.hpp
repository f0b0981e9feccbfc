#pragma once

#include "progslam/core/rng.hpp"
#include "progslam/encoding/tri_plane.hpp"
#include "progslam/render/pipeline.hpp"

#include <map>
#include <string>
#include <vector>

namespace progslam {

struct LossWeights {
  double w_color = 5.0;
  double w_depth = 0.1;
  double w_sdf_mid = 200.0;
  double w_sdf_tail = 10.0;
  double w_freespace = 5.0;
  double w_smooth = 1e-3;
  double w_warp_color = 0.5;
  double w_warp_depth = 0.5;
  double w_reproj = 1e-3;

  void validate() const {
    for (double w : {w_color, w_depth, w_sdf_mid, w_sdf_tail, w_freespace,
                     w_smooth, w_warp_color, w_warp_depth, w_reproj}) {
      PROGSLAM_CHECK(std::isfinite(w) && w >= 0.0, ErrorCode::ValidationError,
                     "loss weights must be finite and non-negative");
    }
  }
};

// --- rendering losses -----------------------------------------------------

// Mean squared color error (per-channel mean convention) over every ray,
// and mean squared depth error over rays with a valid depth observation
// (observed depth <= 0 marks an invalid ray).
inline std::pair<double, double> rendering_losses(const MatX& rendered_colors,
                                                  const VecX& rendered_depths,
                                                  const MatX& obs_colors,
                                                  const VecX& obs_depths) {
  Eigen::Index n = rendered_colors.cols();
  PROGSLAM_CHECK(n > 0, ErrorCode::EmptyBatch, "rendering loss on empty batch");
  PROGSLAM_CHECK(obs_colors.cols() == n && rendered_depths.size() == n &&
                     obs_depths.size() == n,
                 ErrorCode::LengthMismatch, "rendering loss batch mismatch");
  double lc = 0.0, ld = 0.0;
  int n_depth = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    lc += (rendered_colors.col(r) - obs_colors.col(r)).squaredNorm() / 3.0;
    if (obs_depths[r] > 0.0) {
      double d = rendered_depths[r] - obs_depths[r];
      ld += d * d;
      ++n_depth;
    }
  }
  lc /= static_cast<double>(n);
  if (n_depth > 0) ld /= n_depth;
  return {lc, ld};
}

inline std::pair<double, double> rendering_losses(const RenderWorkspace& ws) {
  int n = ws.ray_count();
  MatX obs_c(3, n);
  VecX obs_d(n);
  for (int r = 0; r < n; ++r) {
    obs_c.col(r) = ws.ray(r).obs_color;
    obs_d[r] = ws.ray(r).obs_t;
  }
  return rendering_losses(ws.colors(), ws.depths(), obs_c, obs_d);
}

inline void rendering_losses_backward(const RenderWorkspace& ws, double w_color,
                                      double w_depth, MatX& d_color,
                                      VecX& d_depth) {
  int n = ws.ray_count();
  int n_valid = 0;
  for (int r = 0; r < n; ++r)
    if (ws.ray(r).obs_t > 0.0) ++n_valid;
  for (int r = 0; r < n; ++r) {
    d_color.col(r) +=
        w_color * 2.0 / (3.0 * n) * (ws.colors().col(r) - ws.ray(r).obs_color);
    if (ws.ray(r).obs_t > 0.0 && n_valid > 0)
      d_depth[r] +=
          w_depth * 2.0 / n_valid * (ws.depths()[r] - ws.ray(r).obs_t);
  }
}

// --- truncated-SDF sample partition ----------------------------------------

enum class SampleClass : uint8_t { None = 0, Mid, Tail, Free };

struct SamplePartition {
  std::vector<int> mid;
  std::vector<int> tail;
  std::vector<int> freespace;
};

// Classifies one sample depth against the observed depth: middle of the
// truncation region (|D-d| <= 0.4 tr), its tail (0.4 tr < |D-d| <= tr),
// free space in front of the surface (D-d > tr). Samples more than tr
// behind the surface belong to no set.
inline SampleClass classify_sample(double sample_depth, double obs_depth,
                                   double truncation) {
  double diff = obs_depth - sample_depth;  // positive in front of the surface
  double a = std::abs(diff);
  if (a <= 0.4 * truncation) return SampleClass::Mid;
  if (a <= truncation) return SampleClass::Tail;
  if (diff > truncation) return SampleClass::Free;
  return SampleClass::None;
}

inline SamplePartition partition_samples(const std::vector<double>& sample_depths,
                                         double obs_depth, double truncation) {
  PROGSLAM_CHECK(std::isfinite(obs_depth) && obs_depth > 0.0,
                 ErrorCode::InvalidDepth, "partition requires a valid depth");
  PROGSLAM_CHECK(truncation > 0.0, ErrorCode::ValidationError,
                 "truncation must be positive");
  SamplePartition p;
  for (size_t k = 0; k < sample_depths.size(); ++k) {
    switch (classify_sample(sample_depths[k], obs_depth, truncation)) {
      case SampleClass::Mid: p.mid.push_back(static_cast<int>(k)); break;
      case SampleClass::Tail: p.tail.push_back(static_cast<int>(k)); break;
      case SampleClass::Free: p.freespace.push_back(static_cast<int>(k)); break;
      case SampleClass::None: break;
    }
  }
  return p;
}

// Per-sample classes for a whole workspace batch (None on rays without a
// valid depth observation).
inline std::vector<SampleClass> partition_workspace(const RenderWorkspace& ws,
                                                    double truncation) {
  std::vector<SampleClass> cls(ws.sample_count(), SampleClass::None);
  for (int r = 0; r < ws.ray_count(); ++r) {
    double obs = ws.ray(r).obs_t;
    if (!(obs > 0.0)) continue;
    for (int i = ws.ray_begin(r); i < ws.ray_end(r); ++i)
      cls[i] = classify_sample(ws.sample_depth(i), obs, truncation);
  }
  return cls;
}

// --- truncated-SDF and free-space losses ------------------------------------

struct SdfLossTerms {
  double mid = 0.0;
  double tail = 0.0;
  double freespace = 0.0;
};

// Per-ray truncated-SDF losses: mean over each set of
// (sdf_meters - (D - d))^2, where sdf_meters is the raw prediction scaled
// by tr. Empty sets contribute zero.
inline std::pair<double, double> sdf_losses(
    const std::vector<double>& sdf_values_meters,
    const std::vector<double>& sample_depths, double obs_depth,
    const SamplePartition& p) {
  auto set_mean = [&](const std::vector<int>& set) {
    if (set.empty()) return 0.0;
    double acc = 0.0;
    for (int k : set) {
      double res = sdf_values_meters[k] - (obs_depth - sample_depths[k]);
      acc += res * res;
    }
    return acc / set.size();
  };
  return {set_mean(p.mid), set_mean(p.tail)};
}

// Per-ray free-space loss: mean over the free-space set of
// (sdf_meters / tr - 1)^2.
inline double free_space_loss(const std::vector<double>& sdf_values_meters,
                              double truncation, const SamplePartition& p) {
  if (p.freespace.empty()) return 0.0;
  double acc = 0.0;
  for (int k : p.freespace) {
    double res = sdf_values_meters[k] / truncation - 1.0;
    acc += res * res;
  }
  return acc / p.freespace.size();
}

namespace detail {

struct RaySetCounts {
  int mid = 0, tail = 0, freespace = 0;
};

inline std::vector<RaySetCounts> count_sets(const RenderWorkspace& ws,
                                            const std::vector<SampleClass>& cls) {
  std::vector<RaySetCounts> counts(ws.ray_count());
  for (int r = 0; r < ws.ray_count(); ++r) {
    for (int i = ws.ray_begin(r); i < ws.ray_end(r); ++i) {
      if (cls[i] == SampleClass::Mid) ++counts[r].mid;
      else if (cls[i] == SampleClass::Tail) ++counts[r].tail;
      else if (cls[i] == SampleClass::Free) ++counts[r].freespace;
    }
  }
  return counts;
}

inline int valid_depth_rays(const RenderWorkspace& ws) {
  int n = 0;
  for (int r = 0; r < ws.ray_count(); ++r)
    if (ws.ray(r).obs_t > 0.0) ++n;
  return n;
}

}  // namespace detail

// Truncated-SDF supervision: the field's SDF (meters, i.e. the raw
// prediction scaled by tr) should equal D - d inside the truncation
// region; free-space samples push the raw prediction to +1. Each loss is
// the mean over valid-depth rays of the mean over the ray's set.
inline SdfLossTerms sdf_losses(const RenderWorkspace& ws,
                               const std::vector<SampleClass>& cls,
                               double truncation) {
  SdfLossTerms out;
  int n_rays = detail::valid_depth_rays(ws);
  if (n_rays == 0) return out;
  auto counts = detail::count_sets(ws, cls);
  for (int r = 0; r < ws.ray_count(); ++r) {
    double obs = ws.ray(r).obs_t;
    if (!(obs > 0.0)) continue;
    double mid = 0, tail = 0, fs = 0;
    for (int i = ws.ray_begin(r); i < ws.ray_end(r); ++i) {
      double res = ws.sample_sdf(i) - (obs - ws.sample_depth(i));
      if (cls[i] == SampleClass::Mid) mid += res * res;
      else if (cls[i] == SampleClass::Tail) tail += res * res;
      else if (cls[i] == SampleClass::Free) {
        double fres = ws.sample_sdf(i) / truncation - 1.0;
        fs += fres * fres;
      }
    }
    if (counts[r].mid > 0) out.mid += mid / counts[r].mid;
    if (counts[r].tail > 0) out.tail += tail / counts[r].tail;
    if (counts[r].freespace > 0) out.freespace += fs / counts[r].freespace;
  }
  out.mid /= n_rays;
  out.tail /= n_rays;
  out.freespace /= n_rays;
  return out;
}

inline void sdf_losses_backward(const RenderWorkspace& ws,
                                const std::vector<SampleClass>& cls,
                                double truncation, double w_mid, double w_tail,
                                double w_freespace, VecX& d_sdf) {
  int n_rays = detail::valid_depth_rays(ws);
  if (n_rays == 0) return;
  auto counts = detail::count_sets(ws, cls);
  for (int r = 0; r < ws.ray_count(); ++r) {
    double obs = ws.ray(r).obs_t;
    if (!(obs > 0.0)) continue;
    for (int i = ws.ray_begin(r); i < ws.ray_end(r); ++i) {
      if (cls[i] == SampleClass::Mid && counts[r].mid > 0) {
        double res = ws.sample_sdf(i) - (obs - ws.sample_depth(i));
        d_sdf[i] += w_mid * 2.0 * res / (counts[r].mid * n_rays);
      } else if (cls[i] == SampleClass::Tail && counts[r].tail > 0) {
        double res = ws.sample_sdf(i) - (obs - ws.sample_depth(i));
        d_sdf[i] += w_tail * 2.0 * res / (counts[r].tail * n_rays);
      } else if (cls[i] == SampleClass::Free && counts[r].freespace > 0) {
        double res = ws.sample_sdf(i) / truncation - 1.0;
        d_sdf[i] += w_freespace * 2.0 * res /
                    (truncation * counts[r].freespace * n_rays);
      }
    }
  }
}

inline double free_space_loss(const RenderWorkspace& ws,
                              const std::vector<SampleClass>& cls,
                              double truncation) {
  return sdf_losses(ws, cls, truncation).freespace;
}

// --- tri-plane smoothness ---------------------------------------------------

// Feature differences between adjacent vertices of one sampled region per
// plane, channel-summed, averaged over the defined difference terms.
struct SmoothnessRegion {
  // per plane: region origin (u0, v0) and extent (ru, rv) in vertices
  struct PlaneRegion {
    int u0 = 0, v0 = 0, ru = 2, rv = 2;
  };
  std::vector<PlaneRegion> regions;  // 12, plane order of TriPlaneSet
};

inline SmoothnessRegion sample_smoothness_region(const TriPlaneSet& set,
                                                 int region_size, Rng& rng) {
  PROGSLAM_CHECK(region_size >= 2, ErrorCode::ValidationError,
                 "smoothness region needs at least 2 vertices per axis");
  SmoothnessRegion out;
  set.for_each_plane([&](const FeaturePlane& p) {
    PROGSLAM_CHECK(region_size <= p.resolution_u() &&
                       region_size <= p.resolution_v(),
                   ErrorCode::RegionTooLarge,
                   "smoothness region exceeds plane resolution");
    SmoothnessRegion::PlaneRegion r;
    r.ru = r.rv = region_size;
    r.u0 = static_cast<int>(rng.index(p.resolution_u() - region_size + 1));
    r.v0 = static_cast<int>(rng.index(p.resolution_v() - region_size + 1));
    out.regions.push_back(r);
  });
  return out;
}

inline double plane_smoothness(const FeaturePlane& p,
                               const SmoothnessRegion::PlaneRegion& r,
                               double* grad_base = nullptr, double scale = 0.0) {
  double acc = 0.0;
  long terms = 0;
  auto diff_term = [&](int u, int v, int du, int dv) {
    auto a = p.at(u, v);
    auto b = p.at(u + du, v + dv);
    VecX d = b - a;
    acc += d.squaredNorm();
    ++terms;
    if (grad_base) {
      double* ga = grad_base + static_cast<ptrdiff_t>(u * p.resolution_v() + v) *
                                   p.channels();
      double* gb = grad_base + static_cast<ptrdiff_t>((u + du) * p.resolution_v() +
                                                      (v + dv)) *
                                   p.channels();
      for (int c = 0; c < p.channels(); ++c) {
        gb[c] += scale * 2.0 * d[c];
        ga[c] -= scale * 2.0 * d[c];
      }
    }
  };
  for (int u = r.u0; u < r.u0 + r.ru; ++u)
    for (int v = r.v0; v < r.v0 + r.rv; ++v) {
      if (u + 1 < r.u0 + r.ru) diff_term(u, v, 1, 0);
      if (v + 1 < r.v0 + r.rv) diff_term(u, v, 0, 1);
    }
  return terms > 0 ? acc / terms : 0.0;
}

// NOTE: the per-plane gradient scale must match the forward normalization;
// smoothness_loss_backward handles that pairing.
inline double smoothness_loss(const TriPlaneSet& set,
                              const SmoothnessRegion& region) {
  double total = 0.0;
  int k = 0;
  set.for_each_plane([&](const FeaturePlane& p) {
    total += plane_smoothness(p, region.regions[k++]);
  });
  return total / 12.0;
}

inline double smoothness_loss(const TriPlaneSet& set, int region_size,
                              Rng& rng) {
  return smoothness_loss(set, sample_smoothness_region(set, region_size, rng));
}

// Accumulates w * d(smoothness)/d(plane values) into the field's flat
// gradient (plane section layout).
template <typename PlaneOffsetFn>
inline void smoothness_loss_backward(const TriPlaneSet& set,
                                     const SmoothnessRegion& region, double w,
                                     PlaneOffsetFn&& plane_offset,
                                     double* grad) {
  int k = 0;
  set.for_each_plane([&](const FeaturePlane& p) {
    const auto& r = region.regions[k];
    long terms = static_cast<long>(r.ru - 1) * r.rv + static_cast<long>(r.rv - 1) * r.ru;
    double scale = terms > 0 ? w / (12.0 * terms) : 0.0;
    plane_smoothness(p, r, grad + plane_offset(k), scale);
    ++k;
  });
}

// --- weighted total ---------------------------------------------------------

inline double total_objective(const std::map<std::string, double>& terms,
                              const std::map<std::string, double>& weights) {
  double total = 0.0;
  for (const auto& [name, value] : terms) {
    PROGSLAM_CHECK(std::isfinite(value), ErrorCode::NonFiniteTerm,
                   "non-finite loss term: " + name);
    auto it = weights.find(name);
    double w = it == weights.end() ? 0.0 : it->second;
    total += w * value;
  }
  return total;
}

}  // namespace progslam
