#pragma once

#include "progslam/atlas/atlas.hpp"
#include "progslam/field/field_eval.hpp"
#include "progslam/render/volume.hpp"

#include <functional>
#include <map>
#include <optional>
#include <vector>

namespace progslam {

// One ray of a render batch, with its observation (when supervised).
struct RayObservation {
  Ray ray;
  Vec3 dir_cam = Vec3::UnitZ();  // camera-frame unit direction
  Vec3 obs_color = Vec3::Zero();
  double obs_t = -1.0;  // observed depth along the ray; <= 0 means invalid
  int pose_slot = -1;   // index into GradSink::pose_grads; -1 = fixed pose
};

struct PipelineOptions {
  bool test_mode = false;       // deterministic mid-stratum sampling
  bool want_param_grad = true;  // gradients into the active field
  bool want_pose_grad = false;  // per-slot twist gradients
};

struct GradSink {
  VecX* field_grad = nullptr;               // active-field param layout
  std::vector<Vec6>* pose_grads = nullptr;  // indexed by RayObservation::pose_slot
};

// Generic per-point scene query (field, atlas, or analytic stub).
using QueryFn = std::function<FieldSample(const Vec3&)>;

// Non-differentiable single-ray rendering against an arbitrary query.
inline RenderedPixel render_pixel(const QueryFn& query, double beta,
                                  const Ray& ray, const RenderConfig& cfg,
                                  std::optional<double> gt_depth, Rng& rng,
                                  bool test_mode = false) {
  RaySamples s = sample_ray(ray, cfg, gt_depth, rng, test_mode);
  size_t n = s.depths.size();
  std::vector<double> sigmas(n), sdfs(n);
  std::vector<Vec3> colors(n);
  for (size_t k = 0; k < n; ++k) {
    FieldSample fs = query(s.points[k]);
    sdfs[k] = fs.sdf;
    colors[k] = fs.color;
    sigmas[k] = sdf_to_density(fs.sdf, beta);
  }
  RenderedPixel px = integrate(sigmas, colors, s.depths, cfg.normalize_weights);
  px.sdf_values = std::move(sdfs);
  PROGSLAM_CHECK(px.color.allFinite() && std::isfinite(px.depth),
                 ErrorCode::NonFiniteOutput, "rendered pixel is not finite");
  return px;
}

// Atlas query with out-of-coverage points clamped into the active field.
inline QueryFn atlas_query(const FieldAtlas& atlas) {
  return [&atlas](const Vec3& x) {
    Vec3 p = atlas.contains(x) ? x : atlas.active_field().bounds().clamp(x);
    return atlas.fused_query(p);
  };
}

inline RenderedPixel render_pixel(const FieldAtlas& atlas, const Ray& ray,
                                  const RenderConfig& cfg,
                                  std::optional<double> gt_depth, Rng& rng,
                                  bool test_mode = false) {
  return render_pixel(atlas_query(atlas), atlas.active_field().beta(), ray,
                      cfg, gt_depth, rng, test_mode);
}

// Batched differentiable renderer over the field atlas.
//
// forward() samples every ray, evaluates the fused field at all sample
// points with per-field caches, converts SDF to density with the active
// field's beta, and composites with transmittance-based weights.
// backward() takes the upstream gradients of any loss expressed in terms
// of the outputs (per-ray color and depth, per-sample fused SDF) and
// accumulates gradients w.r.t. the active field's flat parameter vector
// and per-ray pose twists (left-multiplied convention, with the sampled
// depths held fixed).
class RenderWorkspace {
 public:
  void forward(const FieldAtlas& atlas, const std::vector<RayObservation>& rays,
               const RenderConfig& cfg, Rng& rng, const PipelineOptions& opt) {
    atlas_ = &atlas;
    cfg_ = cfg;
    opt_ = opt;
    rays_ = rays;
    beta_ = atlas.active_field().beta();
    const int n_rays = static_cast<int>(rays.size());
    PROGSLAM_CHECK(n_rays > 0, ErrorCode::EmptyBatch, "empty ray batch");

    // Sampling pass.
    ray_offset_.assign(n_rays + 1, 0);
    samples_.clear();
    for (int r = 0; r < n_rays; ++r) {
      std::optional<double> gt;
      if (rays[r].obs_t > 0.0) gt = rays[r].obs_t;
      RaySamples s = sample_ray(rays[r].ray, cfg, gt, rng, opt.test_mode);
      for (size_t k = 0; k < s.depths.size(); ++k)
        samples_.push_back({r, s.depths[k], s.points[k]});
      ray_offset_[r + 1] = static_cast<int>(samples_.size());
    }
    const int m = static_cast<int>(samples_.size());

    // Coverage, clamping, IDW weights.
    points_.resize(3, m);
    mask_.assign(m, 7);
    cover_offset_.assign(m + 1, 0);
    cover_eval_.clear();
    cover_col_.clear();
    cover_w_.clear();
    cover_dudx_.clear();
    const auto& fields = atlas.fields();
    std::map<int, int> eval_index;
    eval_field_.clear();
    eval_point_idx_.clear();
    for (int i = 0; i < m; ++i) {
      Vec3 x = samples_[i].point;
      std::vector<int> ids = atlas.covering_fields(x);
      if (ids.empty()) {
        const Aabb& b = atlas.active_field().bounds();
        Vec3 c = b.clamp(x);
        uint8_t msk = 0;
        for (int a = 0; a < 3; ++a)
          if (c[a] == x[a]) msk |= (1 << a);
        mask_[i] = msk;
        x = c;
        ids = {atlas.active_id()};
      }
      points_.col(i) = x;
      double wsum = 0.0;
      std::vector<double> w_raw(ids.size());
      for (size_t k = 0; k < ids.size(); ++k) {
        double d = (x - fields[ids[k]].center()).norm();
        w_raw[k] = 1.0 / (std::pow(d, atlas.config().idw_power) +
                          atlas.config().idw_epsilon);
        wsum += w_raw[k];
      }
      for (size_t k = 0; k < ids.size(); ++k) {
        int fid = ids[k];
        auto [it, fresh] =
            eval_index.try_emplace(fid, static_cast<int>(eval_field_.size()));
        if (fresh) {
          eval_field_.push_back(fid);
          eval_point_idx_.emplace_back();
        }
        int e = it->second;
        cover_eval_.push_back(e);
        cover_col_.push_back(static_cast<int>(eval_point_idx_[e].size()));
        eval_point_idx_[e].push_back(i);
        cover_w_.push_back(w_raw[k] / wsum);
        Vec3 diff = x - fields[fid].center();
        double dist = diff.norm();
        Vec3 dudx = Vec3::Zero();
        if (dist > 1e-12) {
          double p = atlas.config().idw_power;
          dudx = -p * std::pow(dist, p - 2.0) * diff * (w_raw[k] * w_raw[k]);
        }
        cover_dudx_.push_back(dudx / wsum);
      }
      cover_offset_[i + 1] = static_cast<int>(cover_eval_.size());
    }

    // Per-field batched evaluation.
    evals_.resize(eval_field_.size());
    for (size_t e = 0; e < eval_field_.size(); ++e) {
      const auto& idx = eval_point_idx_[e];
      MatX pts(3, idx.size());
      for (size_t c = 0; c < idx.size(); ++c) pts.col(c) = points_.col(idx[c]);
      evals_[e].forward(fields[eval_field_[e]], pts);
    }

    // Fusion.
    sdf_ = VecX::Zero(m);
    color_ = MatX::Zero(3, m);
    for (int i = 0; i < m; ++i) {
      for (int c = cover_offset_[i]; c < cover_offset_[i + 1]; ++c) {
        int e = cover_eval_[c];
        const LocalField& f = fields[eval_field_[e]];
        int col = cover_col_[c];
        double u = cover_w_[c];
        sdf_[i] += u * evals_[e].sdf_meters(f, col);
        color_.col(i) += u * evals_[e].rgb(col);
      }
    }

    // Density + compositing.
    sigma_.resize(m);
    for (int i = 0; i < m; ++i) sigma_[i] = sdf_to_density(sdf_[i], beta_);
    out_color_ = MatX::Zero(3, n_rays);
    out_depth_ = VecX::Zero(n_rays);
    weights_ = VecX::Zero(m);
    wsum_raw_ = VecX::Zero(n_rays);
    hit_.assign(n_rays, 0);
    for (int r = 0; r < n_rays; ++r) {
      double tlog = 0.0, ws = 0.0;
      for (int i = ray_offset_[r]; i < ray_offset_[r + 1]; ++i) {
        double w = std::exp(tlog) * (1.0 - std::exp(-sigma_[i]));
        weights_[i] = w;
        ws += w;
        tlog -= sigma_[i];
      }
      wsum_raw_[r] = ws;
      if (cfg.normalize_weights) {
        if (ws > 1e-8) {
          hit_[r] = 1;
          for (int i = ray_offset_[r]; i < ray_offset_[r + 1]; ++i)
            weights_[i] /= ws;
        } else {
          for (int i = ray_offset_[r]; i < ray_offset_[r + 1]; ++i)
            weights_[i] = 0.0;
        }
      } else {
        hit_[r] = ws > 1e-8 ? 1 : 0;
      }
      for (int i = ray_offset_[r]; i < ray_offset_[r + 1]; ++i) {
        out_color_.col(r) += weights_[i] * color_.col(i);
        out_depth_[r] += weights_[i] * samples_[i].t;
      }
      PROGSLAM_CHECK(
          out_color_.col(r).allFinite() && std::isfinite(out_depth_[r]),
          ErrorCode::NonFiniteOutput, "non-finite render output");
    }
  }

  // Upstream gradients: d_color (3 x n_rays), d_depth (n_rays), d_sdf
  // (per sample, w.r.t. the fused SDF in meters; may be empty).
  void backward(const MatX& d_color, const VecX& d_depth, const VecX& d_sdf,
                GradSink& sink) const {
    const int n_rays = static_cast<int>(rays_.size());
    const int m = static_cast<int>(samples_.size());
    VecX g_sdf = VecX::Zero(m);  // d(loss)/d(fused sdf, meters)
    MatX g_color = MatX::Zero(3, m);
    double g_beta = 0.0;
    if (d_sdf.size() > 0) {
      PROGSLAM_CHECK(d_sdf.size() == m, ErrorCode::LengthMismatch,
                     "d_sdf length mismatch");
      g_sdf = d_sdf;
    }

    const bool has_out = d_color.size() > 0 || d_depth.size() > 0;
    for (int r = 0; r < n_rays && has_out; ++r) {
      int lo = ray_offset_[r], hi = ray_offset_[r + 1];
      Vec3 dc = d_color.size() > 0 ? Vec3(d_color.col(r)) : Vec3::Zero();
      double dd = d_depth.size() > 0 ? d_depth[r] : 0.0;
      if (dc.isZero(0.0) && dd == 0.0) continue;
      // d(loss)/d(weight as used)
      std::vector<double> g_wt(hi - lo);
      for (int i = lo; i < hi; ++i) {
        g_wt[i - lo] = dc.dot(color_.col(i)) + dd * samples_[i].t;
        g_color.col(i) += weights_[i] * dc;
      }
      std::vector<double> g_wraw(hi - lo, 0.0);
      if (cfg_.normalize_weights) {
        if (!hit_[r]) continue;  // constant-zero region
        double s = wsum_raw_[r];
        double gw_dot_w = 0.0;
        for (int i = lo; i < hi; ++i) gw_dot_w += g_wt[i - lo] * weights_[i];
        for (int i = lo; i < hi; ++i)
          g_wraw[i - lo] = (g_wt[i - lo] - gw_dot_w) / s;
      } else {
        g_wraw = g_wt;
      }
      // d(loss)/d(sigma): dw_k/dsigma_k = T_k e^{-sigma_k};
      // dw_j/dsigma_k = -w_j for j > k.
      std::vector<double> w_raw(hi - lo), trans(hi - lo);
      double tlog = 0.0;
      for (int i = lo; i < hi; ++i) {
        trans[i - lo] = std::exp(tlog);
        w_raw[i - lo] = trans[i - lo] * (1.0 - std::exp(-sigma_[i]));
        tlog -= sigma_[i];
      }
      double suffix = 0.0;
      for (int i = hi - 1; i >= lo; --i) {
        int k = i - lo;
        double g_sigma = g_wraw[k] * trans[k] * std::exp(-sigma_[i]) - suffix;
        suffix += g_wraw[k] * w_raw[k];
        double ds, db;
        sdf_to_density_grad(sdf_[i], beta_, ds, db);
        g_sdf[i] += g_sigma * ds;
        g_beta += g_sigma * db;
      }
    }

    // Fused -> per-field upstreams plus IDW weight terms for the pose
    // chain.
    const auto& fields = atlas_->fields();
    MatX g_point = MatX::Zero(3, m);
    std::vector<VecX> eval_g_sdf(evals_.size());
    std::vector<MatX> eval_g_rgb(evals_.size());
    for (size_t e = 0; e < evals_.size(); ++e) {
      eval_g_sdf[e] = VecX::Zero(eval_point_idx_[e].size());
      eval_g_rgb[e] = MatX::Zero(3, eval_point_idx_[e].size());
    }
    for (int i = 0; i < m; ++i) {
      for (int c = cover_offset_[i]; c < cover_offset_[i + 1]; ++c) {
        int e = cover_eval_[c];
        const LocalField& f = fields[eval_field_[e]];
        int col = cover_col_[c];
        double u = cover_w_[c];
        eval_g_sdf[e][col] += g_sdf[i] * u;
        eval_g_rgb[e].col(col) += g_color.col(i) * u;
        if (opt_.want_pose_grad) {
          double a = g_sdf[i] * (evals_[e].sdf_meters(f, col) - sdf_[i]) +
                     g_color.col(i).dot(evals_[e].rgb(col) - color_.col(i));
          g_point.col(i) += a * cover_dudx_[c];
        }
      }
    }

    // Per-field decoder/plane/encoding backward.
    for (size_t e = 0; e < evals_.size(); ++e) {
      const LocalField& f = fields[eval_field_[e]];
      const bool params_here = opt_.want_param_grad && sink.field_grad &&
                               eval_field_[e] == atlas_->active_id() &&
                               !f.frozen();
      double* grad = params_here ? sink.field_grad->data() : nullptr;
      if (!grad && !opt_.want_pose_grad) continue;
      MatX g_pts;
      MatX* g_pts_ptr = nullptr;
      if (opt_.want_pose_grad) {
        g_pts = MatX::Zero(3, eval_point_idx_[e].size());
        g_pts_ptr = &g_pts;
      }
      evals_[e].backward(f, eval_g_sdf[e], eval_g_rgb[e], grad, g_pts_ptr);
      if (opt_.want_pose_grad) {
        for (size_t c = 0; c < eval_point_idx_[e].size(); ++c)
          g_point.col(eval_point_idx_[e][c]) += g_pts.col(c);
      }
    }

    // Beta (log-space) into the active field.
    if (opt_.want_param_grad && sink.field_grad) {
      const LocalField& af = atlas_->active_field();
      (*sink.field_grad)[af.log_beta_offset()] += g_beta * beta_;
    }

    // Pose twists: x_k = exp(delta) * x_k with the sampled depths fixed.
    if (opt_.want_pose_grad && sink.pose_grads) {
      for (int r = 0; r < n_rays; ++r) {
        int slot = rays_[r].pose_slot;
        if (slot < 0) continue;
        Vec6 acc = Vec6::Zero();
        for (int i = ray_offset_[r]; i < ray_offset_[r + 1]; ++i) {
          Vec3 g = g_point.col(i);
          for (int a = 0; a < 3; ++a)
            if (!(mask_[i] & (1 << a))) g[a] = 0.0;
          if (g.isZero(0.0)) continue;
          Vec3 x = rays_[r].ray.origin + samples_[i].t * rays_[r].ray.direction;
          acc += point_twist_jacobian(x).transpose() * g;
        }
        (*sink.pose_grads)[slot] += acc;
      }
    }
  }

  // --- outputs --------------------------------------------------------

  int ray_count() const { return static_cast<int>(rays_.size()); }
  int sample_count() const { return static_cast<int>(samples_.size()); }
  int ray_begin(int r) const { return ray_offset_[r]; }
  int ray_end(int r) const { return ray_offset_[r + 1]; }
  double sample_depth(int i) const { return samples_[i].t; }
  double sample_sdf(int i) const { return sdf_[i]; }
  const MatX& colors() const { return out_color_; }
  const VecX& depths() const { return out_depth_; }
  bool ray_hit(int r) const { return hit_[r] != 0; }
  double weight(int i) const { return weights_[i]; }
  double weight_sum_raw(int r) const { return wsum_raw_[r]; }
  const RayObservation& ray(int r) const { return rays_[r]; }
  const FieldAtlas& atlas() const { return *atlas_; }

  RenderedPixel rendered_pixel(int r) const {
    RenderedPixel px;
    px.color = out_color_.col(r);
    px.depth = out_depth_[r];
    px.hit = hit_[r] != 0;
    px.weight_sum = wsum_raw_[r];
    for (int i = ray_offset_[r]; i < ray_offset_[r + 1]; ++i) {
      px.weights.push_back(weights_[i]);
      px.sdf_values.push_back(sdf_[i]);
      px.sample_depths.push_back(samples_[i].t);
    }
    return px;
  }

 private:
  struct Sample {
    int ray = 0;
    double t = 0.0;
    Vec3 point = Vec3::Zero();  // pre-clamp
  };

  const FieldAtlas* atlas_ = nullptr;
  RenderConfig cfg_;
  PipelineOptions opt_;
  double beta_ = 0.1;
  std::vector<RayObservation> rays_;
  std::vector<Sample> samples_;
  std::vector<int> ray_offset_;
  MatX points_;
  std::vector<uint8_t> mask_;
  std::vector<int> cover_offset_, cover_eval_, cover_col_;
  std::vector<double> cover_w_;
  std::vector<Vec3> cover_dudx_;
  std::vector<int> eval_field_;
  std::vector<std::vector<int>> eval_point_idx_;
  std::vector<FieldBatchEval> evals_;
  VecX sdf_, sigma_;
  MatX color_;
  MatX out_color_;
  VecX out_depth_;
  VecX weights_, wsum_raw_;
  std::vector<uint8_t> hit_;
};

}  // namespace progslam
