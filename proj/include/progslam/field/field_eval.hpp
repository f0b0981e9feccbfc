#pragma once

#include "progslam/field/local_field.hpp"

#include <array>
#include <vector>

namespace progslam {

// Batched evaluation of one local field at a set of in-bounds points,
// caching everything the backward pass needs. Forward produces the SDF in
// meters, the squashed RGB, and the latent code per point; backward
// accumulates gradients w.r.t. the field's flat parameters and,
// optionally, the query points.
class FieldBatchEval {
 public:
  void forward(const LocalField& f, const MatX& pts) {
    const FieldConfig& fc = f.config();
    const int n = static_cast<int>(pts.cols());
    const int enc_dim = fc.encoding_dim();
    const int feat = f.planes().feature_dim();
    const int chan = fc.channels;
    points_ = pts;
    geo_in_.resize(fc.geo_input_dim(), n);
    color_in_.resize(fc.color_input_dim(), n);
    enc_grad_.resize(std::max(1, enc_dim), n);
    stencils_.resize(n);
    const TriPlaneSet& planes = f.planes();
    for (int c = 0; c < n; ++c) {
      Vec3 x = pts.col(c);
      if (fc.use_one_blob) {
        Vec3 xn = f.normalize_point(x);
        for (int a = 0; a < 3; ++a) {
          one_blob_encode_axis(xn[a], fc.one_blob,
                               geo_in_.col(c).data() + a * fc.one_blob.bins,
                               enc_grad_.col(c).data() + a * fc.one_blob.bins);
        }
        color_in_.col(c).head(enc_dim) = geo_in_.col(c).head(enc_dim);
      }
      auto geo_feat = geo_in_.col(c).tail(feat);
      geo_feat.setZero();
      auto app_feat = color_in_.col(c).tail(feat);
      app_feat.setZero();
      for (int p = 0; p < 3; ++p) {
        stencils_[c][p] = planes.coarse_geo[p].stencil(x);
        stencils_[c][3 + p] = planes.fine_geo[p].stencil(x);
        stencils_[c][6 + p] = planes.coarse_app[p].stencil(x);
        stencils_[c][9 + p] = planes.fine_app[p].stencil(x);
        planes.coarse_geo[p].interpolate_into(stencils_[c][p], 1.0,
                                              geo_feat.head(chan));
        planes.fine_geo[p].interpolate_into(stencils_[c][3 + p], 1.0,
                                            geo_feat.tail(chan));
        planes.coarse_app[p].interpolate_into(stencils_[c][6 + p], 1.0,
                                              app_feat.head(chan));
        planes.fine_app[p].interpolate_into(stencils_[c][9 + p], 1.0,
                                            app_feat.tail(chan));
      }
    }
    geo_out_ = f.geo_decoder().forward(geo_in_, &geo_cache_);
    color_in_.block(enc_dim, 0, fc.latent_dim, n) =
        geo_out_.bottomRows(fc.latent_dim);
    MatX logits = f.color_decoder().forward(color_in_, &color_cache_);
    color_rgb_ = logits.unaryExpr([](double z) { return logistic(z); });
  }

  int size() const { return static_cast<int>(points_.cols()); }
  double sdf_meters(const LocalField& f, int i) const {
    return geo_out_(0, i) * f.truncation();
  }
  Vec3 rgb(int i) const { return color_rgb_.col(i); }
  const MatX& rgb_all() const { return color_rgb_; }
  VecX latent(const LocalField& f, int i) const {
    return geo_out_.col(i).tail(f.config().latent_dim);
  }

  // d_sdf: d(loss)/d(sdf in meters) per point; d_rgb: d(loss)/d(rgb).
  // `grad` (nullable) receives parameter gradients in the field's flat
  // layout; `g_points` (nullable, 3 x n) accumulates d(loss)/d(point).
  void backward(const LocalField& f, const VecX& d_sdf, const MatX& d_rgb,
                double* grad, MatX* g_points) const {
    const FieldConfig& fc = f.config();
    const int n = size();
    const int enc_dim = fc.encoding_dim();
    const int chan = fc.channels;

    MatX d_logits =
        (d_rgb.array() * color_rgb_.array() * (1.0 - color_rgb_.array()))
            .matrix();
    MatX d_color_in = f.color_decoder().backward(
        color_cache_, d_logits, grad, grad ? f.color_mlp_offset() : 0);

    MatX d_geo_out = MatX::Zero(1 + fc.latent_dim, n);
    d_geo_out.row(0) = d_sdf.transpose() * f.truncation();
    d_geo_out.bottomRows(fc.latent_dim) =
        d_color_in.block(enc_dim, 0, fc.latent_dim, n);
    MatX d_geo_in = f.geo_decoder().backward(geo_cache_, d_geo_out, grad,
                                             grad ? f.geo_mlp_offset() : 0);

    const bool want_x = g_points != nullptr;
    const TriPlaneSet& planes = f.planes();
    const Vec3 inv_extent = f.bounds().extent().cwiseInverse();
    VecX gu, gv;
    for (int c = 0; c < n; ++c) {
      Vec3 gx = Vec3::Zero();
      if (fc.use_one_blob && want_x) {
        for (int a = 0; a < 3; ++a) {
          double acc = 0.0;
          for (int b = 0; b < fc.one_blob.bins; ++b) {
            int row = a * fc.one_blob.bins + b;
            acc += (d_geo_in(row, c) + d_color_in(row, c)) * enc_grad_(row, c);
          }
          gx[a] += acc * inv_extent[a];
        }
      }
      auto handle_group = [&](const std::array<FeaturePlane, 3>& group,
                              int stencil_base, const auto& upstream,
                              int plane_index_base) {
        for (int p = 0; p < 3; ++p) {
          const FeaturePlane& plane = group[p];
          const BilinearStencil& s = stencils_[c][stencil_base + p];
          if (grad) {
            plane.scatter_grad(s, upstream,
                               grad + f.plane_offset(plane_index_base + p));
          }
          if (want_x) {
            plane.interpolate_grad_x(s, gu, gv);
            double du = 0.0, dv = 0.0;
            for (int ch = 0; ch < chan; ++ch) {
              du += upstream[ch] * gu[ch];
              dv += upstream[ch] * gv[ch];
            }
            gx[s.axis_u] += du;
            gx[s.axis_v] += dv;
          }
        }
      };
      auto d_geo_feat = d_geo_in.col(c).tail(2 * chan);
      auto d_app_feat = d_color_in.col(c).tail(2 * chan);
      handle_group(planes.coarse_geo, 0, d_geo_feat.head(chan), 0);
      handle_group(planes.fine_geo, 3, d_geo_feat.tail(chan), 3);
      handle_group(planes.coarse_app, 6, d_app_feat.head(chan), 6);
      handle_group(planes.fine_app, 9, d_app_feat.tail(chan), 9);
      if (want_x) g_points->col(c) += gx;
    }
  }

 private:
  MatX points_;
  MatX geo_in_;
  MlpCache geo_cache_;
  MatX geo_out_;
  MatX color_in_;
  MlpCache color_cache_;
  MatX color_rgb_;
  MatX enc_grad_;
  std::vector<std::array<BilinearStencil, 12>> stencils_;
};

}  // namespace progslam
