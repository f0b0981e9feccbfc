#pragma once

#include "progslam/core/types.hpp"

#include <cmath>

namespace progslam {

struct OneBlobConfig {
  int bins = 16;
  double kernel_sigma = 0.5;  // fraction of one bin width

  void validate() const {
    PROGSLAM_CHECK(bins >= 2, ErrorCode::ValidationError, "one_blob.bins >= 2");
    PROGSLAM_CHECK(kernel_sigma > 0.0, ErrorCode::ValidationError,
                   "one_blob.kernel_sigma > 0");
  }

  int output_dim() const { return 3 * bins; }
};

// Per-axis Gaussian responses at bin centers, normalized so each axis sums
// to one. Writes `bins` entries to out; d_out (optional) receives the
// derivative of each entry w.r.t. the coordinate.
inline void one_blob_encode_axis(double v, const OneBlobConfig& cfg,
                                 double* out, double* d_out = nullptr) {
  const int b = cfg.bins;
  const double sigma = cfg.kernel_sigma / b;
  const double inv_2s2 = 1.0 / (2.0 * sigma * sigma);
  double sum = 0.0, dsum = 0.0;
  for (int i = 0; i < b; ++i) {
    double center = (i + 0.5) / b;
    double d = v - center;
    double g = std::exp(-d * d * inv_2s2);
    out[i] = g;
    sum += g;
    if (d_out) {
      d_out[i] = g * (-2.0 * d * inv_2s2);
      dsum += d_out[i];
    }
  }
  double inv_sum = 1.0 / sum;
  for (int i = 0; i < b; ++i) {
    double r = out[i] * inv_sum;
    if (d_out) d_out[i] = (d_out[i] - r * dsum) * inv_sum;
    out[i] = r;
  }
}

// Encoding of a point in the unit cube; output dimension is 3 * bins.
inline VecX one_blob_encode(const Vec3& x, const OneBlobConfig& cfg) {
  PROGSLAM_CHECK((x.array() >= 0.0).all() && (x.array() <= 1.0).all(),
                 ErrorCode::OutOfUnitCube,
                 "one-blob input must lie in [0,1]^3");
  VecX out(cfg.output_dim());
  for (int a = 0; a < 3; ++a) {
    one_blob_encode_axis(x[a], cfg, out.data() + a * cfg.bins);
  }
  return out;
}

// Encoding together with the per-axis derivative d(encoding)/d(coordinate).
// Column a of d_enc holds the derivative of the entries of axis a; entries
// belonging to other axes are zero by construction and not stored.
inline void one_blob_encode_grad(const Vec3& x, const OneBlobConfig& cfg,
                                 VecX& enc, VecX& d_enc) {
  PROGSLAM_CHECK((x.array() >= 0.0).all() && (x.array() <= 1.0).all(),
                 ErrorCode::OutOfUnitCube,
                 "one-blob input must lie in [0,1]^3");
  enc.resize(cfg.output_dim());
  d_enc.resize(cfg.output_dim());
  for (int a = 0; a < 3; ++a) {
    one_blob_encode_axis(x[a], cfg, enc.data() + a * cfg.bins,
                         d_enc.data() + a * cfg.bins);
  }
}

}  // namespace progslam
