#pragma once

#include "progslam/core/rng.hpp"
#include "progslam/core/types.hpp"
#include "progslam/geom/pose.hpp"

#include <algorithm>
#include <optional>
#include <vector>

namespace progslam {

struct RenderConfig {
  int n_stratified = 32;
  int n_importance = 8;
  double t_near = 0.05;
  double t_far = 8.0;
  bool normalize_weights = true;
  double truncation = 0.1;

  void validate() const {
    PROGSLAM_CHECK(n_stratified >= 1, ErrorCode::ValidationError,
                   "render.n_stratified >= 1");
    PROGSLAM_CHECK(n_importance >= 0, ErrorCode::ValidationError,
                   "render.n_importance >= 0");
    PROGSLAM_CHECK(t_near >= 0 && t_near < t_far, ErrorCode::ValidationError,
                   "render requires 0 <= t_near < t_far");
    PROGSLAM_CHECK(truncation > 0, ErrorCode::ValidationError,
                   "render.truncation > 0");
  }
};

// SDF to volume density: sigma = Sigmoid(-sdf/beta) / beta. Strictly
// decreasing in sdf with range (0, 1/beta).
inline double sdf_to_density(double sdf, double beta) {
  return logistic(-sdf / beta) / beta;
}

// d(sigma)/d(sdf) and d(sigma)/d(beta).
inline void sdf_to_density_grad(double sdf, double beta, double& d_sdf,
                                double& d_beta) {
  double g = logistic(-sdf / beta);
  double gp = g * (1.0 - g);
  d_sdf = -gp / (beta * beta);
  d_beta = (-g + gp * sdf / beta) / (beta * beta);
}

struct RaySamples {
  std::vector<double> depths;  // strictly increasing, along-ray meters
  std::vector<Vec3> points;
};

// Jittered stratified samples on [t_near, t_far], plus importance samples
// around the observed depth when available. In test mode the jitter is
// fixed at the stratum midpoint.
inline RaySamples sample_ray(const Ray& ray, const RenderConfig& cfg,
                             std::optional<double> gt_depth, Rng& rng,
                             bool test_mode = false) {
  cfg.validate();
  std::vector<double> ts;
  ts.reserve(cfg.n_stratified + cfg.n_importance);
  double span = cfg.t_far - cfg.t_near;
  double dt = span / cfg.n_stratified;
  for (int k = 0; k < cfg.n_stratified; ++k) {
    double u = test_mode ? 0.5 : rng.uniform();
    ts.push_back(cfg.t_near + (k + u) * dt);
  }
  if (gt_depth && std::isfinite(*gt_depth) && *gt_depth > 0.0 &&
      cfg.n_importance > 0) {
    double lo = std::max(cfg.t_near, *gt_depth - cfg.truncation);
    double hi = std::min(cfg.t_far, *gt_depth + cfg.truncation);
    if (hi > lo) {
      double dti = (hi - lo) / cfg.n_importance;
      for (int k = 0; k < cfg.n_importance; ++k) {
        double u = test_mode ? 0.5 : rng.uniform();
        ts.push_back(lo + (k + u) * dti);
      }
    }
  }
  std::sort(ts.begin(), ts.end());
  // Strictly increasing: break exact ties deterministically.
  for (size_t i = 1; i < ts.size(); ++i)
    if (ts[i] <= ts[i - 1]) ts[i] = std::nextafter(ts[i - 1], 1e300);
  RaySamples s;
  s.depths = std::move(ts);
  s.points.reserve(s.depths.size());
  for (double t : s.depths) s.points.push_back(ray.origin + t * ray.direction);
  return s;
}

struct RenderedPixel {
  Vec3 color = Vec3::Zero();
  double depth = 0.0;  // along-ray meters
  std::vector<double> weights;
  std::vector<double> sdf_values;  // meters
  std::vector<double> sample_depths;
  double weight_sum = 0.0;  // raw sum before any normalization
  bool hit = false;
};

// Termination-probability compositing:
//   w_k = exp(-sum_{m<k} sigma_m) * (1 - exp(-sigma_k))
// With weight normalization on, weights are divided by their sum before
// forming color and depth; a vanishing sum flags a no-hit pixel.
inline RenderedPixel integrate(const std::vector<double>& sigmas,
                               const std::vector<Vec3>& colors,
                               const std::vector<double>& depths,
                               bool normalize_weights = true) {
  PROGSLAM_CHECK(sigmas.size() == colors.size() && sigmas.size() == depths.size(),
                 ErrorCode::LengthMismatch, "integrate input length mismatch");
  size_t n = sigmas.size();
  RenderedPixel out;
  out.sample_depths = depths;
  out.weights.resize(n);
  double transmittance_log = 0.0;
  double wsum = 0.0;
  for (size_t k = 0; k < n; ++k) {
    double w = std::exp(transmittance_log) * (1.0 - std::exp(-sigmas[k]));
    out.weights[k] = w;
    wsum += w;
    transmittance_log -= sigmas[k];
  }
  out.weight_sum = wsum;
  if (normalize_weights) {
    if (wsum > 1e-8) {
      for (auto& w : out.weights) w /= wsum;
      out.hit = true;
    } else {
      std::fill(out.weights.begin(), out.weights.end(), 0.0);
      out.hit = false;
    }
  } else {
    out.hit = wsum > 1e-8;
  }
  for (size_t k = 0; k < n; ++k) {
    out.color += out.weights[k] * colors[k];
    out.depth += out.weights[k] * depths[k];
  }
  return out;
}

}  // namespace progslam
