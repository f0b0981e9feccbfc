#pragma once

#include "progslam/geom/pose.hpp"

#include <Eigen/SVD>

#include <vector>

namespace progslam {

// Closed-form least-squares rigid alignment (no scale) of the estimated
// positions onto the ground truth: returns G minimizing
// sum_i || G(est_i) - gt_i ||^2.
inline Pose align_trajectories(const std::vector<Pose>& est,
                               const std::vector<Pose>& gt) {
  PROGSLAM_CHECK(est.size() == gt.size() && est.size() >= 3,
                 ErrorCode::DegenerateConfiguration,
                 "alignment needs >= 3 paired poses");
  const size_t n = est.size();
  Vec3 ce = Vec3::Zero(), cg = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    ce += est[i].t;
    cg += gt[i].t;
  }
  ce /= static_cast<double>(n);
  cg /= static_cast<double>(n);
  Mat3 sigma = Mat3::Zero();
  double spread = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sigma += (gt[i].t - cg) * (est[i].t - ce).transpose();
    spread += (est[i].t - ce).squaredNorm();
  }
  sigma /= static_cast<double>(n);
  Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  // collinear (or coincident) positions leave the rotation underdetermined
  PROGSLAM_CHECK(spread > 1e-18 &&
                     svd.singularValues()[1] >
                         1e-9 * std::max(svd.singularValues()[0], 1e-300),
                 ErrorCode::DegenerateConfiguration,
                 "degenerate trajectory for alignment");
  Mat3 s = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0)
    s(2, 2) = -1.0;
  Pose g;
  g.R = svd.matrixU() * s * svd.matrixV().transpose();
  g.t = cg - g.R * ce;
  return g;
}

struct AteResult {
  double mean_cm = 0.0;
  double rmse_cm = 0.0;
  Pose alignment;
};

// Absolute trajectory error after rigid alignment, reported in
// centimeters.
inline AteResult ate(const std::vector<Pose>& est, const std::vector<Pose>& gt) {
  AteResult out;
  out.alignment = align_trajectories(est, gt);
  double sum = 0.0, sum2 = 0.0;
  for (size_t i = 0; i < est.size(); ++i) {
    double e = (out.alignment.apply(est[i].t) - gt[i].t).norm();
    sum += e;
    sum2 += e * e;
  }
  double n = static_cast<double>(est.size());
  out.mean_cm = 100.0 * sum / n;
  out.rmse_cm = 100.0 * std::sqrt(sum2 / n);
  return out;
}

}  // namespace progslam
