#pragma once

#include "progslam/core/types.hpp"

namespace progslam {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

// First/second-moment adaptive step. Learning rates are per parameter so
// that plane and decoder blocks can run at different rates from one state.
class Adam {
 public:
  Adam() = default;

  Adam(const VecX& lr, const AdamConfig& cfg = {})
      : lr_(lr), cfg_(cfg), m_(VecX::Zero(lr.size())), v_(VecX::Zero(lr.size())) {}

  static Adam uniform(Eigen::Index n, double lr, const AdamConfig& cfg = {}) {
    return Adam(VecX::Constant(n, lr), cfg);
  }

  // Returns the descent update (already negated).
  VecX step(const VecX& grad) {
    PROGSLAM_CHECK(grad.size() == lr_.size(), ErrorCode::LengthMismatch,
                   "gradient length mismatch");
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_.array().matrix() +
         (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
    double c1 = 1.0 / (1.0 - std::pow(cfg_.beta1, t_));
    double c2 = 1.0 / (1.0 - std::pow(cfg_.beta2, t_));
    return (-lr_.array() * (m_.array() * c1) /
            ((v_.array() * c2).sqrt() + cfg_.eps))
        .matrix();
  }

  void reset() {
    m_.setZero();
    v_.setZero();
    t_ = 0;
  }

  Eigen::Index size() const { return lr_.size(); }

 private:
  VecX lr_;
  AdamConfig cfg_;
  VecX m_, v_;
  int64_t t_ = 0;
};

}  // namespace progslam
