#pragma once

#include "progslam/core/types.hpp"
#include "progslam/core/rng.hpp"

#include <vector>

namespace progslam {

struct MlpLayer {
  MatX W;  // out x in
  VecX b;
};

struct MlpCache {
  // activations[0] is the input batch; activations[i] the post-ReLU output
  // of layer i-1. One column per sample.
  std::vector<MatX> activations;
};

// Small fully connected network: ReLU on hidden layers, linear output.
class MlpDecoder {
 public:
  MlpDecoder() = default;

  MlpDecoder(const std::vector<int>& widths, Rng& rng) {
    PROGSLAM_CHECK(widths.size() >= 2, ErrorCode::ValidationError,
                   "decoder needs at least input and output widths");
    layers_.resize(widths.size() - 1);
    for (size_t i = 0; i + 1 < widths.size(); ++i) {
      int in = widths[i], out = widths[i + 1];
      layers_[i].W.resize(out, in);
      // Kaiming-style init scaled by fan-in.
      double s = std::sqrt(2.0 / in);
      for (Eigen::Index k = 0; k < layers_[i].W.size(); ++k)
        layers_[i].W.data()[k] = s * rng.normal();
      layers_[i].b = VecX::Zero(out);
    }
  }

  int input_dim() const { return static_cast<int>(layers_.front().W.cols()); }
  int output_dim() const { return static_cast<int>(layers_.back().W.rows()); }
  size_t layer_count() const { return layers_.size(); }
  MlpLayer& layer(size_t i) { return layers_[i]; }
  const MlpLayer& layer(size_t i) const { return layers_[i]; }

  int param_count() const {
    int n = 0;
    for (const auto& l : layers_) n += static_cast<int>(l.W.size() + l.b.size());
    return n;
  }

  // Batched forward; one column per sample.
  MatX forward(const MatX& input, MlpCache* cache = nullptr) const {
    PROGSLAM_CHECK(input.rows() == layers_.front().W.cols(),
                   ErrorCode::LengthMismatch, "decoder input width mismatch");
    if (cache) {
      cache->activations.clear();
      cache->activations.push_back(input);
    }
    MatX a = input;
    for (size_t i = 0; i < layers_.size(); ++i) {
      MatX z = (layers_[i].W * a).colwise() + layers_[i].b;
      if (i + 1 < layers_.size()) {
        a = z.cwiseMax(0.0);
        if (cache) cache->activations.push_back(a);
      } else {
        a = std::move(z);
      }
    }
    return a;
  }

  VecX forward1(const VecX& input) const { return forward(MatX(input)); }

  // Backpropagates d_out (out_dim x N). Weight and bias gradients are
  // accumulated into `grad` at `offset` using the flatten layout; the
  // returned matrix is the gradient w.r.t. the input batch.
  MatX backward(const MlpCache& cache, const MatX& d_out, double* grad,
                ptrdiff_t offset) const {
    MatX delta = d_out;
    for (size_t li = layers_.size(); li-- > 0;) {
      const MlpLayer& l = layers_[li];
      const MatX& a_in = cache.activations[li];
      if (grad) {
        ptrdiff_t off = offset + layer_offset(li);
        Eigen::Map<MatX> gw(grad + off, l.W.rows(), l.W.cols());
        gw.noalias() += delta * a_in.transpose();
        Eigen::Map<VecX> gb(grad + off + l.W.size(), l.b.size());
        gb += delta.rowwise().sum();
      }
      MatX d_in = l.W.transpose() * delta;
      if (li > 0) {
        // ReLU mask from the cached post-activation.
        d_in.array() *= (cache.activations[li].array() > 0.0).cast<double>();
      }
      delta = std::move(d_in);
    }
    return delta;
  }

  // Flatten layout: per layer, W (column-major) then b.
  ptrdiff_t layer_offset(size_t li) const {
    ptrdiff_t off = 0;
    for (size_t i = 0; i < li; ++i)
      off += layers_[i].W.size() + layers_[i].b.size();
    return off;
  }

  void flatten_into(double* dst) const {
    for (const auto& l : layers_) {
      std::memcpy(dst, l.W.data(), sizeof(double) * l.W.size());
      dst += l.W.size();
      std::memcpy(dst, l.b.data(), sizeof(double) * l.b.size());
      dst += l.b.size();
    }
  }

  void unflatten_from(const double* src) {
    for (auto& l : layers_) {
      std::memcpy(l.W.data(), src, sizeof(double) * l.W.size());
      src += l.W.size();
      std::memcpy(l.b.data(), src, sizeof(double) * l.b.size());
      src += l.b.size();
    }
  }

  void serialize(std::ostream& out) const {
    int32_t n = static_cast<int32_t>(layers_.size());
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (const auto& l : layers_) {
      int32_t dims[2] = {static_cast<int32_t>(l.W.rows()),
                         static_cast<int32_t>(l.W.cols())};
      out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
      out.write(reinterpret_cast<const char*>(l.W.data()),
                sizeof(double) * l.W.size());
      out.write(reinterpret_cast<const char*>(l.b.data()),
                sizeof(double) * l.b.size());
    }
  }

  void deserialize(std::istream& in) {
    int32_t n;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    PROGSLAM_CHECK(in.good() && n > 0, ErrorCode::IoError, "bad decoder blob");
    layers_.resize(n);
    for (auto& l : layers_) {
      int32_t dims[2];
      in.read(reinterpret_cast<char*>(dims), sizeof(dims));
      l.W.resize(dims[0], dims[1]);
      l.b.resize(dims[0]);
      in.read(reinterpret_cast<char*>(l.W.data()), sizeof(double) * l.W.size());
      in.read(reinterpret_cast<char*>(l.b.data()), sizeof(double) * l.b.size());
    }
    PROGSLAM_CHECK(in.good(), ErrorCode::IoError, "truncated decoder blob");
  }

 private:
  std::vector<MlpLayer> layers_;
};

}  // namespace progslam
