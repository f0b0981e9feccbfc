#pragma once

#include "progslam/core/hash.hpp"
#include "progslam/core/rng.hpp"
#include "progslam/core/types.hpp"
#include "progslam/encoding/one_blob.hpp"
#include "progslam/encoding/tri_plane.hpp"
#include "progslam/field/mlp.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace progslam {

struct FieldConfig {
  double coarse_cell = 0.24;
  double fine_cell = 0.06;
  int channels = 8;
  int hidden = 32;
  int latent_dim = 16;
  OneBlobConfig one_blob;
  double truncation = 0.1;
  double beta_init = 0.1;
  double plane_init_scale = 1e-4;
  bool use_one_blob = true;  // off = tri-planes only (joint-encoding ablation)

  void validate() const {
    PROGSLAM_CHECK(coarse_cell > 0 && fine_cell > 0, ErrorCode::ValidationError,
                   "plane cell sizes must be positive");
    PROGSLAM_CHECK(channels >= 1, ErrorCode::ValidationError, "channels >= 1");
    PROGSLAM_CHECK(hidden >= 1 && latent_dim >= 1, ErrorCode::ValidationError,
                   "decoder widths must be positive");
    PROGSLAM_CHECK(truncation > 0, ErrorCode::ValidationError,
                   "truncation > 0");
    PROGSLAM_CHECK(beta_init > 0, ErrorCode::ValidationError, "beta > 0");
    one_blob.validate();
  }

  int encoding_dim() const { return use_one_blob ? one_blob.output_dim() : 0; }
  int geo_input_dim() const { return encoding_dim() + 2 * channels; }
  int color_input_dim() const {
    return encoding_dim() + latent_dim + 2 * channels;
  }
};

inline double logistic(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                : std::exp(z) / (1.0 + std::exp(z));
}

// One local scene representation: tri-planes plus one-blob coordinate
// input feeding a geometry decoder (SDF + latent code) and a color
// decoder, with a learnable surface sharpness beta.
//
// The geometry decoder's raw first output is the SDF in truncation units;
// queries report it in meters (raw * truncation). The raw value is what
// the truncated-SDF losses supervise against (D - d) / tr.
//
// Parameter flattening order: the 12 planes (coarse_geo xy,xz,yz, fine_geo
// xy,xz,yz, coarse_app..., fine_app...., each cell-major with channels
// fastest), geometry decoder layers (W column-major then b, per layer),
// color decoder layers, log(beta).
class LocalField {
 public:
  LocalField() = default;

  LocalField(int id, const Vec3& center, double side, const FieldConfig& cfg,
             Rng rng)
      : id_(id), center_(center), cfg_(cfg) {
    cfg_.validate();
    bounds_ = Aabb::cube(center, side);
    planes_ = TriPlaneSet(bounds_, cfg.coarse_cell, cfg.fine_cell, cfg.channels);
    planes_.for_each_plane([&](FeaturePlane& p) {
      for (Eigen::Index i = 0; i < p.values().size(); ++i)
        p.values().data()[i] =
            rng.uniform(-cfg.plane_init_scale, cfg.plane_init_scale);
    });
    geo_decoder_ = MlpDecoder(
        {cfg_.geo_input_dim(), cfg.hidden, 1 + cfg.latent_dim}, rng);
    color_decoder_ = MlpDecoder({cfg_.color_input_dim(), cfg.hidden, 3}, rng);
    // Free-space prior: raw SDF output starts at +1 truncation unit.
    geo_decoder_.layer(geo_decoder_.layer_count() - 1).b[0] = 1.0;
    log_beta_ = std::log(cfg.beta_init);
    init_layout();
  }

  int id() const { return id_; }
  const Vec3& center() const { return center_; }
  const Aabb& bounds() const { return bounds_; }
  const FieldConfig& config() const { return cfg_; }
  bool frozen() const { return frozen_; }
  void set_frozen(bool f) { frozen_ = f; }
  double beta() const { return std::exp(log_beta_); }
  double log_beta() const { return log_beta_; }
  double truncation() const { return cfg_.truncation; }

  TriPlaneSet& planes() { return planes_; }
  const TriPlaneSet& planes() const { return planes_; }
  MlpDecoder& geo_decoder() { return geo_decoder_; }
  const MlpDecoder& geo_decoder() const { return geo_decoder_; }
  MlpDecoder& color_decoder() { return color_decoder_; }
  const MlpDecoder& color_decoder() const { return color_decoder_; }

  Vec3 normalize_point(const Vec3& x) const {
    return (x - bounds_.min).cwiseQuotient(bounds_.extent());
  }

  // Geometry decoder input at x: [one-blob(x_norm); tri-plane geometry
  // feature].
  VecX geo_input(const Vec3& x) const {
    VecX in(cfg_.geo_input_dim());
    int enc = cfg_.encoding_dim();
    if (cfg_.use_one_blob)
      in.head(enc) = one_blob_encode(normalize_point(x), cfg_.one_blob);
    in.tail(planes_.feature_dim()) =
        group_feature(planes_.coarse_geo, planes_.fine_geo, x);
    return in;
  }

  struct GeometrySample {
    VecX latent;
    double sdf = 0.0;  // meters
  };

  GeometrySample query_geometry(const Vec3& x) const {
    PROGSLAM_CHECK(bounds_.contains(x), ErrorCode::OutOfBounds,
                   "field query outside bounds");
    VecX out = geo_decoder_.forward1(geo_input(x));
    return {out.tail(cfg_.latent_dim), out[0] * cfg_.truncation};
  }

  Vec3 query_color(const Vec3& x, const VecX& latent) const {
    PROGSLAM_CHECK(bounds_.contains(x), ErrorCode::OutOfBounds,
                   "field query outside bounds");
    PROGSLAM_CHECK(latent.size() == cfg_.latent_dim, ErrorCode::LengthMismatch,
                   "latent size mismatch");
    VecX in(cfg_.color_input_dim());
    int enc = cfg_.encoding_dim();
    if (cfg_.use_one_blob)
      in.head(enc) = one_blob_encode(normalize_point(x), cfg_.one_blob);
    in.segment(enc, cfg_.latent_dim) = latent;
    in.tail(planes_.feature_dim()) =
        group_feature(planes_.coarse_app, planes_.fine_app, x);
    VecX out = color_decoder_.forward1(in);
    return {logistic(out[0]), logistic(out[1]), logistic(out[2])};
  }

  // --- flat parameter interface -------------------------------------

  int param_count() const { return layout_.total; }
  ptrdiff_t plane_param_count() const { return layout_.geo_mlp; }
  ptrdiff_t geo_mlp_offset() const { return layout_.geo_mlp; }
  ptrdiff_t color_mlp_offset() const { return layout_.color_mlp; }
  ptrdiff_t log_beta_offset() const { return layout_.log_beta; }
  ptrdiff_t plane_offset(int k) const { return layout_.plane[k]; }

  void param_vector_into(VecX& out) const {
    out.resize(layout_.total);
    double* dst = out.data();
    int k = 0;
    planes_.for_each_plane([&](const FeaturePlane& p) {
      std::memcpy(dst + layout_.plane[k], p.values().data(),
                  sizeof(double) * p.value_count());
      ++k;
    });
    geo_decoder_.flatten_into(dst + layout_.geo_mlp);
    color_decoder_.flatten_into(dst + layout_.color_mlp);
    dst[layout_.log_beta] = log_beta_;
  }

  VecX param_vector() const {
    VecX out;
    param_vector_into(out);
    return out;
  }

  void set_params(const VecX& params) {
    PROGSLAM_CHECK(params.size() == layout_.total, ErrorCode::LengthMismatch,
                   "parameter vector length mismatch");
    const double* src = params.data();
    int k = 0;
    planes_.for_each_plane([&](FeaturePlane& p) {
      std::memcpy(p.values().data(), src + layout_.plane[k],
                  sizeof(double) * p.value_count());
      ++k;
    });
    geo_decoder_.unflatten_from(src + layout_.geo_mlp);
    color_decoder_.unflatten_from(src + layout_.color_mlp);
    log_beta_ = src[layout_.log_beta];
  }

  void apply_update(const VecX& delta) {
    PROGSLAM_CHECK(!frozen_, ErrorCode::FrozenField,
                   "cannot update a frozen field");
    PROGSLAM_CHECK(delta.size() == layout_.total, ErrorCode::LengthMismatch,
                   "update length mismatch");
    VecX p;
    param_vector_into(p);
    p += delta;
    set_params(p);
  }

  uint64_t param_hash() const { return hash_vector(param_vector()); }

  // --- checkpoint I/O -------------------------------------------------

  void serialize(std::ostream& out) const {
    int32_t id32 = id_;
    uint8_t fr = frozen_ ? 1 : 0;
    out.write(reinterpret_cast<const char*>(&id32), sizeof(id32));
    out.write(reinterpret_cast<const char*>(center_.data()), sizeof(double) * 3);
    out.write(reinterpret_cast<const char*>(bounds_.min.data()),
              sizeof(double) * 3);
    out.write(reinterpret_cast<const char*>(bounds_.max.data()),
              sizeof(double) * 3);
    out.write(reinterpret_cast<const char*>(&fr), sizeof(fr));
    out.write(reinterpret_cast<const char*>(&log_beta_), sizeof(log_beta_));
    double cfgvals[6] = {cfg_.coarse_cell, cfg_.fine_cell,
                         static_cast<double>(cfg_.channels),
                         static_cast<double>(cfg_.hidden),
                         static_cast<double>(cfg_.latent_dim),
                         cfg_.truncation};
    out.write(reinterpret_cast<const char*>(cfgvals), sizeof(cfgvals));
    int32_t ob[2] = {cfg_.one_blob.bins, cfg_.use_one_blob ? 1 : 0};
    out.write(reinterpret_cast<const char*>(ob), sizeof(ob));
    out.write(reinterpret_cast<const char*>(&cfg_.one_blob.kernel_sigma),
              sizeof(double));
    planes_.for_each_plane([&](const FeaturePlane& p) { p.serialize(out); });
    geo_decoder_.serialize(out);
    color_decoder_.serialize(out);
  }

  void deserialize(std::istream& in) {
    int32_t id32;
    uint8_t fr;
    in.read(reinterpret_cast<char*>(&id32), sizeof(id32));
    in.read(reinterpret_cast<char*>(center_.data()), sizeof(double) * 3);
    in.read(reinterpret_cast<char*>(bounds_.min.data()), sizeof(double) * 3);
    in.read(reinterpret_cast<char*>(bounds_.max.data()), sizeof(double) * 3);
    in.read(reinterpret_cast<char*>(&fr), sizeof(fr));
    in.read(reinterpret_cast<char*>(&log_beta_), sizeof(log_beta_));
    double cfgvals[6];
    in.read(reinterpret_cast<char*>(cfgvals), sizeof(cfgvals));
    int32_t ob[2];
    in.read(reinterpret_cast<char*>(ob), sizeof(ob));
    in.read(reinterpret_cast<char*>(&cfg_.one_blob.kernel_sigma),
            sizeof(double));
    PROGSLAM_CHECK(in.good(), ErrorCode::IoError, "truncated field header");
    id_ = id32;
    frozen_ = fr != 0;
    cfg_.coarse_cell = cfgvals[0];
    cfg_.fine_cell = cfgvals[1];
    cfg_.channels = static_cast<int>(cfgvals[2]);
    cfg_.hidden = static_cast<int>(cfgvals[3]);
    cfg_.latent_dim = static_cast<int>(cfgvals[4]);
    cfg_.truncation = cfgvals[5];
    cfg_.one_blob.bins = ob[0];
    cfg_.use_one_blob = ob[1] != 0;
    planes_.bounds = bounds_;
    planes_.for_each_plane([&](FeaturePlane& p) { p.deserialize(in); });
    geo_decoder_.deserialize(in);
    color_decoder_.deserialize(in);
    init_layout();
  }

 private:
  struct ParamLayout {
    std::array<ptrdiff_t, 12> plane{};
    ptrdiff_t geo_mlp = 0;
    ptrdiff_t color_mlp = 0;
    ptrdiff_t log_beta = 0;
    int total = 0;
  };

  void init_layout() {
    ptrdiff_t off = 0;
    int k = 0;
    planes_.for_each_plane([&](const FeaturePlane& p) {
      layout_.plane[k++] = off;
      off += p.value_count();
    });
    layout_.geo_mlp = off;
    off += geo_decoder_.param_count();
    layout_.color_mlp = off;
    off += color_decoder_.param_count();
    layout_.log_beta = off;
    off += 1;
    layout_.total = static_cast<int>(off);
  }

  int id_ = -1;
  Vec3 center_ = Vec3::Zero();
  Aabb bounds_;
  FieldConfig cfg_;
  TriPlaneSet planes_;
  MlpDecoder geo_decoder_;
  MlpDecoder color_decoder_;
  double log_beta_ = std::log(0.1);
  bool frozen_ = false;
  ParamLayout layout_;
};

// Gradient interface used by the finite-difference harness: a loss that
// can report its value and accumulate an analytic gradient w.r.t. the
// field's flat parameter vector.
struct DifferentiableLoss {
  virtual ~DifferentiableLoss() = default;
  virtual double value(const LocalField& field) const = 0;
  virtual void accumulate_gradient(const LocalField& field,
                                   VecX& grad) const = 0;
};

inline VecX field_gradients(const LocalField& field,
                            const DifferentiableLoss& loss) {
  double v = loss.value(field);
  PROGSLAM_CHECK(std::isfinite(v), ErrorCode::NonFiniteLoss,
                 "loss is not finite");
  VecX grad = VecX::Zero(field.param_count());
  loss.accumulate_gradient(field, grad);
  return grad;
}

}  // namespace progslam
