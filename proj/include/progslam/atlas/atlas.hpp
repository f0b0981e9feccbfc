#pragma once

#include "progslam/core/types.hpp"
#include "progslam/field/local_field.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <vector>

namespace progslam {

struct AtlasConfig {
  double local_side = 6.0;
  double margin = 0.5;
  int overlap_keyframes = 5;
  double idw_power = 2.0;
  double idw_epsilon = 1e-6;

  void validate() const {
    PROGSLAM_CHECK(margin > 0 && local_side > 2.0 * margin,
                   ErrorCode::ValidationError,
                   "atlas requires local_side > 2*margin > 0");
    PROGSLAM_CHECK(overlap_keyframes >= 1, ErrorCode::ValidationError,
                   "atlas.overlap_keyframes >= 1");
    PROGSLAM_CHECK(idw_power >= 1.0, ErrorCode::ValidationError,
                   "atlas.idw_power >= 1");
    PROGSLAM_CHECK(idw_epsilon > 0.0, ErrorCode::ValidationError,
                   "atlas.idw_epsilon > 0");
  }
};

struct FieldSample {
  double sdf = 0.0;  // meters
  Vec3 color = Vec3::Zero();
  VecX latent;
};

// Expected allocated-field count for a straight-line trajectory of length
// L: fields are centered at the camera when it reaches the margin of the
// active one, so allocation centers are spaced local_side/2 - margin
// apart.
inline int expected_field_count(double trajectory_length,
                                const AtlasConfig& cfg) {
  double spacing = 0.5 * cfg.local_side - cfg.margin;
  return 1 + static_cast<int>(std::floor(trajectory_length / spacing));
}

// Progressive scene representation: an ordered collection of local
// fields. Exactly one field is active (unfrozen) during normal operation;
// the rest are frozen. Fields are allocated when the camera approaches
// the active field's bounds and no earlier field covers it, and frozen
// fields covering the camera are reactivated instead.
class FieldAtlas {
 public:
  FieldAtlas() = default;
  FieldAtlas(const AtlasConfig& cfg, const FieldConfig& field_cfg,
             uint64_t seed)
      : cfg_(cfg), field_cfg_(field_cfg), seed_(seed) {
    cfg_.validate();
  }

  const AtlasConfig& config() const { return cfg_; }
  const FieldConfig& field_config() const { return field_cfg_; }
  size_t size() const { return fields_.size(); }
  bool empty() const { return fields_.empty(); }
  int active_id() const { return active_id_; }

  LocalField& field(int id) { return fields_.at(id); }
  const LocalField& field(int id) const { return fields_.at(id); }
  LocalField& active_field() { return fields_.at(active_id_); }
  const LocalField& active_field() const { return fields_.at(active_id_); }

  const std::set<int>& supervision_set(int id) const {
    return supervision_.at(id);
  }
  void add_supervision_keyframe(int field_id, int keyframe_id) {
    supervision_.at(field_id).insert(keyframe_id);
  }

  bool contains(const Vec3& x) const {
    for (const auto& f : fields_)
      if (f.bounds().contains(x)) return true;
    return false;
  }

  // True when the camera is within `margin` of (or outside) the active
  // bounds and no existing field still covers the position with more than
  // `margin` clearance.
  bool should_allocate(const Vec3& camera_position) const {
    PROGSLAM_CHECK(!fields_.empty(), ErrorCode::ValidationError,
                   "should_allocate on empty atlas");
    for (const auto& f : fields_) {
      if (f.bounds().contains_with_clearance(camera_position, cfg_.margin))
        return false;
    }
    return true;
  }

  // True when a non-active field covers the position with clearance while
  // the active one no longer does.
  bool should_reactivate(const Vec3& camera_position) const {
    if (fields_.empty()) return false;
    if (active_field().bounds().contains_with_clearance(camera_position,
                                                        cfg_.margin))
      return false;
    for (const auto& f : fields_) {
      if (f.id() != active_id_ &&
          f.bounds().contains_with_clearance(camera_position, cfg_.margin))
        return true;
    }
    return false;
  }

  // Allocates a fresh field centered at `center`, freezes the previously
  // active one, and seeds the new supervision set with the carried
  // keyframe ids.
  int allocate_field(const Vec3& center, const std::vector<int>& carried_keyframes) {
    if (!fields_.empty()) {
      PROGSLAM_CHECK(active_id_ >= 0, ErrorCode::AllocationWhileInactive,
                     "no active field to freeze");
      active_field().set_frozen(true);
    }
    int id = static_cast<int>(fields_.size());
    fields_.emplace_back(id, center, cfg_.local_side, field_cfg_,
                         Rng::keyed(seed_, 0xf1e1d, id));
    supervision_.emplace_back(carried_keyframes.begin(), carried_keyframes.end());
    active_id_ = id;
    touch(id);
    return id;
  }

  // Reactivates the most-recently-used frozen field covering the
  // position.
  int reactivate(const Vec3& camera_position) {
    int best = -1;
    long best_rank = -1;
    for (const auto& f : fields_) {
      if (f.id() == active_id_) continue;
      if (f.bounds().contains_with_clearance(camera_position, cfg_.margin)) {
        long rank = use_rank_[f.id()];
        if (rank > best_rank) {
          best_rank = rank;
          best = f.id();
        }
      }
    }
    PROGSLAM_CHECK(best >= 0, ErrorCode::NoCoveringField,
                   "no frozen field covers the position");
    active_field().set_frozen(true);
    fields_[best].set_frozen(false);
    active_id_ = best;
    touch(best);
    return best;
  }

  std::vector<int> covering_fields(const Vec3& x) const {
    std::vector<int> ids;
    for (const auto& f : fields_)
      if (f.bounds().contains(x)) ids.push_back(f.id());
    return ids;
  }

  // Inverse-distance-weighted fusion over all covering fields. A single
  // covering field reproduces its direct query bit-exactly.
  FieldSample fused_query(const Vec3& x) const {
    std::vector<int> ids = covering_fields(x);
    PROGSLAM_CHECK(!ids.empty(), ErrorCode::UncoveredPoint,
                   "no field covers the query point");
    double wsum = 0.0;
    std::vector<double> w(ids.size());
    for (size_t k = 0; k < ids.size(); ++k) {
      double d = (x - fields_[ids[k]].center()).norm();
      w[k] = 1.0 / (std::pow(d, cfg_.idw_power) + cfg_.idw_epsilon);
      wsum += w[k];
    }
    FieldSample out;
    out.latent = VecX::Zero(field_cfg_.latent_dim);
    for (size_t k = 0; k < ids.size(); ++k) {
      const LocalField& f = fields_[ids[k]];
      auto geo = f.query_geometry(x);
      Vec3 rgb = f.query_color(x, geo.latent);
      double u = w[k] / wsum;
      out.sdf += u * geo.sdf;
      out.color += u * rgb;
      out.latent += u * geo.latent;
    }
    return out;
  }

  Aabb coverage_bounds() const {
    PROGSLAM_CHECK(!fields_.empty(), ErrorCode::ValidationError,
                   "coverage_bounds on empty atlas");
    Aabb box;
    for (const auto& f : fields_) box.expand(f.bounds());
    return box;
  }

  void touch(int id) { use_rank_[id] = ++use_counter_; }

  // Record of parameter hashes taken when fields freeze; used to assert
  // the frozen-field contract at the end of a run.
  void record_freeze_hashes() {
    for (const auto& f : fields_)
      if (f.frozen()) freeze_hashes_[f.id()] = f.param_hash();
  }
  const std::map<int, uint64_t>& freeze_hashes() const { return freeze_hashes_; }

  bool frozen_fields_intact() const {
    for (const auto& [id, h] : freeze_hashes_) {
      if (fields_[id].frozen() && fields_[id].param_hash() != h) return false;
    }
    return true;
  }
  // Re-records hashes for fields whose frozen state changed (reactivation
  // legitimately unfreezes and later refreezes with new parameters).
  void refresh_freeze_hashes() {
    for (auto it = freeze_hashes_.begin(); it != freeze_hashes_.end();) {
      if (!fields_[it->first].frozen())
        it = freeze_hashes_.erase(it);
      else
        ++it;
    }
    for (const auto& f : fields_) {
      if (f.frozen() && !freeze_hashes_.count(f.id()))
        freeze_hashes_[f.id()] = f.param_hash();
    }
  }

  // --- manifest + checkpoints ----------------------------------------

  // Writes `manifest.txt` plus one binary checkpoint per field into dir.
  void save(const std::string& dir) const;
  static FieldAtlas load(const std::string& dir);

  std::vector<LocalField>& fields() { return fields_; }
  const std::vector<LocalField>& fields() const { return fields_; }

 private:
  AtlasConfig cfg_;
  FieldConfig field_cfg_;
  uint64_t seed_ = 0;
  std::vector<LocalField> fields_;
  std::vector<std::set<int>> supervision_;
  std::map<int, long> use_rank_;
  long use_counter_ = 0;
  int active_id_ = -1;
  std::map<int, uint64_t> freeze_hashes_;
};

inline void FieldAtlas::save(const std::string& dir) const {
  std::ofstream manifest(dir + "/manifest.txt");
  PROGSLAM_CHECK(manifest.good(), ErrorCode::IoError,
                 "cannot write atlas manifest in " + dir);
  manifest.precision(17);
  manifest << "fields " << fields_.size() << " active " << active_id_ << '\n';
  for (const auto& f : fields_) {
    std::string name = "field_" + std::to_string(f.id()) + ".bin";
    manifest << f.id() << ' ' << f.center().transpose() << ' '
             << f.bounds().min.transpose() << ' ' << f.bounds().max.transpose()
             << ' ' << (f.frozen() ? 1 : 0) << ' ' << f.param_count() << ' '
             << name << '\n';
    std::ofstream ck(dir + "/" + name, std::ios::binary);
    PROGSLAM_CHECK(ck.good(), ErrorCode::IoError, "cannot write " + name);
    f.serialize(ck);
  }
  std::ofstream meta(dir + "/atlas_config.txt");
  meta.precision(17);
  meta << cfg_.local_side << ' ' << cfg_.margin << ' ' << cfg_.overlap_keyframes
       << ' ' << cfg_.idw_power << ' ' << cfg_.idw_epsilon << ' ' << seed_
       << '\n';
}

inline FieldAtlas FieldAtlas::load(const std::string& dir) {
  std::ifstream meta(dir + "/atlas_config.txt");
  PROGSLAM_CHECK(meta.good(), ErrorCode::IoError,
                 "missing atlas_config.txt in " + dir);
  AtlasConfig cfg;
  uint64_t seed = 0;
  meta >> cfg.local_side >> cfg.margin >> cfg.overlap_keyframes >>
      cfg.idw_power >> cfg.idw_epsilon >> seed;
  std::ifstream manifest(dir + "/manifest.txt");
  PROGSLAM_CHECK(manifest.good(), ErrorCode::IoError,
                 "missing manifest.txt in " + dir);
  std::string tok;
  size_t count = 0;
  int active = -1;
  manifest >> tok >> count >> tok >> active;
  FieldAtlas atlas;
  atlas.cfg_ = cfg;
  atlas.seed_ = seed;
  atlas.active_id_ = active;
  for (size_t i = 0; i < count; ++i) {
    int id, frozen, nparams;
    Vec3 c, bmin, bmax;
    std::string name;
    manifest >> id >> c.x() >> c.y() >> c.z() >> bmin.x() >> bmin.y() >>
        bmin.z() >> bmax.x() >> bmax.y() >> bmax.z() >> frozen >> nparams >>
        name;
    PROGSLAM_CHECK(manifest.good(), ErrorCode::ParseError,
                   "bad manifest line in " + dir);
    std::ifstream ck(dir + "/" + name, std::ios::binary);
    PROGSLAM_CHECK(ck.good(), ErrorCode::IoError, "missing checkpoint " + name);
    LocalField f;
    f.deserialize(ck);
    atlas.fields_.push_back(std::move(f));
    atlas.supervision_.emplace_back();
    atlas.touch(id);
  }
  if (!atlas.fields_.empty())
    atlas.field_cfg_ = atlas.fields_.front().config();
  return atlas;
}

}  // namespace progslam
