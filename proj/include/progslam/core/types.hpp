#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <cstdlib>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

namespace progslam {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using MatX = Eigen::MatrixXd;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat36 = Eigen::Matrix<double, 3, 6>;

constexpr double kInvalidDepth = 0.0;

inline bool is_finite(double v) { return std::isfinite(v); }

enum class ErrorCode {
  NonPositiveDepth,
  PixelOutOfBounds,
  OutOfUnitCube,
  OutOfBounds,
  FrozenField,
  LengthMismatch,
  NonFiniteLoss,
  NonFiniteTerm,
  NonFiniteOutput,
  EmptyBatch,
  InvalidDepth,
  RegionTooLarge,
  NoValidWarps,
  EmptyWindow,
  InsufficientKeyframes,
  NoMatches,
  TrackingDiverged,
  UncoveredPoint,
  NoCoveringField,
  AllocationWhileInactive,
  DegenerateConfiguration,
  EmptyMesh,
  NoValidPixels,
  ParseError,
  ValidationError,
  IoError,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::PixelOutOfBounds: return "PixelOutOfBounds";
    case ErrorCode::OutOfUnitCube: return "OutOfUnitCube";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::FrozenField: return "FrozenField";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NonFiniteTerm: return "NonFiniteTerm";
    case ErrorCode::NonFiniteOutput: return "NonFiniteOutput";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::InvalidDepth: return "InvalidDepth";
    case ErrorCode::RegionTooLarge: return "RegionTooLarge";
    case ErrorCode::NoValidWarps: return "NoValidWarps";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::InsufficientKeyframes: return "InsufficientKeyframes";
    case ErrorCode::NoMatches: return "NoMatches";
    case ErrorCode::TrackingDiverged: return "TrackingDiverged";
    case ErrorCode::UncoveredPoint: return "UncoveredPoint";
    case ErrorCode::NoCoveringField: return "NoCoveringField";
    case ErrorCode::AllocationWhileInactive: return "AllocationWhileInactive";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::EmptyMesh: return "EmptyMesh";
    case ErrorCode::NoValidPixels: return "NoValidPixels";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

#define PROGSLAM_CHECK(cond, code, msg) \
  do {                                  \
    if (!(cond)) ::progslam::raise(code, msg); \
  } while (0)

// Axis-aligned box in world meters.
struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  static Aabb cube(const Vec3& center, double side) {
    Aabb b;
    b.min = center - Vec3::Constant(0.5 * side);
    b.max = center + Vec3::Constant(0.5 * side);
    return b;
  }

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }

  // True if p stays at least `clearance` away from every face.
  bool contains_with_clearance(const Vec3& p, double clearance) const {
    return (p.array() >= min.array() + clearance).all() &&
           (p.array() <= max.array() - clearance).all();
  }

  Vec3 clamp(const Vec3& p) const {
    return p.cwiseMax(min).cwiseMin(max);
  }

  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }

  void expand(const Aabb& other) {
    min = min.cwiseMin(other.min);
    max = max.cwiseMax(other.max);
  }

  void expand(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }

  bool empty() const { return (min.array() > max.array()).any(); }
};

// Log levels selected through the PLG_LOG environment variable
// (error|warn|info|debug, default warn).
enum class LogLevel : int { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("PLG_LOG");
    if (!env) return LogLevel::Warn;
    std::string s(env);
    if (s == "error") return LogLevel::Error;
    if (s == "warn") return LogLevel::Warn;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
  }();
  return level;
}

template <typename... Args>
inline void log(LogLevel lvl, const char* fmt, Args... args) {
  if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
  static const char* names[] = {"E", "W", "I", "D"};
  std::fprintf(stderr, "[%s] ", names[static_cast<int>(lvl)]);
  std::fprintf(stderr, fmt, args...);
  std::fprintf(stderr, "\n");
}

inline void log(LogLevel lvl, const char* msg) { log(lvl, "%s", msg); }

}  // namespace progslam
