#pragma once

#include "progslam/geom/camera.hpp"
#include "progslam/geom/trajectory.hpp"
#include "progslam/io/image.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace progslam {

struct Frame {
  ImageRgb8 rgb;
  ImageDepth16 depth;
};

struct LandmarkObservation {
  int frame = 0;
  int landmark = 0;
  Vec2 pixel = Vec2::Zero();
};

// An RGB-D sequence with ground truth: frames, trajectory, landmarks and
// their per-frame observations. Depth is stored quantized to millimeters
// so in-memory runs see exactly the on-disk data.
struct DatasetBundle {
  CameraIntrinsics intr;
  std::vector<Frame> frames;
  Trajectory gt;
  std::vector<Vec3> landmarks;
  std::vector<LandmarkObservation> observations;

  size_t size() const { return frames.size(); }

  std::vector<LandmarkObservation> observations_of(int frame) const {
    std::vector<LandmarkObservation> out;
    for (const auto& o : observations)
      if (o.frame == frame) out.push_back(o);
    return out;
  }
};

namespace detail {

inline std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.png", index);
  return buf;
}

}  // namespace detail

// Layout: rgb/%06d.png (8-bit), depth/%06d.png (16-bit millimeters, 0 =
// invalid), groundtruth.txt (TUM), intrinsics.txt (fx fy cx cy width
// height), landmarks.txt (id x y z), observations.txt (frame_id
// landmark_id u v).
inline void write_dataset(const DatasetBundle& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "rgb");
  fs::create_directories(fs::path(dir) / "depth");
  for (size_t i = 0; i < ds.frames.size(); ++i) {
    png_write_rgb8(dir + "/rgb/" + detail::frame_name(static_cast<int>(i)),
                   ds.frames[i].rgb);
    png_write_gray16(dir + "/depth/" + detail::frame_name(static_cast<int>(i)),
                     ds.frames[i].depth);
  }
  write_trajectory_tum(dir + "/groundtruth.txt", ds.gt);
  {
    std::ofstream out(dir + "/intrinsics.txt");
    PROGSLAM_CHECK(out.good(), ErrorCode::IoError, "cannot write intrinsics");
    out.precision(17);
    out << ds.intr.fx << ' ' << ds.intr.fy << ' ' << ds.intr.cx << ' '
        << ds.intr.cy << ' ' << ds.intr.width << ' ' << ds.intr.height << '\n';
  }
  {
    std::ofstream out(dir + "/landmarks.txt");
    out.precision(17);
    for (size_t i = 0; i < ds.landmarks.size(); ++i)
      out << i << ' ' << ds.landmarks[i].x() << ' ' << ds.landmarks[i].y()
          << ' ' << ds.landmarks[i].z() << '\n';
  }
  {
    std::ofstream out(dir + "/observations.txt");
    out.precision(17);
    for (const auto& o : ds.observations)
      out << o.frame << ' ' << o.landmark << ' ' << o.pixel.x() << ' '
          << o.pixel.y() << '\n';
  }
}

inline DatasetBundle read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  DatasetBundle ds;
  {
    std::ifstream in(dir + "/intrinsics.txt");
    PROGSLAM_CHECK(in.good(), ErrorCode::IoError,
                   "missing intrinsics.txt in " + dir);
    in >> ds.intr.fx >> ds.intr.fy >> ds.intr.cx >> ds.intr.cy >>
        ds.intr.width >> ds.intr.height;
    PROGSLAM_CHECK(in.good(), ErrorCode::ParseError, "bad intrinsics.txt");
    ds.intr.validate();
  }
  if (fs::exists(dir + "/groundtruth.txt"))
    ds.gt = read_trajectory_tum(dir + "/groundtruth.txt");
  for (int i = 0;; ++i) {
    std::string rgb_path = dir + "/rgb/" + detail::frame_name(i);
    if (!fs::exists(rgb_path)) break;
    Frame f;
    f.rgb = png_read_rgb8(rgb_path);
    f.depth = png_read_gray16(dir + "/depth/" + detail::frame_name(i));
    PROGSLAM_CHECK(f.rgb.width == ds.intr.width && f.rgb.height == ds.intr.height,
                   ErrorCode::IoError, "frame size mismatch in " + dir);
    ds.frames.push_back(std::move(f));
  }
  PROGSLAM_CHECK(!ds.frames.empty(), ErrorCode::IoError,
                 "no frames found in " + dir);
  if (fs::exists(dir + "/landmarks.txt")) {
    std::ifstream in(dir + "/landmarks.txt");
    int id;
    Vec3 p;
    while (in >> id >> p.x() >> p.y() >> p.z()) {
      if (static_cast<size_t>(id) >= ds.landmarks.size())
        ds.landmarks.resize(id + 1, Vec3::Zero());
      ds.landmarks[id] = p;
    }
  }
  if (fs::exists(dir + "/observations.txt")) {
    std::ifstream in(dir + "/observations.txt");
    LandmarkObservation o;
    while (in >> o.frame >> o.landmark >> o.pixel.x() >> o.pixel.y())
      ds.observations.push_back(o);
  }
  return ds;
}

}  // namespace progslam
