#pragma once

#include "progslam/geom/pose.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace progslam {

struct TrajectoryEntry {
  double timestamp = 0.0;
  Pose pose;
};

using Trajectory = std::vector<TrajectoryEntry>;

// TUM trajectory format: one line per frame,
// `timestamp tx ty tz qx qy qz qw` (quaternion w-last).
inline void write_trajectory_tum(const std::string& path,
                                 const Trajectory& traj) {
  std::ofstream out(path);
  PROGSLAM_CHECK(out.good(), ErrorCode::IoError, "cannot open " + path);
  out.precision(17);
  for (const auto& e : traj) {
    Eigen::Quaterniond q(e.pose.R);
    q.normalize();
    out << e.timestamp << ' ' << e.pose.t.x() << ' ' << e.pose.t.y() << ' '
        << e.pose.t.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' '
        << q.w() << '\n';
  }
}

inline Trajectory read_trajectory_tum(const std::string& path) {
  std::ifstream in(path);
  PROGSLAM_CHECK(in.good(), ErrorCode::IoError, "cannot open " + path);
  Trajectory traj;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    TrajectoryEntry e;
    double qx, qy, qz, qw;
    if (!(ss >> e.timestamp >> e.pose.t.x() >> e.pose.t.y() >> e.pose.t.z() >>
          qx >> qy >> qz >> qw)) {
      raise(ErrorCode::ParseError,
            path + ":" + std::to_string(lineno) + ": bad trajectory line");
    }
    Eigen::Quaterniond q(qw, qx, qy, qz);
    q.normalize();
    e.pose.R = q.toRotationMatrix();
    traj.push_back(e);
  }
  return traj;
}

inline std::vector<Pose> trajectory_poses(const Trajectory& traj) {
  std::vector<Pose> poses;
  poses.reserve(traj.size());
  for (const auto& e : traj) poses.push_back(e.pose);
  return poses;
}

}  // namespace progslam
