#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "motionhint/se3.hpp"

namespace motionhint {

/// Absolute world-frame poses sampled at a uniform frame period.
struct Trajectory {
  std::vector<Pose6d> poses;
  double frame_period = 0.1;

  std::size_t size() const { return poses.size(); }
  bool empty() const { return poses.empty(); }
  const Pose6d& operator[](std::size_t i) const { return poses[i]; }
  Pose6d& operator[](std::size_t i) { return poses[i]; }
};

/// W consecutive poses plus the pose that follows them.
struct PoseWindow {
  std::vector<Pose6d> inputs;
  Pose6d target;
  double scale_applied = 1.0;

  std::size_t length() const { return inputs.size(); }
  /// Index of the anchor used by centralize().
  std::size_t center_index() const { return inputs.size() / 2; }
};

/// Parses the KITTI odometry pose format: one row-major 3x4 [R|t] per line. Rotation blocks
/// off orthonormality by up to 1e-4 are projected back onto SO(3); worse ones are rejected.
Trajectory parse_kitti_poses(std::istream& in);
Trajectory parse_kitti_poses(std::string_view text);
Trajectory read_kitti_file(const std::string& path);

void write_kitti_poses(std::ostream& out, const Trajectory& traj);
std::string write_kitti_poses(const Trajectory& traj);
void write_kitti_file(const std::string& path, const Trajectory& traj);

/// Re-expresses every pose (inputs and target) relative to the middle input pose, which
/// becomes exactly zero.
PoseWindow centralize(const PoseWindow& window);

/// Multiplies every translation by `factor`; rotations are untouched.
PoseWindow scale_augment(const PoseWindow& window, double factor);

/// All windows (inputs i..i+W-1, target i+W) in order. Empty when the trajectory is too short.
std::vector<PoseWindow> sliding_windows(const Trajectory& traj, std::size_t window_length);

/// Per-step relative poses, element i relating pose i to pose i+1.
std::vector<Pose6d> relative_steps(const Trajectory& traj);

/// Chains relative steps onto `start`. Inverse of relative_steps.
Trajectory chain_steps(const Pose6d& start, const std::vector<Pose6d>& steps,
                       double frame_period = 0.1);

}  // namespace motionhint
