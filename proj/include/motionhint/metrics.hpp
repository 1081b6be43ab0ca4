#pragma once

// Trajectory accuracy: Umeyama alignment, absolute trajectory error and KITTI-style relative
// translation / rotation errors over fixed path lengths.

#include <Eigen/Core>

#include <string_view>
#include <vector>

#include "motionhint/trajectory.hpp"

namespace motionhint {

enum class AlignMode { kSim3, kSE3 };

AlignMode parse_align_mode(std::string_view s);
std::string_view to_string(AlignMode m);

/// x_ref ~= scale * rotation * x_est + translation.
struct Alignment {
  Matrix3d rotation = Matrix3d::Identity();
  Vector3d translation = Vector3d::Zero();
  double scale = 1.0;

  Vector3d apply(const Vector3d& x) const { return scale * (rotation * x) + translation; }
};

/// Least-squares similarity (or rigid, when mode is kSE3) alignment of the estimated positions
/// onto the reference positions. Throws DegeneracyError when fewer than three positions are
/// given or the positions are (nearly) collinear, and InvalidArgumentError on length mismatch.
Alignment umeyama_align(const Trajectory& est, const Trajectory& ref, AlignMode mode);

/// Applies the alignment to full poses: positions are mapped, orientations rotated.
Trajectory apply_alignment(const Trajectory& traj, const Alignment& a);

/// Per-pose translation error after alignment.
std::vector<double> ate_per_pose(const Trajectory& est, const Trajectory& ref, AlignMode mode);

/// Root-mean-square translation error after alignment, in reference units.
double ate(const Trajectory& est, const Trajectory& ref, AlignMode mode);

/// Cumulative distance travelled along the reference positions.
double path_length(const Trajectory& traj);

inline const std::vector<double>& default_segment_lengths() {
  static const std::vector<double> lengths{100, 200, 300, 400, 500, 600, 700, 800};
  return lengths;
}

struct LengthError {
  double length = 0.0;
  std::size_t spans = 0;
  double t_err_pct = 0.0;
  double r_err_deg_per_100m = 0.0;
};

struct RelativeErrors {
  std::vector<LengthError> per_length;  // only lengths with at least one span
  std::size_t spans = 0;
  double t_err_pct = 0.0;  // mean over every span of every length
  double r_err_deg_per_100m = 0.0;
};

/// For every start frame and every length L, the span ends at the first frame whose
/// cumulative reference distance reaches start + L. The error of the span is
/// (ref_first^-1 ref_last)^-1 (est_first^-1 est_last); translation error is reported in percent
/// of L, rotation error in degrees per 100 m. The estimate is used as given (no alignment).
RelativeErrors relative_errors(const Trajectory& est, const Trajectory& ref,
                               const std::vector<double>& lengths = default_segment_lengths());

struct EvalReport {
  AlignMode mode = AlignMode::kSim3;
  Alignment alignment;
  double ate_rmse = 0.0;
  std::vector<double> per_pose_error;
  RelativeErrors relative;
  double path_length = 0.0;
  std::size_t frames = 0;
};

EvalReport evaluate(const Trajectory& est, const Trajectory& ref, AlignMode mode,
                    const std::vector<double>& lengths = default_segment_lengths());

}  // namespace motionhint
