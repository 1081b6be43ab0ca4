#include "motionhint/trajectory.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace motionhint {
namespace {

constexpr double kOrthoTolerance = 1e-4;

bool parse_double(std::string_view token, double& out) {
  // strtod accepts hex floats and inf/nan spellings; those are screened by the caller.
  std::string buffer(token);
  char* end = nullptr;
  out = std::strtod(buffer.c_str(), &end);
  return end == buffer.c_str() + buffer.size();
}

Matrix3d nearest_rotation(const Matrix3d& M) {
  Eigen::JacobiSVD<Matrix3d> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3d D = Matrix3d::Identity();
  D(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * D * svd.matrixV().transpose();
}

}  // namespace

Trajectory parse_kitti_poses(std::istream& in) {
  Trajectory traj;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::vector<double> values;
    std::string token;
    while (fields >> token) {
      double v = 0.0;
      if (!parse_double(token, v)) throw ParseError("malformed number '" + token + "'", line_no);
      values.push_back(v);
    }
    if (values.empty()) continue;
    if (values.size() != 12) {
      throw ParseError("expected 12 fields, got " + std::to_string(values.size()), line_no);
    }
    for (double v : values) {
      if (!std::isfinite(v)) throw ParseError("non-finite value", line_no);
    }
    TransformSE3d T;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) T.R(r, c) = values[r * 4 + c];
      T.t(r) = values[r * 4 + 3];
    }
    if (!is_valid_transform(T, 1e-9)) {
      const double err = (T.R.transpose() * T.R - Matrix3d::Identity()).cwiseAbs().maxCoeff();
      if (err > kOrthoTolerance || T.R.determinant() <= 0.0) {
        throw ParseError("rotation block is not orthonormal", line_no);
      }
      T.R = nearest_rotation(T.R);
    }
    try {
      traj.poses.push_back(transform_to_absolute_pose(T));
    } catch (const Error& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return traj;
}

Trajectory parse_kitti_poses(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_kitti_poses(in);
}

Trajectory read_kitti_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open pose file '" + path + "'");
  return parse_kitti_poses(in);
}

void write_kitti_poses(std::ostream& out, const Trajectory& traj) {
  char buf[32];
  for (const auto& p : traj.poses) {
    const TransformSE3d T = pose_to_transform(p);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        const double v = c < 3 ? T.R(r, c) : T.t(r);
        std::snprintf(buf, sizeof(buf), "%.12e", v);
        out << buf << (r == 2 && c == 3 ? '\n' : ' ');
      }
    }
  }
}

std::string write_kitti_poses(const Trajectory& traj) {
  std::ostringstream out;
  write_kitti_poses(out, traj);
  return out.str();
}

void write_kitti_file(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write pose file '" + path + "'");
  write_kitti_poses(out, traj);
  if (!out) throw Error("failed writing pose file '" + path + "'");
}

PoseWindow centralize(const PoseWindow& window) {
  if (window.inputs.empty()) throw InvalidArgumentError("centralize: empty window");
  const std::size_t mid = window.center_index();
  const TransformSE3d anchor_inv = invert(pose_to_transform(window.inputs[mid]));
  auto recenter = [&](const Pose6d& q) {
    return transform_to_pose(compose(anchor_inv, pose_to_transform(q)));
  };
  PoseWindow out;
  out.scale_applied = window.scale_applied;
  out.inputs.reserve(window.inputs.size());
  for (const auto& q : window.inputs) out.inputs.push_back(recenter(q));
  out.inputs[mid] = Pose6d::Zero();
  out.target = recenter(window.target);
  return out;
}

PoseWindow scale_augment(const PoseWindow& window, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw InvalidArgumentError("scale factor must be positive and finite");
  }
  PoseWindow out = window;
  for (auto& q : out.inputs) q.t *= factor;
  out.target.t *= factor;
  out.scale_applied *= factor;
  return out;
}

std::vector<PoseWindow> sliding_windows(const Trajectory& traj, std::size_t window_length) {
  std::vector<PoseWindow> windows;
  if (window_length == 0 || traj.size() < window_length + 1) return windows;
  windows.reserve(traj.size() - window_length);
  for (std::size_t i = 0; i + window_length < traj.size(); ++i) {
    PoseWindow w;
    w.inputs.assign(traj.poses.begin() + static_cast<std::ptrdiff_t>(i),
                    traj.poses.begin() + static_cast<std::ptrdiff_t>(i + window_length));
    w.target = traj.poses[i + window_length];
    windows.push_back(std::move(w));
  }
  return windows;
}

std::vector<Pose6d> relative_steps(const Trajectory& traj) {
  std::vector<Pose6d> steps;
  if (traj.size() < 2) return steps;
  steps.reserve(traj.size() - 1);
  for (std::size_t i = 1; i < traj.size(); ++i) {
    steps.push_back(relative_pose(traj.poses[i - 1], traj.poses[i]));
  }
  return steps;
}

Trajectory chain_steps(const Pose6d& start, const std::vector<Pose6d>& steps,
                       double frame_period) {
  Trajectory traj;
  traj.frame_period = frame_period;
  traj.poses.reserve(steps.size() + 1);
  traj.poses.push_back(start);
  TransformSE3d T = pose_to_transform(start);
  for (const auto& s : steps) {
    T = compose(T, pose_to_transform(s));
    traj.poses.push_back(transform_to_absolute_pose(T));
  }
  return traj;
}

}  // namespace motionhint
