#include "motionhint/metrics.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace motionhint {

AlignMode parse_align_mode(std::string_view s) {
  if (s == "sim3") return AlignMode::kSim3;
  if (s == "se3") return AlignMode::kSE3;
  throw InvalidArgumentError("unknown alignment mode '" + std::string(s) + "'");
}

std::string_view to_string(AlignMode m) { return m == AlignMode::kSim3 ? "sim3" : "se3"; }

namespace {

void check_pair(const Trajectory& est, const Trajectory& ref) {
  if (est.size() != ref.size()) {
    throw InvalidArgumentError("trajectory lengths differ: " + std::to_string(est.size()) +
                               " vs " + std::to_string(ref.size()));
  }
}

}  // namespace

Alignment umeyama_align(const Trajectory& est, const Trajectory& ref, AlignMode mode) {
  check_pair(est, ref);
  const std::size_t n = est.size();
  if (n < 3) throw DegeneracyError("alignment needs at least three poses");

  Vector3d mu_e = Vector3d::Zero(), mu_r = Vector3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mu_e += est[i].t;
    mu_r += ref[i].t;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  mu_e *= inv_n;
  mu_r *= inv_n;

  Matrix3d cov = Matrix3d::Zero();
  double var_e = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector3d de = est[i].t - mu_e;
    cov += (ref[i].t - mu_r) * de.transpose();
    var_e += de.squaredNorm();
  }
  cov *= inv_n;
  var_e *= inv_n;

  Eigen::JacobiSVD<Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector3d d = svd.singularValues();
  // The rotation is unique only when the cross-covariance has rank >= 2.
  if (!(d(0) > 0.0) || d(1) <= 1e-12 * d(0)) {
    throw DegeneracyError("positions are collinear or coincident; alignment is not unique");
  }
  Matrix3d s = Matrix3d::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;

  Alignment a;
  a.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  a.scale = mode == AlignMode::kSim3 ? (d.asDiagonal() * s).trace() / var_e : 1.0;
  a.translation = mu_r - a.scale * a.rotation * mu_e;
  return a;
}

Trajectory apply_alignment(const Trajectory& traj, const Alignment& a) {
  Trajectory out;
  out.frame_period = traj.frame_period;
  out.poses.reserve(traj.size());
  for (const Pose6d& p : traj.poses) {
    const Matrix3d r = a.rotation * rotation_exp(p.r);
    out.poses.push_back({a.apply(p.t), rotation_log_any(r)});
  }
  return out;
}

std::vector<double> ate_per_pose(const Trajectory& est, const Trajectory& ref, AlignMode mode) {
  const Alignment a = umeyama_align(est, ref, mode);
  std::vector<double> err(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) err[i] = (a.apply(est[i].t) - ref[i].t).norm();
  return err;
}

double ate(const Trajectory& est, const Trajectory& ref, AlignMode mode) {
  const std::vector<double> err = ate_per_pose(est, ref, mode);
  double sq = 0.0;
  for (double e : err) sq += e * e;
  return std::sqrt(sq / static_cast<double>(err.size()));
}

double path_length(const Trajectory& traj) {
  double total = 0.0;
  for (std::size_t i = 1; i < traj.size(); ++i) total += (traj[i].t - traj[i - 1].t).norm();
  return total;
}

RelativeErrors relative_errors(const Trajectory& est, const Trajectory& ref,
                               const std::vector<double>& lengths) {
  check_pair(est, ref);
  for (double l : lengths) {
    if (!(l > 0.0)) throw InvalidArgumentError("segment lengths must be positive");
  }
  const std::size_t n = ref.size();
  std::vector<double> dist(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) dist[i] = dist[i - 1] + (ref[i].t - ref[i - 1].t).norm();

  std::vector<TransformSE3d> te(n), tr(n);
  for (std::size_t i = 0; i < n; ++i) {
    te[i] = pose_to_transform(est[i]);
    tr[i] = pose_to_transform(ref[i]);
  }

  RelativeErrors out;
  double t_all = 0.0, r_all = 0.0;
  constexpr double kDeg = 180.0 / std::numbers::pi;
  for (double len : lengths) {
    LengthError le;
    le.length = len;
    for (std::size_t first = 0; first < n; ++first) {
      const auto it = std::lower_bound(dist.begin() + static_cast<std::ptrdiff_t>(first),
                                       dist.end(), dist[first] + len);
      if (it == dist.end()) break;  // later starts cannot reach further
      const auto last = static_cast<std::size_t>(it - dist.begin());
      const TransformSE3d d_ref = compose(invert(tr[first]), tr[last]);
      const TransformSE3d d_est = compose(invert(te[first]), te[last]);
      const TransformSE3d e = compose(invert(d_ref), d_est);
      const double t_err = e.t.norm() / len * 100.0;
      const double r_err = rotation_angle(e.R) * kDeg / len * 100.0;
      le.t_err_pct += t_err;
      le.r_err_deg_per_100m += r_err;
      ++le.spans;
    }
    if (le.spans == 0) continue;
    t_all += le.t_err_pct;
    r_all += le.r_err_deg_per_100m;
    out.spans += le.spans;
    le.t_err_pct /= static_cast<double>(le.spans);
    le.r_err_deg_per_100m /= static_cast<double>(le.spans);
    out.per_length.push_back(le);
  }
  if (out.spans > 0) {
    out.t_err_pct = t_all / static_cast<double>(out.spans);
    out.r_err_deg_per_100m = r_all / static_cast<double>(out.spans);
  }
  return out;
}

EvalReport evaluate(const Trajectory& est, const Trajectory& ref, AlignMode mode,
                    const std::vector<double>& lengths) {
  EvalReport r;
  r.mode = mode;
  r.alignment = umeyama_align(est, ref, mode);
  r.per_pose_error.resize(est.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    r.per_pose_error[i] = (r.alignment.apply(est[i].t) - ref[i].t).norm();
    sq += r.per_pose_error[i] * r.per_pose_error[i];
  }
  r.ate_rmse = std::sqrt(sq / static_cast<double>(est.size()));
  r.relative = relative_errors(est, ref, lengths);
  r.path_length = path_length(ref);
  r.frames = ref.size();
  return r;
}

}  // namespace motionhint
