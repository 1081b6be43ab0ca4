#pragma once

// SE(3) / se(3) pose algebra. Poses are stored as (t, r): translation in meters followed by an
// axis-angle rotation vector in radians. All functions are pure.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <string>

#include "motionhint/errors.hpp"

namespace motionhint {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Vector6 = Eigen::Matrix<Scalar, 6, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

using Vector3d = Vector3<double>;
using Vector6d = Vector6<double>;
using Matrix3d = Matrix3<double>;

/// A 6-DoF pose: translation followed by an axis-angle rotation with |r| < pi.
template <typename Scalar>
struct Pose6 {
  Vector3<Scalar> t = Vector3<Scalar>::Zero();
  Vector3<Scalar> r = Vector3<Scalar>::Zero();

  static Pose6 Zero() { return Pose6{}; }

  static Pose6 FromVector(const Vector6<Scalar>& v) {
    return Pose6{v.template head<3>(), v.template tail<3>()};
  }

  /// Serialization order is (tx, ty, tz, rx, ry, rz).
  Vector6<Scalar> vector() const {
    Vector6<Scalar> v;
    v << t, r;
    return v;
  }

  bool allFinite() const { return t.allFinite() && r.allFinite(); }

  bool operator==(const Pose6&) const = default;
};

/// Rigid-body transform acting on points as x -> R x + t.
template <typename Scalar>
struct TransformSE3 {
  Matrix3<Scalar> R = Matrix3<Scalar>::Identity();
  Vector3<Scalar> t = Vector3<Scalar>::Zero();

  static TransformSE3 Identity() { return TransformSE3{}; }

  Vector3<Scalar> operator()(const Vector3<Scalar>& x) const { return R * x + t; }
};

using Pose6d = Pose6<double>;
using TransformSE3d = TransformSE3<double>;

/// Cross-product matrix [v]x.
template <typename Scalar>
Matrix3<Scalar> skew(const Vector3<Scalar>& v) {
  Matrix3<Scalar> K;
  K << Scalar(0), -v.z(), v.y(),
       v.z(), Scalar(0), -v.x(),
       -v.y(), v.x(), Scalar(0);
  return K;
}

/// Rodrigues' formula; second-order Taylor expansion below 1e-7 rad.
template <typename Scalar>
Matrix3<Scalar> rotation_exp(const Vector3<Scalar>& r) {
  using std::cos;
  using std::sin;
  const Scalar theta = r.norm();
  const Matrix3<Scalar> K = skew(r);
  if (theta < Scalar(1e-7)) {
    return Matrix3<Scalar>::Identity() + K + Scalar(0.5) * K * K;
  }
  const Scalar a = sin(theta) / theta;
  const Scalar b = (Scalar(1) - cos(theta)) / (theta * theta);
  return Matrix3<Scalar>::Identity() + a * K + b * K * K;
}

/// Rotation angle of R in [0, pi].
template <typename Scalar>
Scalar rotation_angle(const Matrix3<Scalar>& R) {
  using std::atan2;
  const Vector3<Scalar> w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  return atan2(w.norm() / Scalar(2), (R.trace() - Scalar(1)) / Scalar(2));
}

namespace detail {

template <typename Scalar>
Vector3<Scalar> rotation_log_impl(const Matrix3<Scalar>& R, bool strict) {
  using std::atan2;
  using std::sqrt;
  constexpr Scalar kPi = std::numbers::pi_v<Scalar>;
  const Vector3<Scalar> w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  const Scalar s = w.norm() / Scalar(2);
  const Scalar c = (R.trace() - Scalar(1)) / Scalar(2);
  const Scalar theta = atan2(s, c);

  if (theta < Scalar(1e-7)) {
    return Scalar(0.5) * (Scalar(1) + theta * theta / Scalar(6)) * w;
  }
  if (strict && kPi - theta < Scalar(1e-6)) {
    throw NearSingularLogError("rotation angle within 1e-6 of pi; axis is ambiguous");
  }
  if (theta < kPi / Scalar(2)) {
    return (theta / (Scalar(2) * s)) * w;
  }
  // Large angles: recover the axis from the symmetric part, (1 - cos) a a^T, which stays
  // well conditioned as sin(theta) -> 0.
  const Matrix3<Scalar> B =
      Scalar(0.5) * (R + R.transpose()) - c * Matrix3<Scalar>::Identity();
  Eigen::Index k = 0;
  B.diagonal().maxCoeff(&k);
  Vector3<Scalar> axis = B.col(k) / sqrt(B(k, k) * (Scalar(1) - c));
  axis.normalize();
  if (axis.dot(w) < Scalar(0)) axis = -axis;
  return theta * axis;
}

}  // namespace detail

/// Inverse of rotation_exp on the open ball |r| < pi. Throws NearSingularLogError when the
/// angle is within 1e-6 of pi.
template <typename Scalar>
Vector3<Scalar> rotation_log(const Matrix3<Scalar>& R) {
  return detail::rotation_log_impl(R, true);
}

/// Like rotation_log, but near pi returns one of the two equivalent vectors instead of
/// throwing. Meant for absolute orientations, which may legitimately point backwards.
template <typename Scalar>
Vector3<Scalar> rotation_log_any(const Matrix3<Scalar>& R) {
  return detail::rotation_log_impl(R, false);
}

/// SE(p): pose vector to transform.
template <typename Scalar>
TransformSE3<Scalar> pose_to_transform(const Pose6<Scalar>& p) {
  if (!p.allFinite()) throw InvalidPoseError("pose has non-finite components");
  return TransformSE3<Scalar>{rotation_exp(p.r), p.t};
}

/// se(T): transform to pose vector.
template <typename Scalar>
Pose6<Scalar> transform_to_pose(const TransformSE3<Scalar>& T) {
  if (!T.R.allFinite() || !T.t.allFinite()) {
    throw InvalidPoseError("transform has non-finite components");
  }
  return Pose6<Scalar>{T.t, rotation_log(T.R)};
}

/// transform_to_pose for absolute poses; see rotation_log_any.
template <typename Scalar>
Pose6<Scalar> transform_to_absolute_pose(const TransformSE3<Scalar>& T) {
  if (!T.R.allFinite() || !T.t.allFinite()) {
    throw InvalidPoseError("transform has non-finite components");
  }
  return Pose6<Scalar>{T.t, rotation_log_any(T.R)};
}

/// (a o b)(x) = a(b(x)).
template <typename Scalar>
TransformSE3<Scalar> compose(const TransformSE3<Scalar>& a, const TransformSE3<Scalar>& b) {
  return TransformSE3<Scalar>{a.R * b.R, a.R * b.t + a.t};
}

template <typename Scalar>
TransformSE3<Scalar> operator*(const TransformSE3<Scalar>& a, const TransformSE3<Scalar>& b) {
  return compose(a, b);
}

template <typename Scalar>
TransformSE3<Scalar> invert(const TransformSE3<Scalar>& T) {
  const Matrix3<Scalar> Rt = T.R.transpose();
  return TransformSE3<Scalar>{Rt, -(Rt * T.t)};
}

/// Pose of frame b expressed in frame a: se(SE(a)^-1 SE(b)).
template <typename Scalar>
Pose6<Scalar> relative_pose(const Pose6<Scalar>& a, const Pose6<Scalar>& b) {
  return transform_to_pose(compose(invert(pose_to_transform(a)), pose_to_transform(b)));
}

/// Pose of `rel` (given in frame a) expressed in the world: se(SE(a) SE(rel)).
template <typename Scalar>
Pose6<Scalar> compose_pose(const Pose6<Scalar>& a, const Pose6<Scalar>& rel) {
  return transform_to_pose(compose(pose_to_transform(a), pose_to_transform(rel)));
}

/// Checks R^T R = I and det R = +1 within `tol`, and finiteness.
template <typename Scalar>
bool is_valid_transform(const TransformSE3<Scalar>& T, Scalar tol = Scalar(1e-9)) {
  using std::abs;
  if (!T.R.allFinite() || !T.t.allFinite()) return false;
  const Scalar ortho =
      (T.R.transpose() * T.R - Matrix3<Scalar>::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && abs(T.R.determinant() - Scalar(1)) <= tol;
}

}  // namespace motionhint
