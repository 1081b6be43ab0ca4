#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "motionhint/se3.hpp"
#include "oracles.hpp"

using namespace motionhint;

namespace {

constexpr double kPi = std::numbers::pi;

double max_abs(const Matrix3d& a, const Matrix3d& b) { return (a - b).cwiseAbs().maxCoeff(); }

Pose6d random_pose(std::mt19937_64& rng, double max_angle = 3.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector3d axis(u(rng), u(rng), u(rng));
  axis.normalize();
  return {Vector3d(5 * u(rng), 5 * u(rng), 5 * u(rng)), max_angle * std::abs(u(rng)) * axis};
}

}  // namespace

TEST_CASE("exp of the zero pose is the identity") {
  const TransformSE3d T = pose_to_transform(Pose6d::Zero());
  CHECK(max_abs(T.R, Matrix3d::Identity()) == 0.0);
  CHECK(T.t.norm() == 0.0);
}

TEST_CASE("quarter turn about z maps x onto y") {
  const Matrix3d R = rotation_exp(Vector3d(0, 0, kPi / 2));
  CHECK((R * Vector3d::UnitX() - Vector3d::UnitY()).norm() < 1e-15);
  const Vector3d r = rotation_log(R);
  CHECK((r - Vector3d(0, 0, kPi / 2)).norm() < 1e-12);
}

TEST_CASE("rotation exp agrees with a quaternion construction") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    const Pose6d p = random_pose(rng);
    CHECK(max_abs(rotation_exp(p.r), oracle::quat(p.r).toRotationMatrix()) < 1e-14);
  }
  // Small angles take the series branch.
  for (double a : {1e-9, 1e-8, 3e-8, 1e-7, 2e-7, 1e-6}) {
    const Vector3d r = a * Vector3d(0.6, -0.8, 0.0);
    CHECK(max_abs(rotation_exp(r), oracle::quat(r).toRotationMatrix()) < 1e-15);
    CHECK((rotation_log(rotation_exp(r)) - r).norm() < 1e-15);
  }
}

TEST_CASE("exp/log round trip") {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Pose6d p = random_pose(rng);
    worst = std::max(worst, (transform_to_pose(pose_to_transform(p)).vector() - p.vector())
                                .cwiseAbs()
                                .maxCoeff());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("log near pi is rejected by the strict chart and accepted by the lenient one") {
  const Matrix3d R = rotation_exp(Vector3d(0, 0, kPi - 1e-8));
  CHECK_THROWS_AS(rotation_log(R), NearSingularLogError);
  const Vector3d r = rotation_log_any(R);
  CHECK(r.norm() <= kPi + 1e-12);
  CHECK(max_abs(rotation_exp(r), R) < 1e-7);
  CHECK_NOTHROW(rotation_log(rotation_exp(Vector3d(0, 0, kPi - 1e-5))));
}

TEST_CASE("non-finite poses are rejected") {
  Pose6d p = Pose6d::Zero();
  p.t(1) = std::nan("");
  CHECK_THROWS_AS(pose_to_transform(p), InvalidPoseError);
}

TEST_CASE("group laws") {
  std::mt19937_64 rng(3);
  const TransformSE3d id = TransformSE3d::Identity();
  for (int i = 0; i < 200; ++i) {
    const TransformSE3d a = pose_to_transform(random_pose(rng));
    const TransformSE3d b = pose_to_transform(random_pose(rng));
    const TransformSE3d c = pose_to_transform(random_pose(rng));
    const TransformSE3d l = compose(compose(a, b), c), r = compose(a, compose(b, c));
    CHECK(max_abs(l.R, r.R) < 1e-12);
    CHECK((l.t - r.t).norm() < 1e-12);
    const TransformSE3d e = compose(a, invert(a));
    CHECK(max_abs(e.R, id.R) < 1e-12);
    CHECK(e.t.norm() < 1e-12);
    CHECK(max_abs(compose(a, id).R, a.R) == 0.0);
  }
}

TEST_CASE("two eighth turns make a quarter turn") {
  const TransformSE3d q = pose_to_transform(Pose6d{Vector3d::Zero(), Vector3d(0, 0, kPi / 4)});
  const Pose6d half = transform_to_pose(compose(q, q));
  CHECK((half.r - Vector3d(0, 0, kPi / 2)).norm() < 1e-12);
}

TEST_CASE("inverse of a pure translation") {
  TransformSE3d T;
  T.t = Vector3d(1, 2, 3);
  CHECK((invert(T).t - Vector3d(-1, -2, -3)).norm() == 0.0);
  CHECK(max_abs(invert(TransformSE3d::Identity()).R, Matrix3d::Identity()) == 0.0);
}

TEST_CASE("relative poses") {
  std::mt19937_64 rng(4);
  const Pose6d p = random_pose(rng);
  CHECK(relative_pose(p, p).vector().norm() < 1e-12);
  CHECK((relative_pose(Pose6d::Zero(), p).vector() - p.vector()).norm() < 1e-12);
  for (int i = 0; i < 100; ++i) {
    const Pose6d a = random_pose(rng, 2.0), b = random_pose(rng, 2.0);
    const Pose6d rel = relative_pose(a, b);
    // Cross-check with the isometry oracle.
    const Eigen::Isometry3d o = oracle::iso(a).inverse() * oracle::iso(b);
    CHECK((o.translation() - rel.t).norm() < 1e-10);
    CHECK((compose_pose(a, rel).vector() - b.vector()).norm() < 1e-9);
  }
}

TEST_CASE("templated on the scalar type") {
  const Pose6<float> p{Vector3<float>(1.f, 2.f, 3.f), Vector3<float>(0.1f, 0.2f, 0.3f)};
  const Pose6<float> q = transform_to_pose(pose_to_transform(p));
  CHECK((p.vector() - q.vector()).norm() < 1e-5f);
}
