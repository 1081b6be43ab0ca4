#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "motionhint/metrics.hpp"
#include "oracles.hpp"

using namespace motionhint;

namespace {

Trajectory line(std::size_t n, double step) {
  Trajectory t;
  for (std::size_t i = 0; i < n; ++i) {
    t.poses.push_back({Vector3d(step * double(i), 0, 0), Vector3d::Zero()});
  }
  return t;
}

Trajectory transformed(const Trajectory& t, const Matrix3d& R, const Vector3d& x, double s) {
  Trajectory out;
  for (const Pose6d& p : t.poses) {
    const Matrix3d rot = R * rotation_exp(p.r);
    out.poses.push_back({s * (R * p.t) + x, rotation_log_any(rot)});
  }
  return out;
}

}  // namespace

TEST_CASE("identical trajectories have zero error") {
  std::mt19937_64 rng(1);
  const Trajectory t = oracle::random_walk(rng, 200, 1.0);
  const EvalReport r = evaluate(t, t, AlignMode::kSim3, {20, 50});
  CHECK(r.ate_rmse < 1e-9);
  CHECK(r.relative.t_err_pct < 1e-9);
  CHECK(r.relative.r_err_deg_per_100m < 1e-9);
  CHECK(r.alignment.scale == doctest::Approx(1.0));
}

TEST_CASE("alignment recovers a known similarity") {
  std::mt19937_64 rng(2);
  const Trajectory ref = oracle::random_walk(rng, 150, 1.0);
  const Matrix3d R = rotation_exp(Vector3d(0.2, -0.5, 1.3));
  const Trajectory est = transformed(ref, R.transpose(), Vector3d(3, -1, 2), 1.0 / 2.5);
  const Alignment a = umeyama_align(est, ref, AlignMode::kSim3);
  CHECK(a.scale == doctest::Approx(2.5).epsilon(1e-12));
  CHECK((a.rotation - R).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(ate(est, ref, AlignMode::kSim3) < 1e-9);
  // A rigid alignment cannot absorb the scale.
  CHECK(ate(est, ref, AlignMode::kSE3) > 1.0);
  const Trajectory back = apply_alignment(est, a);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK((back[i].t - ref[i].t).norm() < 1e-9);
}

TEST_CASE("ATE agrees with Horn's method") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Trajectory ref = oracle::random_walk(rng, 120, 0.7);
    Trajectory est = transformed(ref, rotation_exp(Vector3d(g(rng), g(rng), g(rng))),
                                 Vector3d(g(rng), g(rng), g(rng)), 0.5 + std::abs(g(rng)));
    for (Pose6d& p : est.poses) p.t += 0.2 * Vector3d(g(rng), g(rng), g(rng));
    CHECK(std::abs(ate(est, ref, AlignMode::kSim3) - oracle::ate(est, ref, true)) < 1e-9);
    CHECK(std::abs(ate(est, ref, AlignMode::kSE3) - oracle::ate(est, ref, false)) < 1e-9);
  }
}

TEST_CASE("degenerate alignments are rejected") {
  CHECK_THROWS_AS(ate(line(2, 1.0), line(2, 1.0), AlignMode::kSim3), DegeneracyError);
  CHECK_THROWS_AS(ate(line(50, 1.0), line(50, 1.0), AlignMode::kSE3), DegeneracyError);
  Trajectory same;
  same.poses.assign(10, Pose6d::Zero());
  CHECK_THROWS_AS(ate(same, same, AlignMode::kSim3), DegeneracyError);
  CHECK_THROWS_AS(ate(line(5, 1.0), line(6, 1.0), AlignMode::kSim3), InvalidArgumentError);
}

TEST_CASE("relative errors agree with a linear scan") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  const Trajectory ref = oracle::random_walk(rng, 500, 1.0);
  Trajectory est = ref;
  for (Pose6d& p : est.poses) {
    p.t += 0.5 * Vector3d(g(rng), g(rng), g(rng));
    p.r += 0.01 * Vector3d(g(rng), g(rng), g(rng));
  }
  const std::vector<double> lengths{10, 50, 100, 200};
  const RelativeErrors mine = relative_errors(est, ref, lengths);
  const oracle::Relative theirs = oracle::relative(est, ref, lengths);
  CHECK(mine.spans == theirs.spans);
  CHECK(std::abs(mine.t_err_pct - theirs.t_err_pct) < 1e-9);
  CHECK(std::abs(mine.r_err_deg_per_100m - theirs.r_err_deg_per_100m) < 1e-9);
  CHECK_THROWS_AS(relative_errors(est, ref, {0.0}), InvalidArgumentError);
}

TEST_CASE("drift fixtures") {
  const Trajectory ref = line(1001, 1.0);
  Trajectory longer = ref;
  for (Pose6d& p : longer.poses) p.t *= 1.01;
  CHECK(relative_errors(longer, ref).t_err_pct == doctest::Approx(1.0).epsilon(1e-9));

  const Pose6d step{Vector3d(1, 0, 0), Vector3d(0, 0, 0.01 * std::numbers::pi / 180)};
  const std::vector<Pose6d> steps(1000, step);
  const Trajectory yaw = chain_steps(Pose6d::Zero(), steps);
  CHECK(relative_errors(yaw, ref).r_err_deg_per_100m == doctest::Approx(1.0).epsilon(1e-9));

  // Lengths beyond the path are skipped.
  const RelativeErrors few = relative_errors(ref, ref, {500, 5000});
  CHECK(few.per_length.size() == 1);
  CHECK(path_length(ref) == doctest::Approx(1000.0));
}
