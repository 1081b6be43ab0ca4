#include <doctest.h>

#include <random>
#include <sstream>

#include "motionhint/trajectory.hpp"
#include "oracles.hpp"

using namespace motionhint;

namespace {

Trajectory walk(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  return oracle::random_walk(rng, n, 1.0);
}

PoseWindow window_of(const Trajectory& t, std::size_t first, std::size_t w) {
  PoseWindow win;
  win.inputs.assign(t.poses.begin() + first, t.poses.begin() + first + w);
  win.target = t[first + w];
  return win;
}

}  // namespace

TEST_CASE("identity line parses to the zero pose") {
  const Trajectory t = parse_kitti_poses(std::string_view("1 0 0 0 0 1 0 0 0 0 1 0\n"));
  REQUIRE(t.size() == 1);
  CHECK(t[0].vector().norm() == 0.0);
  const Trajectory u = parse_kitti_poses(std::string_view("1 0 0 5 0 1 0 0 0 0 1 0"));
  CHECK((u[0].t - Vector3d(5, 0, 0)).norm() == 0.0);
}

TEST_CASE("write then parse round trip") {
  const Trajectory t = walk(1, 100);
  const Trajectory u = parse_kitti_poses(std::string_view(write_kitti_poses(t)));
  REQUIRE(u.size() == t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK((u[i].vector() - t[i].vector()).cwiseAbs().maxCoeff() < 1e-6);
  }
  CHECK(write_kitti_poses(Trajectory{}).empty());
  Trajectory one;
  one.poses.push_back(Pose6d::Zero());
  CHECK(write_kitti_poses(one).find('\n') == write_kitti_poses(one).size() - 1);
}

TEST_CASE("parse errors carry the line number") {
  auto line_of = [](std::string_view text) {
    try {
      parse_kitti_poses(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  CHECK(line_of("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1\n") == 2);
  CHECK(line_of("1 0 0 0 0 1 0 0 0 0 1 nan\n") == 1);
  CHECK(line_of("1 0 0 0 0 1 0 0 0 0 1 x\n") == 1);
  CHECK(line_of("\n2 0 0 0 0 1 0 0 0 0 1 0\n") == 2);
  // Slightly off-orthonormal rotations are projected back.
  CHECK_NOTHROW(parse_kitti_poses(std::string_view("1.00001 0 0 0 0 1 0 0 0 0 1 0")));
}

TEST_CASE("centralize") {
  const Trajectory t = walk(2, 60);
  const PoseWindow w = window_of(t, 5, 20);
  const PoseWindow c = centralize(w);
  CHECK(c.inputs[c.center_index()].vector().norm() < 1e-12);
  const PoseWindow cc = centralize(c);
  for (std::size_t i = 0; i < c.length(); ++i) {
    CHECK((cc.inputs[i].vector() - c.inputs[i].vector()).cwiseAbs().maxCoeff() < 1e-9);
  }
  // Each output is the input expressed in the anchor frame.
  const Eigen::Isometry3d anchor = oracle::iso(w.inputs[w.center_index()]);
  const Eigen::Isometry3d rel = anchor.inverse() * oracle::iso(w.target);
  CHECK((rel.translation() - c.target.t).norm() < 1e-10);

  PoseWindow same;
  same.inputs.assign(7, t[3]);
  same.target = t[3];
  for (const Pose6d& p : centralize(same).inputs) CHECK(p.vector().norm() < 1e-12);
}

TEST_CASE("scale augmentation touches translations only") {
  const PoseWindow w = window_of(walk(3, 40), 0, 20);
  const PoseWindow s = scale_augment(w, 2.0);
  for (std::size_t i = 0; i < w.length(); ++i) {
    CHECK(s.inputs[i].t.norm() == 2.0 * w.inputs[i].t.norm());
    CHECK(s.inputs[i].r == w.inputs[i].r);
  }
  const PoseWindow one = scale_augment(w, 1.0);
  CHECK(one.target == w.target);
  CHECK_THROWS_AS(scale_augment(w, 0.0), InvalidArgumentError);
  CHECK_THROWS_AS(scale_augment(w, -1.0), InvalidArgumentError);
}

TEST_CASE("sliding windows count and reassemble") {
  const Trajectory t = walk(4, 30);
  CHECK(sliding_windows(t, 30).empty());
  CHECK(sliding_windows(t, 29).size() == 1);
  const auto ws = sliding_windows(t, 20);
  REQUIRE(ws.size() == 10);
  for (std::size_t i = 0; i < ws.size(); ++i) {
    CHECK(ws[i].inputs.front() == t[i]);
    CHECK(ws[i].target == t[i + 20]);
  }
}

TEST_CASE("relative steps chain back to the trajectory") {
  const Trajectory t = walk(5, 200);
  const Trajectory u = chain_steps(t[0], relative_steps(t), t.frame_period);
  REQUIRE(u.size() == t.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    worst = std::max(worst, (oracle::iso(u[i]).matrix() - oracle::iso(t[i]).matrix())
                                .cwiseAbs()
                                .maxCoeff());
  }
  CHECK(worst < 1e-8);
}
