#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "motionhint/motion_supervision.hpp"
#include "oracles.hpp"

using namespace motionhint;

namespace {

// A model whose pose head always predicts `step` in the centralized frame and whose
// uncertainty is exp(logvar) in every dimension.
PPnetParams constant_model(const Pose6d& pred, double logvar) {
  PPnetParams p = PPnetParams::Zero();
  p.b_pose = pred.vector();
  p.b_logvar.setConstant(logvar);
  return p;
}

Pose6d pose_at(double x) { return Pose6d{Vector3d(x, 0, 0), Vector3d::Zero()}; }

}  // namespace

TEST_CASE("pose manager ordering and eviction") {
  PoseManager m(3);
  CHECK(m.empty());
  CHECK_FALSE(m.oldest_frame().has_value());
  for (std::size_t f = 0; f < 5; ++f) m.record_pose(f, pose_at(double(f)));
  CHECK(m.size() == 3);
  CHECK(*m.oldest_frame() == 2);
  CHECK(*m.latest_frame() == 4);
  CHECK(m.latest().t.x() == 4.0);
  CHECK(m.has_window(3));
  CHECK_FALSE(m.has_window(4));
  CHECK_THROWS_AS(m.record_pose(4, pose_at(0)), OrderingError);
  CHECK_THROWS_AS(m.record_pose(3, pose_at(0)), OrderingError);
  Pose6d bad = pose_at(0);
  bad.r(0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(m.record_pose(9, bad), InvalidPoseError);
  // A gap breaks the window until enough consecutive frames arrive again.
  m.record_pose(7, pose_at(7));
  CHECK_FALSE(m.has_window(2));
  m.record_pose(8, pose_at(8));
  CHECK(m.has_window(2));
  const auto r = m.recent(2);
  CHECK(r[0].t.x() == 7.0);
  CHECK(r[1].t.x() == 8.0);
}

TEST_CASE("confidence") {
  ConfidenceParams cp;
  CHECK(confidence(Vector6d::Zero(), cp) == 1.0);
  cp.alpha = 2.0;
  CHECK(std::abs(confidence(Vector6d::Constant(0.5), cp) - std::exp(-6.0)) < 1e-15);
  cp.weight_by_uncertainty = false;
  CHECK(confidence(Vector6d::Constant(5.0), cp) == 1.0);
  ConfidenceParams bad;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgumentError);
  bad = ConfidenceParams{};
  bad.tau = -1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgumentError);
}

TEST_CASE("pseudo label de-centralizes through the window anchor") {
  // Straight line at 1 m per frame, heading rotated by 0.3 rad about z.
  const Matrix3d R = rotation_exp(Vector3d(0, 0, 0.3));
  PoseManager m(8);
  for (std::size_t f = 0; f < 6; ++f) {
    m.record_pose(f, Pose6d{R * Vector3d(double(f), 0, 0), Vector3d(0, 0, 0.3)});
  }
  // Window of 6: anchor is index 3. Predict "3 frames ahead of the anchor".
  const PPnetParams model = constant_model(pose_at(3.0), -2.0);
  ConfidenceParams cp;
  const PseudoLabel l = pseudo_label(model, m, cp, 6);
  REQUIRE(l.has_value());
  CHECK((l.predicted_world.t - R * Vector3d(6, 0, 0)).norm() < 1e-12);
  CHECK((l.relative.vector() - pose_at(1.0).vector()).norm() < 1e-12);
  CHECK(l.total_uncertainty == doctest::Approx(6 * std::exp(-2.0)));
  CHECK(l.confidence == doctest::Approx(std::exp(-6 * std::exp(-2.0))));

  // Not enough history.
  CHECK(pseudo_label(model, m, cp, 7).status == LabelStatus::kInsufficientHistory);
}

TEST_CASE("gate on total uncertainty") {
  PoseManager m(4);
  for (std::size_t f = 0; f < 4; ++f) m.record_pose(f, pose_at(double(f)));
  const PPnetParams model = constant_model(pose_at(2.0), std::log(1.0 / 6.0));  // U = 1
  ConfidenceParams cp;
  cp.tau = 0.5;
  CHECK(pseudo_label(model, m, cp, 4).status == LabelStatus::kGated);
  cp.tau = 2.0;
  CHECK(pseudo_label(model, m, cp, 4).has_value());

  // Monotonicity: lowering tau never admits more labels.
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> lv(-4.0, 2.0);
  std::vector<PPnetParams> models;
  for (int i = 0; i < 50; ++i) models.push_back(constant_model(pose_at(2.0), lv(rng)));
  std::size_t previous = models.size() + 1;
  for (double tau : {100.0, 10.0, 3.0, 1.0, 0.3, 0.1, 0.01}) {
    cp.tau = tau;
    std::size_t ok = 0;
    for (const PPnetParams& mm : models) ok += pseudo_label(mm, m, cp, 4).has_value() ? 1 : 0;
    CHECK(ok <= previous);
    previous = ok;
  }
}

TEST_CASE("motion loss") {
  const Pose6d a = pose_at(1.0);
  Pose6d b = a;
  CHECK(motion_loss(a, b, 0.7) == 0.0);
  b.r(2) = 0.4;
  b.t(1) = 0.3;
  CHECK(motion_loss(a, b, 0.5) == doctest::Approx(0.25));
}

TEST_CASE("loss rebalancing") {
  auto run = [](double lambda, std::array<double, 2> start, std::array<double, 2> end) {
    LossWeights w;
    w.lambda = lambda;
    w.period = 4;
    w = mlra_update(w, start, 2);
    CHECK(w.w == std::array<double, 2>{0.5, 0.5});  // no update mid-period
    return mlra_update(w, end, 2);
  };
  CHECK(run(0.0, {3.0, 1.0}, {0.3, 0.9}).w == std::array<double, 2>{0.5, 0.5});
  const LossWeights r = run(1.0, {1.0, 1.0}, {0.9, 0.3});
  CHECK(std::abs(r.w[0] - 0.75) < 1e-15);
  CHECK(std::abs(r.w[1] - 0.25) < 1e-15);
  const LossWeights eq = run(2.0, {4.0, 2.0}, {2.0, 1.0});
  CHECK(std::abs(eq.w[0] - 0.5) < 1e-15);

  // Positive lambda favours the slower-descending term.
  const LossWeights s = run(3.0, {1.0, 1.0}, {0.8, 0.2});
  CHECK(s.w[0] > s.w[1]);

  // A zero start loss is clamped instead of dividing by zero.
  const LossWeights z = run(1.0, {0.0, 1.0}, {1e-3, 0.5});
  CHECK(std::isfinite(z.w[0]));
  CHECK(std::abs(z.w[0] + z.w[1] - 1.0) < 1e-12);

  // Only one update with the default cap.
  LossWeights once;
  once.period = 2;
  for (int i = 0; i < 20; ++i) once = mlra_update(once, {1.0 / (i + 1), 1.0 / (i * i + 1)}, 1);
  CHECK(once.updates_done == 1);

  // Fixed weights never move.
  LossWeights fixed = LossWeights::Fixed(1.0, 0.0);
  for (int i = 0; i < 5000; ++i) fixed = mlra_update(fixed, {1.0, double(i)}, 1);
  CHECK(fixed.w == std::array<double, 2>{1.0, 0.0});
}

TEST_CASE("combined loss") {
  LossWeights w;
  w.w = {0.25, 0.75};
  CHECK(combined_loss(2.0, 4.0, w) == 3.5);
}

TEST_CASE("uncertainty percentile") {
  std::vector<PoseWindow> ws(1);
  ws[0].inputs.assign(4, Pose6d::Zero());
  const PPnetParams m = constant_model(Pose6d::Zero(), 0.0);
  CHECK(uncertainty_percentile(m, ws, 90.0) == doctest::Approx(6.0));
  CHECK_THROWS_AS(uncertainty_percentile(m, {}, 50.0), InvalidArgumentError);
  CHECK_THROWS_AS(uncertainty_percentile(m, ws, 101.0), InvalidArgumentError);
}
