#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "motionhint/ppnet.hpp"
#include "motionhint/synth_vo.hpp"

using namespace motionhint;

namespace {

PoseWindow random_window(std::mt19937_64& rng, std::size_t w = 20) {
  std::normal_distribution<double> g(0.0, 1.0);
  PoseWindow win;
  Vector3d x = Vector3d::Zero(), r = Vector3d::Zero();
  for (std::size_t i = 0; i <= w; ++i) {
    x += Vector3d(1.0 + 0.1 * g(rng), 0.1 * g(rng), 0.05 * g(rng));
    r += Vector3d(0.02 * g(rng), 0.02 * g(rng), 0.05 * g(rng));
    (i < w ? win.inputs.emplace_back() : win.target) = Pose6d{x, r};
  }
  return centralize(win);
}

PPnetParams perturbed(std::uint64_t seed, double sd = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  Eigen::VectorXd v = PPnetParams::Initialize(seed).flatten();
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += g(rng);
  return PPnetParams::unflatten(v);
}

}  // namespace

TEST_CASE("zero parameters give the head biases") {
  PPnetParams p = PPnetParams::Zero();
  p.b_pose << 1, 2, 3, 4, 5, 6;
  p.b_logvar << 0, 1, -1, 0.5, 0, 2;
  std::mt19937_64 rng(1);
  const Prediction pred = forward(p, random_window(rng));
  CHECK((pred.pose_m.vector() - p.b_pose).norm() == 0.0);
  CHECK((pred.sigma - p.b_logvar.array().exp().matrix()).norm() < 1e-15);
}

TEST_CASE("forward is deterministic and sigma stays positive") {
  std::mt19937_64 rng(2);
  const PoseWindow w = random_window(rng);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const PPnetParams p = perturbed(s, 3.0);
    const Prediction a = forward(p, w), b = forward(p, w);
    CHECK(a.pose_m == b.pose_m);
    CHECK((a.sigma.array() > 0.0).all());
  }
  PPnetParams bad = PPnetParams::Zero();
  bad.w_pose(0, 0) = std::nan("");
  CHECK_THROWS_AS(forward(bad, w), NumericError);
}

TEST_CASE("likelihood loss closed forms") {
  const Prediction unit{Pose6d::Zero(), Vector6d::Ones()};
  CHECK(nll_loss(unit, Pose6d::Zero(), 0.1, 0.5) == doctest::Approx(0.0).epsilon(1e-12));
  Pose6d one = Pose6d::Zero();
  one.t(0) = 1.0;
  CHECK(std::abs(nll_loss(unit, one, 0.1, 0.5) - 1.0) <= 1e-12);

  // Doubling every sigma at zero residual adds 6 gamma log 2.
  const Prediction twice{Pose6d::Zero(), 2.0 * Vector6d::Ones()};
  CHECK(std::abs(nll_loss(twice, Pose6d::Zero(), 0.1, 0.5) - 6 * 0.1 * std::log(2.0)) < 1e-12);

  // With unit sigma the loss is the k-th power of the squared residual.
  Pose6d y;
  y.t = Vector3d(0.3, -0.2, 0.1);
  y.r = Vector3d(0.05, 0.0, -0.4);
  for (double k : {0.5, 1.0, 1.5}) {
    CHECK(std::abs(nll_loss(unit, y, 0.1, k) - std::pow(y.vector().squaredNorm(), k)) < 1e-12);
  }
  Prediction bad = unit;
  bad.sigma(2) = 0.0;
  CHECK_THROWS_AS(nll_loss(bad, y, 0.1, 0.5), InvalidArgumentError);
}

TEST_CASE("total uncertainty") {
  const Prediction p{Pose6d::Zero(), Vector6d::Ones()};
  CHECK(total_uncertainty(p) == 6.0);
  Prediction q = p;
  q.sigma(4) += 1e-3;
  CHECK(total_uncertainty(q) > total_uncertainty(p));
}

TEST_CASE("analytic gradient matches central differences") {
  const NllConfig nll{0.1, 0.5};
  for (std::uint64_t draw = 0; draw < 3; ++draw) {
    std::mt19937_64 rng(10 + draw);
    const PPnetParams params = perturbed(20 + draw);
    std::vector<PoseWindow> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(random_window(rng, 12));
    const Eigen::VectorXd analytic = loss_gradient(params, batch, nll).grad.flatten();
    const Eigen::VectorXd flat = params.flatten();
    // Every coordinate: covers each parameter group.
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
      Eigen::VectorXd a = flat, b = flat;
      a(i) += 1e-5;
      b(i) -= 1e-5;
      const double numeric = (mean_nll(PPnetParams::unflatten(a), batch, nll) -
                              mean_nll(PPnetParams::unflatten(b), batch, nll)) /
                             2e-5;
      const double scale = std::max({std::abs(numeric), std::abs(analytic(i)), 1e-8});
      CHECK(std::abs(numeric - analytic(i)) / scale < 1e-4);
    }
  }
}

TEST_CASE("gradient properties") {
  std::mt19937_64 rng(3);
  const PPnetParams params = perturbed(4);
  const std::vector<PoseWindow> batch{random_window(rng), random_window(rng)};
  const LossGradient g = loss_gradient(params, batch, {0.1, 0.5});
  CHECK(g.loss == doctest::Approx(mean_nll(params, batch, {0.1, 0.5})).epsilon(1e-14));

  // Zero residual with unit sigma: the pose head is stationary.
  PPnetParams still = PPnetParams::Zero();
  PoseWindow w = batch[0];
  w.target = Pose6d::Zero();
  const LossGradient z = loss_gradient(still, std::vector<PoseWindow>{w}, {0.1, 0.5});
  CHECK(z.grad.w_pose.norm() < 1e-9);
  CHECK(z.grad.b_pose.norm() < 1e-9);
}

TEST_CASE("adam step") {
  PPnetParams p = perturbed(5);
  const PPnetParams before = p;
  AdamState state;
  adam_step(p, PPnetParams::Zero(), state, AdamConfig{});
  CHECK(p.flatten() == before.flatten());

  // A least-squares toy converges.
  Eigen::MatrixXd A(8, 3);
  A.setRandom();
  const Eigen::VectorXd truth = Eigen::Vector3d(1.0, -2.0, 0.5);
  const Eigen::VectorXd b = A * truth;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  AdamState s;
  AdamConfig cfg;
  cfg.learning_rate = 1e-2;
  for (int i = 0; i < 5000; ++i) {
    const Eigen::VectorXd grad = 2.0 * A.transpose() * (A * x - b);
    adam_update(x, grad, s, cfg);
  }
  CHECK((A * x - b).norm() < 1e-6);
}

TEST_CASE("training is deterministic and lowers the validation loss") {
  const auto data = constant_velocity_trajectories(6, 60, 0.8, 1.2, 3);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 8;
  const TrainResult a = train(data, cfg);
  const TrainResult b = train(data, cfg);
  CHECK(a.params.flatten() == b.params.flatten());
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].val_nll == b.history[i].val_nll);
  }
  CHECK(a.history.back().val_nll < a.history.front().val_nll);
  CHECK_THROWS_AS(train(std::vector<Trajectory>{}, cfg), InvalidArgumentError);
  TrainConfig bad = cfg;
  bad.gamma = 1.5;
  CHECK_THROWS_AS(train(data, bad), InvalidArgumentError);
}

TEST_CASE("zero-motion baseline") {
  // Identical windows whose target repeats the anchor give a residual-free baseline.
  std::mt19937_64 rng(6);
  PoseWindow w = random_window(rng);
  w.target = w.inputs[w.center_index()];
  const std::vector<PoseWindow> ws(5, w);
  const double base = zero_predictor_nll(ws, {0.1, 0.5});
  CHECK(std::isfinite(base));
  CHECK(base < -10.0);
}

TEST_CASE("model files round trip bit for bit") {
  const PPnetParams p = perturbed(7, 1.0);
  std::stringstream ss;
  save_model(ss, p);
  const PPnetParams q = load_model(ss);
  CHECK(q.flatten() == p.flatten());

  std::string text;
  {
    std::stringstream s2;
    save_model(s2, p);
    text = s2.str();
  }
  std::istringstream truncated(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load_model(truncated), ParseError);
  std::string wrong = text;
  wrong.replace(wrong.find(" 1"), 2, " 9");
  std::istringstream versioned(wrong);
  CHECK_THROWS_AS(load_model(versioned), ParseError);
  std::istringstream junk("hello");
  CHECK_THROWS_AS(load_model(junk), ParseError);
}
