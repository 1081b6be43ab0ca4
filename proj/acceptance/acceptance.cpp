// Acceptance suite: one PASS/FAIL line per criterion, tolerances fixed below.
//
//   acceptance            run every criterion
//   acceptance 4 6        run only criteria 4 and 6
//
// Exit status is 0 iff every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "motionhint/metrics.hpp"
#include "motionhint/motion_supervision.hpp"
#include "motionhint/ppnet.hpp"
#include "motionhint/se3.hpp"
#include "motionhint/synth_vo.hpp"
#include "motionhint/trajectory.hpp"
#include "oracles.hpp"

using namespace motionhint;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// ---------------------------------------------------------------------------------------------
// 1. SE(3) round trips and group laws.

Outcome se3_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto random_pose = [&] {
    Vector3d axis(u(rng), u(rng), u(rng));
    axis.normalize();
    // Stay clear of the pi boundary, where the axis-angle chart is ambiguous.
    const double angle = 3.1 * std::abs(u(rng));
    return Pose6d{Vector3d(10 * u(rng), 10 * u(rng), 10 * u(rng)), angle * axis};
  };

  double round_trip = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Pose6d p = random_pose();
    const Pose6d q = transform_to_pose(pose_to_transform(p));
    round_trip = std::max(round_trip, (p.vector() - q.vector()).cwiseAbs().maxCoeff());
    const TransformSE3d T = pose_to_transform(random_pose());
    const TransformSE3d T2 = pose_to_transform(transform_to_pose(T));
    round_trip = std::max(round_trip, (T.R - T2.R).cwiseAbs().maxCoeff());
    round_trip = std::max(round_trip, (T.t - T2.t).cwiseAbs().maxCoeff());
  }

  double group = 0.0;
  auto diff = [](const TransformSE3d& a, const TransformSE3d& b) {
    return std::max((a.R - b.R).cwiseAbs().maxCoeff(), (a.t - b.t).cwiseAbs().maxCoeff());
  };
  for (int i = 0; i < 1000; ++i) {
    const TransformSE3d a = pose_to_transform(random_pose());
    const TransformSE3d b = pose_to_transform(random_pose());
    const TransformSE3d c = pose_to_transform(random_pose());
    const TransformSE3d id = TransformSE3d::Identity();
    group = std::max(group, diff(compose(compose(a, b), c), compose(a, compose(b, c))));
    group = std::max(group, diff(compose(a, id), a));
    group = std::max(group, diff(compose(id, a), a));
    group = std::max(group, diff(compose(a, invert(a)), id));
    group = std::max(group, diff(compose(invert(a), a), id));
    group = std::max(group, diff(invert(compose(a, b)), compose(invert(b), invert(a))));
    // Rotation blocks stay orthonormal with unit determinant.
    group = std::max(group, (a.R.transpose() * a.R - Matrix3d::Identity()).cwiseAbs().maxCoeff());
    group = std::max(group, std::abs(a.R.determinant() - 1.0));
  }
  const double secs = seconds_since(t0);
  return {round_trip < 1e-9 && group < 1e-12 && secs < 1.0,
          fmt("round-trip max err %.2e (< 1e-9), group-law max err %.2e (< 1e-12), %.3f s (< 1 s)",
              round_trip, group, secs)};
}

// ---------------------------------------------------------------------------------------------
// 2. Analytic gradient against central differences.

PoseWindow random_window(std::mt19937_64& rng, std::size_t w) {
  std::normal_distribution<double> g(0.0, 1.0);
  PoseWindow win;
  Vector3d x = Vector3d::Zero();
  Vector3d r = Vector3d::Zero();
  for (std::size_t i = 0; i <= w; ++i) {
    x += Vector3d(1.0 + 0.1 * g(rng), 0.1 * g(rng), 0.05 * g(rng));
    r += Vector3d(0.02 * g(rng), 0.02 * g(rng), 0.05 * g(rng));
    const Pose6d p{x, r};
    if (i < w) {
      win.inputs.push_back(p);
    } else {
      win.target = p;
    }
  }
  return centralize(win);
}

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  constexpr double kStep = 1e-5;
  const NllConfig nll{0.1, 0.5};
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t draw = 0; draw < 5; ++draw) {
    std::mt19937_64 rng(200 + draw);
    PPnetParams params = PPnetParams::Initialize(300 + draw);
    // Move away from the initialization so every parameter group carries signal.
    std::normal_distribution<double> g(0.0, 0.1);
    Eigen::VectorXd flat = params.flatten();
    for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) += g(rng);
    params = PPnetParams::unflatten(flat);

    std::vector<PoseWindow> batch;
    for (int b = 0; b < 4; ++b) batch.push_back(random_window(rng, 20));
    const Eigen::VectorXd analytic = loss_gradient(params, batch, nll).grad.flatten();

    std::uniform_int_distribution<Eigen::Index> pick(0, flat.size() - 1);
    for (int c = 0; c < 50; ++c) {
      const Eigen::Index i = pick(rng);
      Eigen::VectorXd plus = flat, minus = flat;
      plus(i) += kStep;
      minus(i) -= kStep;
      const double numeric = (mean_nll(PPnetParams::unflatten(plus), batch, nll) -
                              mean_nll(PPnetParams::unflatten(minus), batch, nll)) /
                             (2.0 * kStep);
      const double scale = std::max(std::abs(numeric), std::abs(analytic(i)));
      const double rel = scale > 0.0 ? std::abs(numeric - analytic(i)) / scale : 0.0;
      worst = std::max(worst, rel);
      ++checked;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 30.0,
          fmt("%zu coordinates over 5 draws, worst relative error %.2e (< 1e-4), %.2f s (< 30 s)",
              checked, worst, secs)};
}

// ---------------------------------------------------------------------------------------------
// 3. Closed forms of the likelihood loss.

Outcome loss_closed_forms() {
  Prediction unit{Pose6d::Zero(), Vector6d::Ones()};
  const double zero = nll_loss(unit, Pose6d::Zero(), 0.1, 0.5);
  Pose6d target = Pose6d::Zero();
  target.t(0) = 1.0;
  const double one = nll_loss(unit, target, 0.1, 0.5);
  const double e0 = std::abs(zero - 0.0), e1 = std::abs(one - 1.0);
  return {e0 <= 1e-12 && e1 <= 1e-12,
          fmt("zero residual, unit sigma: %.3e (want 0); unit residual: %.15f (want 1), "
              "tolerance 1e-12",
              zero, one)};
}

// ---------------------------------------------------------------------------------------------
// 4-6. PPnet on constant-velocity motion.

struct CvData {
  std::vector<Trajectory> train;
  std::vector<Trajectory> validation;  // mixed scales
};

const CvData& cv_data() {
  static const CvData data = [] {
    CvData d;
    d.train = constant_velocity_trajectories(40, 120, 0.8, 1.2, 7);
    d.validation = constant_velocity_trajectories(20, 60, 0.8, 1.2, 8);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> log_scale(std::log(0.05), std::log(0.3));
    for (Trajectory& t : d.validation) {
      const double s = std::exp(log_scale(rng));
      for (Pose6d& p : t.poses) p.t *= s;
    }
    return d;
  }();
  return data;
}

TrainConfig cv_config(bool centralize, bool scale_augment) {
  TrainConfig c;
  c.epochs = 200;
  c.batch_size = 8;
  c.seed = 11;
  c.centralize = centralize;
  c.scale_augment = scale_augment;
  return c;
}

struct CvRun {
  TrainResult result;
  double initial = 0.0;
  double best = 0.0;
  double baseline = 0.0;  // zero-motion predictor
  double drop = 0.0;      // (initial - best) / |initial|
  double error_ratio = 0.0;
  double secs = 0.0;
};

CvRun run_cv(bool centralize, bool scale_augment) {
  const auto t0 = Clock::now();
  const CvData& d = cv_data();
  const TrainConfig cfg = cv_config(centralize, scale_augment);
  CvRun run;
  run.result = train(d.train, cfg, d.validation);
  run.secs = seconds_since(t0);
  run.initial = run.result.history.front().val_nll;
  run.best = run.initial;
  for (const EpochRecord& e : run.result.history) run.best = std::min(run.best, e.val_nll);
  run.drop = (run.initial - run.best) / std::abs(run.initial);
  run.baseline = zero_predictor_nll(run.result.validation, cfg.nll());
  double ratio = 0.0;
  for (const PoseWindow& w : run.result.validation) {
    const Prediction p = forward(run.result.params, w);
    const double disp = (w.target.t - w.inputs.back().t).norm();
    ratio += (p.pose_m.vector() - w.target.vector()).norm() / disp;
  }
  run.error_ratio = ratio / static_cast<double>(run.result.validation.size());
  return run;
}

const CvRun& full_run() {
  static const CvRun run = run_cv(true, true);
  return run;
}

bool learns(const CvRun& r) { return r.drop >= 0.5 && r.error_ratio < 0.05; }

Outcome ppnet_learning() {
  const CvRun& r = full_run();
  return {learns(r) && r.secs < 300.0,
          fmt("val NLL %.3f -> %.3f (drop %.0f%%, need >= 50%%), pose error %.2f%% of per-frame "
              "displacement (< 5%%), %.1f s (< 300 s)",
              r.initial, r.best, 100.0 * r.drop, 100.0 * r.error_ratio, r.secs)};
}

Outcome ablation() {
  const CvRun& both = full_run();
  const CvRun no_central = run_cv(false, true);
  const CvRun no_scale = run_cv(true, false);
  auto beats = [](const CvRun& r) { return r.best < r.baseline; };
  const bool pass = learns(both) && beats(both) && !beats(no_central) && !learns(no_central) &&
                    !beats(no_scale) && !learns(no_scale);
  return {pass, fmt("best val NLL vs zero-motion baseline: full %.3f vs %.3f; w/o centralization "
                    "%.3f vs %.3f; w/o scale augmentation %.3f vs %.3f",
                    both.best, both.baseline, no_central.best, no_central.baseline, no_scale.best,
                    no_scale.baseline)};
}

struct WindowStats {
  double uncertainty = 0.0;  // mean total uncertainty
  double error_ratio = 0.0;  // mean pose error over per-frame displacement
  std::size_t count = 0;
};

WindowStats window_stats(const PPnetParams& m, const std::vector<Trajectory>& trajs,
                         std::size_t window) {
  WindowStats s;
  for (const Trajectory& t : trajs) {
    for (const PoseWindow& raw : sliding_windows(t, window)) {
      const PoseWindow w = centralize(raw);
      const Prediction p = forward(m, w);
      s.uncertainty += total_uncertainty(p);
      s.error_ratio += (p.pose_m.vector() - w.target.vector()).norm() /
                       (w.target.t - w.inputs.back().t).norm();
      ++s.count;
    }
  }
  s.uncertainty /= static_cast<double>(s.count);
  s.error_ratio /= static_cast<double>(s.count);
  return s;
}

Outcome calibration() {
  const CvRun& r = full_run();
  const std::size_t window = cv_config(true, true).window;
  const std::vector<Trajectory>& val = cv_data().validation;
  std::vector<Trajectory> reversed = val, fast = val;
  for (Trajectory& t : reversed) std::reverse(t.poses.begin(), t.poses.end());
  for (Trajectory& t : fast) {
    for (Pose6d& p : t.poses) p.t *= 5.0;
  }
  const WindowStats in = window_stats(r.result.params, val, window);
  const WindowStats rev = window_stats(r.result.params, reversed, window);
  const WindowStats fst = window_stats(r.result.params, fast, window);
  // Out-of-distribution set: the union of reversed and 5x-speed windows.
  const double ood = (rev.uncertainty * static_cast<double>(rev.count) +
                      fst.uncertainty * static_cast<double>(fst.count)) /
                     static_cast<double>(rev.count + fst.count);
  return {ood >= 2.0 * in.uncertainty,
          fmt("mean total uncertainty: in-distribution %.3g; out-of-distribution %.3g (x%.3g, "
              "need >= x2) of which reversed %.3g (x%.3g, error %.1f%%) and 5x speed %.3g "
              "(x%.3g, error %.1f%%)",
              in.uncertainty, ood, ood / in.uncertainty, rev.uncertainty,
              rev.uncertainty / in.uncertainty, 100.0 * rev.error_ratio, fst.uncertainty,
              fst.uncertainty / in.uncertainty, 100.0 * fst.error_ratio)};
}

// ---------------------------------------------------------------------------------------------
// 7. Metrics against brute-force oracles and drift fixtures.

Trajectory straight_line(std::size_t n, double step) {
  Trajectory t;
  for (std::size_t i = 0; i < n; ++i) {
    t.poses.push_back({Vector3d(step * static_cast<double>(i), 0.0, 0.0), Vector3d::Zero()});
  }
  return t;
}

Outcome metrics_oracle() {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::vector<double> lengths{10, 25, 50, 100};

  // Five constructed (estimate, reference) pairs.
  std::vector<std::pair<Trajectory, Trajectory>> cases;
  {
    const Trajectory ref = oracle::random_walk(rng, 400, 1.0);
    Trajectory est = ref;
    for (Pose6d& p : est.poses) p.t += 0.3 * Vector3d(g(rng), g(rng), g(rng));
    cases.emplace_back(est, ref);
  }
  {
    // Similarity-transformed copy with noise.
    const Trajectory ref = oracle::random_walk(rng, 300, 0.5);
    const Matrix3d R = rotation_exp(Vector3d(0.3, -0.2, 1.1));
    Trajectory est;
    for (const Pose6d& p : ref.poses) {
      const Vector3d noise(g(rng), g(rng), g(rng));
      const Matrix3d rot = R * rotation_exp(p.r);
      est.poses.push_back({0.37 * (R * p.t) + Vector3d(5, -2, 1) + 0.05 * noise,
                           rotation_log_any(rot)});
    }
    cases.emplace_back(est, ref);
  }
  {
    // Circle with a drifting estimate.
    Trajectory ref, est;
    for (int i = 0; i < 360; ++i) {
      const double a = i * std::numbers::pi / 180.0;
      ref.poses.push_back({Vector3d(50 * std::cos(a), 50 * std::sin(a), 0), Vector3d(0, 0, a)});
      est.poses.push_back({Vector3d(51 * std::cos(a * 1.01), 50.5 * std::sin(a * 1.01), 0.01 * i),
                           Vector3d(0, 0.001 * i, a * 1.01)});
    }
    for (Pose6d& p : ref.poses) p.r = rotation_log_any(rotation_exp(p.r));
    for (Pose6d& p : est.poses) p.r = rotation_log_any(rotation_exp(p.r));
    cases.emplace_back(est, ref);
  }
  {
    // Helix against a corrupted synthetic VO run.
    MotionProfile prof;
    prof.segments = {{250, 0.8, 0.02, 0.002}};
    const Trajectory ref = generate_trajectory(prof);
    NoiseModel nm;
    nm.sigma_t = 0.02;
    nm.sigma_r = 0.002;
    nm.scale_drift = 1.001;
    cases.emplace_back(corrupt(ref, nm, 5), ref);
  }
  {
    // Urban fixture from the standard suite.
    const Fixture f = build_fixture(standard_suite().front());
    cases.emplace_back(f.noisy, f.ground_truth);
  }

  double ate_err = 0.0, rel_err = 0.0;
  for (const auto& [est, ref] : cases) {
    for (AlignMode mode : {AlignMode::kSim3, AlignMode::kSE3}) {
      const double mine = ate(est, ref, mode);
      const double theirs = oracle::ate(est, ref, mode == AlignMode::kSim3);
      ate_err = std::max(ate_err, std::abs(mine - theirs));
    }
    const RelativeErrors mine = relative_errors(est, ref, lengths);
    const oracle::Relative theirs = oracle::relative(est, ref, lengths);
    rel_err = std::max({rel_err, std::abs(mine.t_err_pct - theirs.t_err_pct),
                        std::abs(mine.r_err_deg_per_100m - theirs.r_err_deg_per_100m),
                        mine.spans == theirs.spans ? 0.0 : 1.0});
  }

  // 1% translation drift: every estimated step is 1% longer.
  const Trajectory ref = straight_line(1001, 1.0);
  Trajectory drift = ref;
  for (std::size_t i = 0; i < drift.size(); ++i) drift[i].t *= 1.01;
  const double t_err = relative_errors(drift, ref).t_err_pct;

  // 0.01 degree of yaw per metre travelled.
  const Pose6d yaw_step{Vector3d(1, 0, 0), Vector3d(0, 0, 0.01 * std::numbers::pi / 180.0)};
  const std::vector<Pose6d> steps(1000, yaw_step);
  const Trajectory yaw = chain_steps(Pose6d::Zero(), steps);
  const double r_err = relative_errors(yaw, ref).r_err_deg_per_100m;

  const bool pass = ate_err < 1e-6 && rel_err < 1e-6 && std::abs(t_err - 1.0) <= 0.05 &&
                    std::abs(r_err - 1.0) <= 0.05;
  return {pass, fmt("5 fixtures: max |ATE - oracle| %.2e m, max relative-error gap %.2e (< 1e-6); "
                    "1%% drift t_err %.4f%% (1 +- 0.05); yaw drift r_err %.4f deg/100m (1 +- 0.05)",
                    ate_err, rel_err, t_err, r_err)};
}

// ---------------------------------------------------------------------------------------------
// 8-9. Motion-hint refinement on the standard suite.

struct SuiteRun {
  std::vector<FixtureComparison> rows;
  double tau = 0.0;
  double secs = 0.0;
};

const SuiteRun& suite_run() {
  static const SuiteRun run = [] {
    const auto t0 = Clock::now();
    SuiteRun s;
    const HarnessModel model = train_harness_model({});
    s.tau = model.tau;
    RefineConfig rc;
    rc.confidence.tau = model.tau;
    for (const FixtureSpec& spec : standard_suite()) {
      s.rows.push_back(compare_on_fixture(build_fixture(spec), model.params, rc, AlignMode::kSim3));
    }
    s.secs = seconds_since(t0);
    for (const FixtureComparison& c : s.rows) {
      std::printf("    %-20s noisy %8.4f  origin-only %8.4f  gated %8.4f (%+6.2f%%)  "
                  "ungated %8.4f  gated frames %zu\n",
                  c.name.c_str(), c.ate_noisy, c.ate_baseline, c.ate_gated, -100.0 * c.reduction(),
                  c.ate_ungated, c.gated_frames);
    }
    return s;
  }();
  return run;
}

Outcome motion_hint_effect() {
  const SuiteRun& s = suite_run();
  std::size_t improved = 0, worsened = 0;
  for (const FixtureComparison& c : s.rows) {
    if (c.reduction() >= 0.10) ++improved;
    if (c.ate_gated > 1.02 * c.ate_baseline) ++worsened;
  }
  return {improved >= 7 && worsened == 0 && s.secs < 600.0,
          fmt("ATE reduced >= 10%% on %zu/9 fixtures (need >= 7), worsened > 2%% on %zu (need 0), "
              "%.0f s (< 600 s)",
              improved, worsened, s.secs)};
}

Outcome gating_ablation() {
  const SuiteRun& s = suite_run();
  std::size_t ok = 0;
  for (const FixtureComparison& c : s.rows) ok += c.ate_gated <= c.ate_ungated ? 1 : 0;
  return {ok >= 7, fmt("gated ATE <= ungated ATE on %zu/9 fixtures (need >= 7), tau %.3g", ok,
                       s.tau)};
}

// ---------------------------------------------------------------------------------------------
// 10. Loss rebalancing.

Outcome mlra_behaviour() {
  auto run = [](double lambda, std::array<double, 2> start, std::array<double, 2> end) {
    LossWeights w;
    w.lambda = lambda;
    w.period = 10;
    w = mlra_update(w, start, 1);
    return mlra_update(w, end, 9);
  };
  const LossWeights l0 = run(0.0, {1.0, 2.0}, {0.1, 1.9});
  const LossWeights eq = run(1.0, {2.0, 4.0}, {1.0, 2.0});
  const LossWeights r = run(1.0, {1.0, 1.0}, {0.9, 0.3});
  bool sums = true;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(1e-3, 10.0);
  for (int i = 0; i < 1000; ++i) {
    const LossWeights x = run(u(rng), {u(rng), u(rng)}, {u(rng), u(rng)});
    sums = sums && std::abs(x.w[0] + x.w[1] - 1.0) < 1e-12;
  }
  LossWeights once;
  once.period = 5;
  std::array<double, 2> prev = once.w;
  std::size_t changes = 0;
  for (int i = 0; i < 100; ++i) {
    once = mlra_update(once, {1.0 / (i + 1), 1.0 / (i + 2.0 * i + 1)}, 1);
    if (once.w != prev) ++changes;
    prev = once.w;
  }
  const bool pass = l0.w == std::array<double, 2>{0.5, 0.5} &&
                    std::abs(eq.w[0] - 0.5) < 1e-15 && std::abs(eq.w[1] - 0.5) < 1e-15 &&
                    std::abs(r.w[0] - 0.75) < 1e-15 && std::abs(r.w[1] - 0.25) < 1e-15 && sums &&
                    once.updates_done == 1 && changes <= 1;
  return {pass, fmt("lambda=0 -> (%.3g, %.3g); equal ratios -> (%.3g, %.3g); ratios (0.9, 0.3) -> "
                    "(%.17g, %.17g); sums to 1: %s; updates with max_updates=1: %zu",
                    l0.w[0], l0.w[1], eq.w[0], eq.w[1], r.w[0], r.w[1], sums ? "yes" : "no",
                    once.updates_done)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria = {
      {1, {"SE(3) correctness", se3_correctness}},
      {2, {"gradient fidelity", gradient_fidelity}},
      {3, {"loss closed forms", loss_closed_forms}},
      {4, {"PPnet learning", ppnet_learning}},
      {5, {"centralization / augmentation ablation", ablation}},
      {6, {"uncertainty calibration", calibration}},
      {7, {"metrics oracle", metrics_oracle}},
      {8, {"end-to-end motion-hint effect", motion_hint_effect}},
      {9, {"gating ablation", gating_ablation}},
      {10, {"loss rebalancing", mlra_behaviour}},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int id = std::atoi(argv[i]);
    if (!criteria.contains(id)) {
      std::fprintf(stderr, "unknown criterion '%s'\n", argv[i]);
      return 2;
    }
    selected.insert(id);
  }
  if (selected.empty()) {
    for (const auto& [id, _] : criteria) selected.insert(id);
  }

  int failed = 0;
  for (int id : selected) {
    const auto& [name, fn] = criteria.at(id);
    const Outcome o = fn();
    std::printf("[%s] criterion %2d  %-40s %s\n", o.pass ? "PASS" : "FAIL", id, name,
                o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%zu criteria, %d failed\n", selected.size(), failed);
  return failed == 0 ? 0 : 1;
}
