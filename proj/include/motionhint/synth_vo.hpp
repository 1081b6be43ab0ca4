#pragma once

// Synthetic visual-odometry harness: ground-truth motion profiles, a VO corruption model with
// white noise, scale drift and biased segments, and a test-time corrector refined with the
// origin loss plus the PPnet motion loss.

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "motionhint/adam.hpp"
#include "motionhint/metrics.hpp"
#include "motionhint/motion_supervision.hpp"
#include "motionhint/ppnet.hpp"

namespace motionhint {

/// Piecewise-constant commanded motion, per frame.
struct MotionSegment {
  std::size_t frames = 0;
  double speed = 0.0;       // metres per frame
  double yaw_rate = 0.0;    // radians per frame
  double pitch_rate = 0.0;  // radians per frame
};

struct MotionProfile {
  std::string name;
  std::vector<MotionSegment> segments;
  double frame_period = 0.1;
  // Commands blend smoothly into each new segment over this many frames.
  std::size_t ramp_frames = 10;
  double speed_jitter = 0.0;  // relative, per frame
  double yaw_jitter = 0.0;    // radians per frame
  std::uint64_t seed = 0;

  std::size_t frames() const;  // poses generated, including the start pose
};

enum class MotionFamily { kUrban, kHighway, kFigureEight };

MotionFamily parse_motion_family(const std::string& s);
std::string to_string(MotionFamily f);

/// A random profile of the given family with at least `min_frames` poses.
MotionProfile random_profile(MotionFamily family, std::uint64_t seed, std::size_t min_frames);

/// Integrates the profile from the identity pose; x is forward, z is up.
Trajectory generate_trajectory(const MotionProfile& profile);

/// Constant offset added to every relative step in [first, last).
struct BiasSegment {
  std::size_t first = 0;
  std::size_t last = 0;
  Vector6d offset = Vector6d::Zero();
};

/// Corruption of ground-truth relative steps. Step i becomes
///   t' = global_scale * scale_drift^i * (t + bias_t + n_t),   r' = r + bias_r + n_r
/// with n ~ N(0, sigma^2) per component.
struct NoiseModel {
  double sigma_t = 0.0;
  double sigma_r = 0.0;
  double scale_drift = 1.0;
  double global_scale = 1.0;
  std::vector<BiasSegment> bias;

  void validate() const;
};

Trajectory corrupt(const Trajectory& gt, const NoiseModel& noise, std::uint64_t seed);

/// Per-segment correction of relative steps: 6 additive components and a log translation scale,
/// shared by `segment_length` consecutive steps. Corrected step = (e^s t + dt, r + dr).
struct Corrector {
  static constexpr int kParamsPerSegment = 7;

  std::size_t segment_length = 25;
  Eigen::VectorXd params;

  static Corrector Zero(std::size_t steps, std::size_t segment_length);
  std::size_t segments() const {
    return static_cast<std::size_t>(params.size()) / kParamsPerSegment;
  }
  std::size_t segment_of(std::size_t step) const { return step / segment_length; }

  std::vector<Pose6d> apply(const std::vector<Pose6d>& steps) const;
  /// Chain rule from d/d(corrected step) to d/d(params).
  Eigen::VectorXd backprop(const std::vector<Pose6d>& steps,
                           const std::vector<Vector6d>& grad_steps) const;
};

/// Sum of squared deviations of the corrected steps from the input steps.
double origin_loss(const std::vector<Pose6d>& corrected, const std::vector<Pose6d>& input,
                   std::vector<Vector6d>* grad = nullptr);

struct RefineConfig {
  std::size_t window = 20;
  std::size_t iterations = 200;
  std::size_t segment_length = 25;
  AdamConfig adam{};
  ConfidenceParams confidence{};
  bool use_motion = true;
  // Initial weights and rebalancing schedule; period counts supervised (ungated) frames.
  std::array<double, 2> initial_weights{0.5, 0.5};
  double lambda = 1.0;
  std::size_t mlra_period = 1250;
  std::size_t mlra_max_updates = 1;
  // Origin-loss values fed to rebalancing are floored here: the loss starts at exactly zero.
  double origin_floor = 1e-4;

  void validate() const;
};

struct IterationRecord {
  std::size_t iteration = 0;
  double l_origin = 0.0;
  double l_motion = 0.0;
  double total = 0.0;
  double w_origin = 0.0;
  double w_motion = 0.0;
  std::size_t supervised = 0;
  std::size_t gated = 0;
};

struct FrameRecord {
  std::size_t frame = 0;
  bool gated = false;
  double total_uncertainty = 0.0;
  double confidence = 0.0;
  double l_motion = 0.0;
};

struct RefineResult {
  Trajectory corrected;
  Corrector corrector;
  LossWeights weights;
  std::vector<IterationRecord> iterations;
  std::vector<FrameRecord> frames;  // pseudo-label status on the final corrected trajectory
};

/// Thrown when a refinement loss turns non-finite; carries the log up to that iteration.
class RefineDivergedError : public NumericError {
 public:
  RefineDivergedError(const std::string& what, std::vector<IterationRecord> log)
      : NumericError(what), iterations(std::move(log)) {}
  std::vector<IterationRecord> iterations;
};

/// Runs the pose manager over the trajectory and returns one label per step index
/// (step t-1 -> t). Steps without enough history get kInsufficientHistory.
std::vector<PseudoLabel> pseudo_labels(const PPnetParams& model, const Trajectory& traj,
                                       const ConfidenceParams& cp, std::size_t window);

RefineResult refine(const Trajectory& noisy, const PPnetParams& model, const RefineConfig& cfg);

/// One generated evaluation case.
struct FixtureSpec {
  std::string name;
  MotionProfile profile;
  NoiseModel noise;
  std::uint64_t noise_seed = 0;
};

struct Fixture {
  FixtureSpec spec;
  Trajectory ground_truth;
  Trajectory noisy;
};

Fixture build_fixture(const FixtureSpec& spec);

/// Three motion families at three noise levels, from fixed seeds.
std::vector<FixtureSpec> standard_suite();

/// Ground-truth trajectories for PPnet training, drawn from the same families with seeds that
/// never overlap the evaluation suite.
std::vector<Trajectory> training_trajectories(std::size_t per_family, std::size_t frames,
                                              std::uint64_t seed);

/// Straight constant-velocity trajectories with random heading and speed in [speed_min,
/// speed_max] metres per frame, plus small pose jitter.
std::vector<Trajectory> constant_velocity_trajectories(std::size_t count, std::size_t frames,
                                                       double speed_min, double speed_max,
                                                       std::uint64_t seed);

/// Recipe for the PPnet used by the refinement harness: family trajectories with disjoint
/// seeds, perturbed by VO-like step noise so the model tolerates noisy inputs, validated on
/// held-out family trajectories at the suite's global scale.
struct HarnessModelConfig {
  std::size_t per_family = 10;
  std::size_t frames = 300;
  std::size_t validation_per_family = 3;
  double train_sigma_t = 0.02;
  double train_sigma_r = 1e-3;
  double validation_scale = 0.1;
  double tau_percentile = 90.0;
  TrainConfig train = [] {
    TrainConfig t;
    t.batch_size = 8;
    t.epochs = 150;
    return t;
  }();
};

struct HarnessModel {
  PPnetParams params;
  double tau = 0.0;  // tau_percentile of validation total uncertainty
  TrainResult training;
};

HarnessModel train_harness_model(const HarnessModelConfig& cfg);

/// ATE of the origin-only baseline, the gated motion run and the ungated (c = 1, no threshold)
/// motion run on one fixture.
struct FixtureComparison {
  std::string name;
  double ate_noisy = 0.0;
  double ate_baseline = 0.0;
  double ate_gated = 0.0;
  double ate_ungated = 0.0;
  std::size_t gated_frames = 0;

  double reduction() const { return 1.0 - ate_gated / ate_baseline; }
};

FixtureComparison compare_on_fixture(const Fixture& fixture, const PPnetParams& model,
                                     const RefineConfig& gated, AlignMode align);

}  // namespace motionhint
