#pragma once

// PPnet: a single-layer LSTM (6 -> 8) with two linear heads that predict the next pose of a
// centralized pose window and a per-dimension uncertainty, trained with the power-exponential
// negative log likelihood
//
//   L = gamma * sum_j log(Sigma_j) + (sum_j (y_j - p_j)^2 / Sigma_j)^k.

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "motionhint/adam.hpp"
#include "motionhint/trajectory.hpp"

namespace motionhint {

inline constexpr int kPoseDim = 6;
inline constexpr int kHiddenUnits = 8;
inline constexpr int kGateRows = 4 * kHiddenUnits;

/// Network weights. Gate rows are ordered (input, forget, cell, output), 8 rows each.
struct PPnetParams {
  static constexpr int kFormatVersion = 1;

  Eigen::Matrix<double, kGateRows, kPoseDim> w_input;
  Eigen::Matrix<double, kGateRows, kHiddenUnits> w_recurrent;
  Eigen::Matrix<double, kGateRows, 1> b_gates;
  Eigen::Matrix<double, kPoseDim, kHiddenUnits> w_pose;
  Vector6d b_pose;
  Eigen::Matrix<double, kPoseDim, kHiddenUnits> w_logvar;
  Vector6d b_logvar;

  static constexpr Eigen::Index kSize = kGateRows * kPoseDim + kGateRows * kHiddenUnits +
                                        kGateRows + 2 * (kPoseDim * kHiddenUnits + kPoseDim);

  static PPnetParams Zero();
  /// Orthogonal recurrent blocks, forget-gate bias 1, uniform(+-1/sqrt(8)) elsewhere.
  static PPnetParams Initialize(std::uint64_t seed);

  Eigen::VectorXd flatten() const;
  static PPnetParams unflatten(const Eigen::VectorXd& v);

  bool allFinite() const;

  PPnetParams& operator+=(const PPnetParams& o);
  PPnetParams& operator*=(double s);
};

/// Predicted next pose p^m (centralized frame) and its per-dimension uncertainty Sigma > 0.
struct Prediction {
  Pose6d pose_m;
  Vector6d sigma;
};

struct NllConfig {
  double gamma = 0.1;
  double k = 0.5;
};

/// Runs the LSTM over the window inputs in temporal order and reads both heads from the final
/// hidden state. The window must already be centralized and scaled.
Prediction forward(const PPnetParams& params, const PoseWindow& window);

double nll_loss(const Prediction& pred, const Pose6d& target, double gamma, double k);
inline double nll_loss(const Prediction& pred, const Pose6d& target, const NllConfig& c) {
  return nll_loss(pred, target, c.gamma, c.k);
}

/// Sum of the six uncertainty entries.
double total_uncertainty(const Prediction& pred);

struct LossGradient {
  double loss = 0.0;  // mean NLL over the batch
  PPnetParams grad;
};

/// Exact gradient of the mean NLL over prepared windows (target stored in each window),
/// back-propagated through the full recurrent unroll.
LossGradient loss_gradient(const PPnetParams& params, std::span<const PoseWindow> batch,
                           const NllConfig& nll);

/// Mean NLL over prepared windows.
double mean_nll(const PPnetParams& params, std::span<const PoseWindow> windows,
                const NllConfig& nll);

void adam_step(PPnetParams& params, const PPnetParams& grads, AdamState& state,
               const AdamConfig& config);

struct TrainConfig {
  std::size_t window = 20;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  double gamma = 0.1;
  double k = 0.5;
  std::uint64_t seed = 1;
  // Log-uniform sampling range of the translation scale factor.
  double scale_min = 0.02;
  double scale_max = 1.5;
  bool centralize = true;
  bool scale_augment = true;
  // Fraction of windows at the end of each trajectory held out for validation.
  double validation_fraction = 0.1;

  void validate() const;
  NllConfig nll() const { return {gamma, k}; }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_nll = std::numeric_limits<double>::quiet_NaN();
  double val_nll = 0.0;
};

struct TrainResult {
  PPnetParams params;          // lowest validation NLL seen
  std::size_t best_epoch = 0;  // 0 = untrained initialization
  std::vector<EpochRecord> history;
  std::vector<PoseWindow> validation;  // prepared validation windows
};

/// Applies the training-time preprocessing to a raw window: optional scaling, then optional
/// centralization.
PoseWindow prepare_window(const PoseWindow& raw, double scale, bool centralize);

/// Trains PPnet. Windows are taken from every trajectory in `dataset`; when `validation` is
/// empty the last `validation_fraction` of each trajectory's windows is held out (with a fixed
/// random scale per window when augmenting), otherwise every window of `validation` is used
/// unscaled. Deterministic for a fixed seed.
TrainResult train(std::span<const Trajectory> dataset, const TrainConfig& config,
                  std::span<const Trajectory> validation = {});

/// Zero-motion baseline: the best mean NLL achievable by predicting the window's centre pose
/// (the zero pose for centralized windows) with a constant, fitted uncertainty.
double zero_predictor_nll(std::span<const PoseWindow> windows, const NllConfig& nll);

void save_model(std::ostream& out, const PPnetParams& params);
PPnetParams load_model(std::istream& in);
void save_model_file(const std::string& path, const PPnetParams& params);
PPnetParams load_model_file(const std::string& path);

}  // namespace motionhint
