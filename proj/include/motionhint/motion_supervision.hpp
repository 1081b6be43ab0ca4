#pragma once

// Phase-3 supervision: the Pose Manager, pseudo-label construction from PPnet predictions,
// uncertainty gating, the confidence-weighted motion loss and multi-loss rebalancing (MLRA).

#include <array>
#include <cstddef>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "motionhint/ppnet.hpp"

namespace motionhint {

/// Ring buffer of the most recent absolute poses produced by the odometry, in frame order.
class PoseManager {
 public:
  explicit PoseManager(std::size_t capacity);

  /// Appends a pose; frames must be strictly increasing. Evicts the oldest entry when full.
  void record_pose(std::size_t frame, const Pose6d& pose);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

  std::optional<std::size_t> oldest_frame() const;
  std::optional<std::size_t> latest_frame() const;
  const Pose6d& latest() const;

  /// True when the newest `n` entries cover consecutive frames.
  bool has_window(std::size_t n) const;
  /// The newest `n` poses, oldest first. Requires has_window(n).
  std::vector<Pose6d> recent(std::size_t n) const;

 private:
  struct Entry {
    std::size_t frame;
    Pose6d pose;
  };
  std::size_t capacity_;
  std::deque<Entry> entries_;
};

struct ConfidenceParams {
  // Threshold on total uncertainty above which a pseudo label is skipped.
  double tau = std::numeric_limits<double>::infinity();
  // c = exp(-alpha * total uncertainty).
  double alpha = 1.0;
  // When false, every label gets c = 1 (uncertainty ignored).
  bool weight_by_uncertainty = true;

  void validate() const;
};

/// The given percentile (0..100, linear interpolation) of total uncertainty over prepared
/// windows; the default gate threshold is the 90th percentile on the validation windows.
double uncertainty_percentile(const PPnetParams& model, std::span<const PoseWindow> windows,
                              double percentile);

/// c = exp(-alpha * sum(sigma)), in (0, 1].
double confidence(const Vector6d& sigma, const ConfidenceParams& cp);

enum class LabelStatus {
  kOk,
  kInsufficientHistory,
  kGated,     // total uncertainty above tau
  kSingular,  // relative rotation too close to pi
};

struct PseudoLabel {
  LabelStatus status = LabelStatus::kInsufficientHistory;
  Pose6d relative;         // p^m_{(t-1),t}
  Pose6d predicted_world;  // p^m_t, de-centralized to the world frame
  double confidence = 0.0;
  double total_uncertainty = std::numeric_limits<double>::quiet_NaN();

  bool has_value() const { return status == LabelStatus::kOk; }
  explicit operator bool() const { return has_value(); }
};

/// Builds the pseudo label for the frame following the manager's newest pose:
/// centralize the newest `window` poses, predict, de-centralize, gate on total uncertainty,
/// then express the predicted pose relative to the newest pose.
PseudoLabel pseudo_label(const PPnetParams& model, const PoseManager& manager,
                         const ConfidenceParams& cp, std::size_t window = 20);

/// c * ||pseudo - predicted||_2 over the 6-vector representation.
double motion_loss(const Pose6d& pseudo, const Pose6d& predicted, double c);

/// Multi-loss rebalancing state for (L_origin, L_motion).
struct LossWeights {
  std::array<double, 2> w{0.5, 0.5};
  std::array<double, 2> period_start{0.0, 0.0};
  std::size_t samples_since_update = 0;
  double lambda = 1.0;
  std::size_t period = 1250;
  std::size_t max_updates = 1;
  std::size_t updates_done = 0;

  static LossWeights Fixed(double w_origin, double w_motion);
};

inline constexpr double kMlraEpsilon = 1e-12;

/// Advances the sample counter by `samples`. The first call of a period snapshots the losses;
/// when the counter reaches the period (and fewer than max_updates updates have happened) the
/// weights become r_i^lambda / sum_j r_j^lambda with r_i = L_i(now) / L_i(period start).
LossWeights mlra_update(LossWeights state, const std::array<double, 2>& current_losses,
                        std::size_t samples = 1);

double combined_loss(double l_origin, double l_motion, const LossWeights& weights);

}  // namespace motionhint
