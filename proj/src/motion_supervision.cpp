#include "motionhint/motion_supervision.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace motionhint {

PoseManager::PoseManager(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw InvalidArgumentError("PoseManager capacity must be positive");
}

void PoseManager::record_pose(std::size_t frame, const Pose6d& pose) {
  if (!entries_.empty() && frame <= entries_.back().frame) {
    throw OrderingError("PoseManager: frame " + std::to_string(frame) +
                        " does not follow frame " + std::to_string(entries_.back().frame));
  }
  if (!pose.allFinite()) throw InvalidPoseError("PoseManager: non-finite pose");
  entries_.push_back({frame, pose});
  if (entries_.size() > capacity_) entries_.pop_front();
}

std::optional<std::size_t> PoseManager::oldest_frame() const {
  if (entries_.empty()) return std::nullopt;
  return entries_.front().frame;
}

std::optional<std::size_t> PoseManager::latest_frame() const {
  if (entries_.empty()) return std::nullopt;
  return entries_.back().frame;
}

const Pose6d& PoseManager::latest() const {
  if (entries_.empty()) throw InvalidArgumentError("PoseManager is empty");
  return entries_.back().pose;
}

bool PoseManager::has_window(std::size_t n) const {
  if (n == 0 || entries_.size() < n) return false;
  const std::size_t first = entries_.size() - n;
  return entries_.back().frame - entries_[first].frame == n - 1;
}

std::vector<Pose6d> PoseManager::recent(std::size_t n) const {
  if (!has_window(n)) throw InvalidArgumentError("PoseManager: not enough consecutive poses");
  std::vector<Pose6d> out;
  out.reserve(n);
  for (std::size_t i = entries_.size() - n; i < entries_.size(); ++i) {
    out.push_back(entries_[i].pose);
  }
  return out;
}

void ConfidenceParams::validate() const {
  if (!(tau > 0.0)) throw InvalidArgumentError("uncertainty threshold must be positive");
  if (!(alpha > 0.0)) throw InvalidArgumentError("confidence scale must be positive");
}

double confidence(const Vector6d& sigma, const ConfidenceParams& cp) {
  if (!cp.weight_by_uncertainty) return 1.0;
  return std::exp(-cp.alpha * sigma.sum());
}

PseudoLabel pseudo_label(const PPnetParams& model, const PoseManager& manager,
                         const ConfidenceParams& cp, std::size_t window) {
  PseudoLabel label;
  if (!manager.has_window(window)) return label;

  PoseWindow raw;
  raw.inputs = manager.recent(window);
  const Pose6d& previous = raw.inputs.back();
  const TransformSE3d anchor = pose_to_transform(raw.inputs[raw.center_index()]);
  try {
    const Prediction pred = forward(model, centralize(raw));
    label.total_uncertainty = total_uncertainty(pred);
    label.predicted_world =
        transform_to_absolute_pose(compose(anchor, pose_to_transform(pred.pose_m)));
    if (label.total_uncertainty > cp.tau) {
      label.status = LabelStatus::kGated;
      return label;
    }
    label.relative = relative_pose(previous, label.predicted_world);
    label.confidence = confidence(pred.sigma, cp);
    label.status = LabelStatus::kOk;
  } catch (const NearSingularLogError&) {
    label.status = LabelStatus::kSingular;
  }
  return label;
}

double motion_loss(const Pose6d& pseudo, const Pose6d& predicted, double c) {
  return c * (pseudo.vector() - predicted.vector()).norm();
}

LossWeights LossWeights::Fixed(double w_origin, double w_motion) {
  LossWeights lw;
  lw.w = {w_origin, w_motion};
  lw.max_updates = 0;
  return lw;
}

LossWeights mlra_update(LossWeights state, const std::array<double, 2>& current_losses,
                        std::size_t samples) {
  if (state.updates_done >= state.max_updates || state.period == 0 || samples == 0) {
    return state;
  }
  if (state.samples_since_update == 0) state.period_start = current_losses;
  state.samples_since_update += samples;
  if (state.samples_since_update < state.period) return state;

  std::array<double, 2> powered{};
  double total = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    const double end = std::max(current_losses[i], kMlraEpsilon);
    const double start = std::max(state.period_start[i], kMlraEpsilon);
    powered[i] = std::pow(end / start, state.lambda);
    total += powered[i];
  }
  for (std::size_t i = 0; i < 2; ++i) state.w[i] = powered[i] / total;
  state.samples_since_update = 0;
  ++state.updates_done;
  return state;
}

double combined_loss(double l_origin, double l_motion, const LossWeights& weights) {
  return weights.w[0] * l_origin + weights.w[1] * l_motion;
}

double uncertainty_percentile(const PPnetParams& model, std::span<const PoseWindow> windows,
                              double percentile) {
  if (windows.empty()) throw InvalidArgumentError("no windows to measure uncertainty on");
  if (!(percentile >= 0.0 && percentile <= 100.0)) {
    throw InvalidArgumentError("percentile must lie in [0, 100]");
  }
  std::vector<double> u;
  u.reserve(windows.size());
  for (const PoseWindow& w : windows) u.push_back(total_uncertainty(forward(model, w)));
  std::sort(u.begin(), u.end());
  const double pos = percentile / 100.0 * static_cast<double>(u.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, u.size() - 1);
  return u[lo] + (pos - static_cast<double>(lo)) * (u[hi] - u[lo]);
}

}  // namespace motionhint
