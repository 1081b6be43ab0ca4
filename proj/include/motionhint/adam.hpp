#pragma once

#include <Eigen/Core>

#include <cmath>

namespace motionhint {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  void reset(Eigen::Index size) {
    m = Eigen::VectorXd::Zero(size);
    v = Eigen::VectorXd::Zero(size);
    step = 0;
  }
};

/// One Adam update with bias correction, in place on `x`.
template <typename Derived, typename GradDerived>
void adam_update(Eigen::MatrixBase<Derived>& x, const Eigen::MatrixBase<GradDerived>& grad,
                 AdamState& state, const AdamConfig& config) {
  if (state.m.size() != x.size()) state.reset(x.size());
  ++state.step;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  x -= (config.learning_rate * (state.m / c1).array() /
        ((state.v / c2).array().sqrt() + config.epsilon))
           .matrix();
}

}  // namespace motionhint
